#pragma once

// Process-level tuning for executables. Not called by library code.

#include <malloc.h>

namespace rgmap {

/// Keeps freed multi-megabyte scratch buffers in the heap instead of
/// returning them to the kernel after every use; training loops otherwise
/// spend a third of their time re-faulting the same pages.
inline void tune_allocator() {
#if defined(__GLIBC__)
    mallopt(M_MMAP_THRESHOLD, 32 * 1024 * 1024);
    mallopt(M_TRIM_THRESHOLD, 512 * 1024 * 1024);
    mallopt(M_TOP_PAD, 64 * 1024 * 1024);
#endif
}

} // namespace rgmap
