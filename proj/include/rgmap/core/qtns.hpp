#pragma once

// QTNS tensor files:
//   "QTNS" | u32 version=1 | u32 dtype | u32 ndim | ndim x u64 dims | payload
// All integers and payload little-endian, payload row-major, complex
// interleaved (re, im).

#include "rgmap/core/array.hpp"

#include <bit>
#include <complex>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <variant>

namespace rgmap::qtns {

static_assert(std::endian::native == std::endian::little, "QTNS I/O assumes a little-endian host");

enum class DType : std::uint32_t {
    Float32 = 1,
    Float64 = 2,
    Complex64 = 3,
    Complex128 = 4,
    UInt8 = 5,
    Int32 = 6,
};

inline constexpr char kMagic[4] = {'Q', 'T', 'N', 'S'};
inline constexpr std::uint32_t kVersion = 1;

class QtnsError : public Error {
public:
    using Error::Error;
};
class IoError : public QtnsError {
public:
    using QtnsError::QtnsError;
};
class BadMagicError : public QtnsError {
public:
    using QtnsError::QtnsError;
};
class TruncatedError : public QtnsError {
public:
    using QtnsError::QtnsError;
};
class UnknownDTypeError : public QtnsError {
public:
    using QtnsError::QtnsError;
};
class ZeroSizedError : public QtnsError {
public:
    using QtnsError::QtnsError;
};

template <class T>
struct dtype_of;
template <>
struct dtype_of<float> {
    static constexpr DType value = DType::Float32;
};
template <>
struct dtype_of<double> {
    static constexpr DType value = DType::Float64;
};
template <>
struct dtype_of<std::complex<float>> {
    static constexpr DType value = DType::Complex64;
};
template <>
struct dtype_of<std::complex<double>> {
    static constexpr DType value = DType::Complex128;
};
template <>
struct dtype_of<std::uint8_t> {
    static constexpr DType value = DType::UInt8;
};
template <>
struct dtype_of<std::int32_t> {
    static constexpr DType value = DType::Int32;
};

using AnyArray = std::variant<Array<float>, Array<double>, Array<std::complex<float>>,
                              Array<std::complex<double>>, Array<std::uint8_t>,
                              Array<std::int32_t>>;

inline std::size_t element_size(DType d) {
    switch (d) {
    case DType::Float32: return 4;
    case DType::Float64: return 8;
    case DType::Complex64: return 8;
    case DType::Complex128: return 16;
    case DType::UInt8: return 1;
    case DType::Int32: return 4;
    }
    return 0;
}

inline std::size_t header_size(std::size_t ndim) { return 16 + 8 * ndim; }

template <class T>
void write(const std::filesystem::path& path, const Array<T>& a) {
    if (a.ndim() == 0) throw ZeroSizedError(path.string() + ": zero-sized dimension rejected");
    for (std::size_t d : a.shape())
        if (d == 0) throw ZeroSizedError(path.string() + ": zero-sized dimension rejected");

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open for writing: " + path.string());
    const std::uint32_t version = kVersion;
    const std::uint32_t dtype = static_cast<std::uint32_t>(dtype_of<T>::value);
    const std::uint32_t ndim = static_cast<std::uint32_t>(a.ndim());
    out.write(kMagic, 4);
    out.write(reinterpret_cast<const char*>(&version), 4);
    out.write(reinterpret_cast<const char*>(&dtype), 4);
    out.write(reinterpret_cast<const char*>(&ndim), 4);
    for (std::size_t d : a.shape()) {
        const std::uint64_t d64 = d;
        out.write(reinterpret_cast<const char*>(&d64), 8);
    }
    out.write(reinterpret_cast<const char*>(a.data()),
              static_cast<std::streamsize>(a.size() * sizeof(T)));
    if (!out) throw IoError("write failed: " + path.string());
}

inline void write(const std::filesystem::path& path, const AnyArray& a) {
    std::visit([&](const auto& arr) { write(path, arr); }, a);
}

namespace detail {

template <class T>
Array<T> read_payload(std::ifstream& in, const std::filesystem::path& path, Shape shape) {
    const std::size_t n = shape_size(shape);
    std::vector<T> data(n);
    in.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(n * sizeof(T)));
    const auto got = static_cast<std::size_t>(in.gcount());
    if (got != n * sizeof(T))
        throw TruncatedError(path.string() + ": payload truncated (expected " +
                             std::to_string(n) + " elements, found " +
                             std::to_string(got / sizeof(T)) + ")");
    return Array<T>(std::move(shape), std::move(data));
}

} // namespace detail

inline AnyArray read(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open for reading: " + path.string());
    char magic[4] = {};
    in.read(magic, 4);
    if (in.gcount() != 4 || std::memcmp(magic, kMagic, 4) != 0)
        throw BadMagicError(path.string() + ": bad magic bytes");
    std::uint32_t version = 0, dtype = 0, ndim = 0;
    in.read(reinterpret_cast<char*>(&version), 4);
    in.read(reinterpret_cast<char*>(&dtype), 4);
    in.read(reinterpret_cast<char*>(&ndim), 4);
    if (!in) throw TruncatedError(path.string() + ": header truncated");
    if (version != kVersion)
        throw QtnsError(path.string() + ": unsupported version " + std::to_string(version));
    if (dtype < 1 || dtype > 6)
        throw UnknownDTypeError(path.string() + ": unknown dtype code " + std::to_string(dtype));
    Shape shape(ndim);
    for (auto& d : shape) {
        std::uint64_t d64 = 0;
        in.read(reinterpret_cast<char*>(&d64), 8);
        if (!in) throw TruncatedError(path.string() + ": header truncated");
        if (d64 == 0) throw ZeroSizedError(path.string() + ": zero-sized dimension rejected");
        d = static_cast<std::size_t>(d64);
    }
    if (ndim == 0) throw ZeroSizedError(path.string() + ": zero-sized dimension rejected");

    switch (static_cast<DType>(dtype)) {
    case DType::Float32: return detail::read_payload<float>(in, path, std::move(shape));
    case DType::Float64: return detail::read_payload<double>(in, path, std::move(shape));
    case DType::Complex64:
        return detail::read_payload<std::complex<float>>(in, path, std::move(shape));
    case DType::Complex128:
        return detail::read_payload<std::complex<double>>(in, path, std::move(shape));
    case DType::UInt8: return detail::read_payload<std::uint8_t>(in, path, std::move(shape));
    case DType::Int32: return detail::read_payload<std::int32_t>(in, path, std::move(shape));
    }
    throw UnknownDTypeError(path.string() + ": unknown dtype code");
}

/// Reads and returns the array if its dtype is T; float32 payloads are
/// widened when T is double (and complex64 when T is complex<double>).
template <class T>
Array<T> read_as(const std::filesystem::path& path) {
    AnyArray any = read(path);
    if (auto* p = std::get_if<Array<T>>(&any)) return std::move(*p);
    if constexpr (std::is_same_v<T, double>) {
        if (auto* f = std::get_if<Array<float>>(&any)) {
            Array<double> out(f->shape());
            for (std::size_t i = 0; i < f->size(); ++i) out[i] = (*f)[i];
            return out;
        }
    }
    if constexpr (std::is_same_v<T, std::complex<double>>) {
        if (auto* f = std::get_if<Array<std::complex<float>>>(&any)) {
            Array<T> out(f->shape());
            for (std::size_t i = 0; i < f->size(); ++i) out[i] = T((*f)[i]);
            return out;
        }
    }
    throw QtnsError(path.string() + ": unexpected dtype for requested array type");
}

} // namespace rgmap::qtns
