#pragma once

// 16-bit binary PGM export with a JSON sidecar recording the display window.

#include "rgmap/core/qtns.hpp"

#include "json.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>

namespace rgmap::analysis {

/// Linear map of [lo, hi] onto [0, 65535], clamped and rounded to nearest.
inline std::uint16_t pgm_level(double v, double lo, double hi) {
    if (!(hi > lo)) throw Error("pgm: empty display window");
    if (!std::isfinite(v)) v = lo;
    const double u = std::clamp((v - lo) / (hi - lo), 0.0, 1.0);
    return static_cast<std::uint16_t>(std::lround(u * 65535.0));
}

/// Writes `img` (ny x nx) as P5 with maxval 65535 (big-endian samples) and
/// `<path>.json` holding the window.
inline void write_pgm16(const std::filesystem::path& path, const RArray& img, double lo, double hi) {
    if (img.ndim() != 2) throw ShapeError("write_pgm16: expected a 2-D image");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw qtns::IoError("cannot write " + path.string());
    out << "P5\n" << img.dim(1) << " " << img.dim(0) << "\n65535\n";
    for (double v : img.vec()) {
        const std::uint16_t q = pgm_level(v, lo, hi);
        const char b[2] = {static_cast<char>(q >> 8), static_cast<char>(q & 0xff)};
        out.write(b, 2);
    }
    nlohmann::json side = {{"image", path.filename().string()}, {"window_min", lo}, {"window_max", hi},
                           {"maxval", 65535}, {"width", img.dim(1)}, {"height", img.dim(0)}};
    std::ofstream js(path.string() + ".json");
    js << side.dump(2) << "\n";
}

} // namespace rgmap::analysis
