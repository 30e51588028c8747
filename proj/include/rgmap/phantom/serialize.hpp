#pragma once

#include "json.hpp"
#include "rgmap/phantom/phantom.hpp"

namespace rgmap::phantom {

inline void to_json(nlohmann::json& j, const EllipseRegion& r) {
    j = nlohmann::json{{"cx", r.cx}, {"cy", r.cy}, {"rx", r.rx}, {"ry", r.ry},
                       {"angle_deg", r.angle_deg}, {"s0", r.s0}, {"t1rho_ms", r.t1rho_ms}};
}

inline void from_json(const nlohmann::json& j, EllipseRegion& r) {
    j.at("cx").get_to(r.cx);
    j.at("cy").get_to(r.cy);
    j.at("rx").get_to(r.rx);
    j.at("ry").get_to(r.ry);
    r.angle_deg = j.value("angle_deg", 0.0);
    j.at("s0").get_to(r.s0);
    j.at("t1rho_ms").get_to(r.t1rho_ms);
}

inline void to_json(nlohmann::json& j, const PhantomSpec& s) {
    j = nlohmann::json{{"ny", s.ny}, {"nx", s.nx}, {"regions", s.regions}};
}

inline void from_json(const nlohmann::json& j, PhantomSpec& s) {
    j.at("ny").get_to(s.ny);
    j.at("nx").get_to(s.nx);
    j.at("regions").get_to(s.regions);
    s.validate();
}

} // namespace rgmap::phantom
