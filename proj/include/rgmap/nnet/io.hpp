#pragma once

// Model weights as one QTNS file per parameter plus a JSON manifest listing
// parameter order and shapes.

#include "rgmap/core/qtns.hpp"
#include "rgmap/nnet/dense.hpp"

#include "json.hpp"

#include <filesystem>
#include <fstream>

namespace rgmap::nnet {

inline nlohmann::json manifest(const std::string& kind, const nlohmann::json& config,
                               const std::vector<ParamRef>& params) {
    nlohmann::json j;
    j["kind"] = kind;
    j["config"] = config;
    j["parameters"] = nlohmann::json::array();
    for (const auto& p : params)
        j["parameters"].push_back({{"name", p.name}, {"shape", p.value->shape()}, {"file", p.name + ".qtns"}});
    return j;
}

inline void save_params(const std::filesystem::path& dir, const nlohmann::json& man,
                        const std::vector<ParamRef>& params) {
    std::filesystem::create_directories(dir);
    for (const auto& p : params) qtns::write(dir / (p.name + ".qtns"), *p.value);
    std::ofstream out(dir / "manifest.json");
    if (!out) throw qtns::IoError("cannot write " + (dir / "manifest.json").string());
    out << man.dump(2) << "\n";
}

inline nlohmann::json read_manifest(const std::filesystem::path& dir) {
    std::ifstream in(dir / "manifest.json");
    if (!in) throw qtns::IoError("cannot read " + (dir / "manifest.json").string());
    return nlohmann::json::parse(in);
}

/// Fills `params` from files named in the manifest; shapes must agree.
inline void load_params(const std::filesystem::path& dir, const nlohmann::json& man,
                        const std::vector<ParamRef>& params) {
    const auto& list = man.at("parameters");
    if (list.size() != params.size())
        throw NetError("model manifest lists " + std::to_string(list.size()) + " parameters, expected " +
                       std::to_string(params.size()));
    for (std::size_t k = 0; k < params.size(); ++k) {
        if (list[k].at("name").get<std::string>() != params[k].name)
            throw NetError("model manifest: parameter " + std::to_string(k) + " is " +
                           list[k].at("name").get<std::string>() + ", expected " + params[k].name);
        RArray v = qtns::read_as<double>(dir / list[k].at("file").get<std::string>());
        require_same_shape(v.shape(), params[k].value->shape(), params[k].name.c_str());
        *params[k].value = std::move(v);
    }
}

inline nlohmann::json to_json(const DenseNetConfig& c) {
    return {{"in_ch", c.in_ch}, {"out_ch", c.out_ch}, {"width", c.width}, {"n_blocks", c.n_blocks}};
}

inline DenseNetConfig dense_config_from_json(const nlohmann::json& j) {
    DenseNetConfig c;
    c.in_ch = j.at("in_ch").get<std::size_t>();
    c.out_ch = j.at("out_ch").get<std::size_t>();
    c.width = j.at("width").get<std::size_t>();
    c.n_blocks = j.at("n_blocks").get<std::size_t>();
    c.validate();
    return c;
}

inline void save_dense(const std::filesystem::path& dir, DenseNet& net) {
    auto params = net.params();
    save_params(dir, manifest("dense", to_json(net.cfg), params), params);
}

inline DenseNet load_dense(const std::filesystem::path& dir) {
    const auto man = read_manifest(dir);
    if (man.at("kind").get<std::string>() != "dense") throw NetError("model at " + dir.string() + " is not a dense net");
    DenseNet net(dense_config_from_json(man.at("config")));
    load_params(dir, man, net.params());
    return net;
}

} // namespace rgmap::nnet
