#pragma once

// JSON configuration for experiments and training runs. Unknown keys are
// rejected so a misspelt field cannot silently fall back to a default.

#include "rgmap/analysis/fit.hpp"
#include "rgmap/generative/train.hpp"
#include "rgmap/phantom/serialize.hpp"
#include "rgmap/recon/config.hpp"

#include "json.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <set>

namespace rgmap::exp {

using nlohmann::json;

class ConfigError : public Error {
public:
    using Error::Error;
};

inline void check_keys(const json& j, const std::set<std::string>& allowed, const std::string& where) {
    if (!j.is_object()) throw ConfigError(where + ": expected an object");
    for (const auto& [k, v] : j.items())
        if (!allowed.count(k)) throw ConfigError(where + ": unknown field '" + k + "'");
}

template <class T>
void read_opt(const json& j, const char* key, T& out, const std::string& where) {
    if (!j.contains(key)) return;
    try {
        j.at(key).get_to(out);
    } catch (const json::exception& e) {
        throw ConfigError(where + "." + key + ": " + e.what());
    }
}

/// SNR in dB; "inf" (or null) means noiseless.
inline double snr_from_json(const json& j) {
    if (j.is_null()) return std::numeric_limits<double>::infinity();
    if (j.is_string()) {
        if (j.get<std::string>() == "inf") return std::numeric_limits<double>::infinity();
        throw ConfigError("snr_db: expected a number or \"inf\"");
    }
    if (!j.is_number()) throw ConfigError("snr_db: expected a number or \"inf\"");
    return j.get<double>();
}

inline json snr_to_json(double v) { return std::isinf(v) ? json("inf") : json(v); }

inline std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

inline std::uint64_t fnv1a(const std::string& s) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

// ---- component configs ----

inline json to_json(const recon::ReconConfig& c) {
    return {{"n_iters", c.n_iters},       {"eta", c.eta},
            {"reg_weight", c.reg_weight}, {"reg_relative", c.reg_relative},
            {"transform", recon::to_string(c.transform)}, {"cg_iters", c.cg_iters},
            {"cg_tol", c.cg_tol},         {"mode", recon::to_string(c.mode)}};
}

inline recon::ReconConfig recon_from_json(const json& j, recon::ReconConfig c = {}) {
    const std::string w = "admm";
    check_keys(j, {"n_iters", "eta", "reg_weight", "reg_relative", "transform", "cg_iters", "cg_tol", "mode"}, w);
    read_opt(j, "n_iters", c.n_iters, w);
    read_opt(j, "eta", c.eta, w);
    read_opt(j, "reg_weight", c.reg_weight, w);
    read_opt(j, "reg_relative", c.reg_relative, w);
    read_opt(j, "cg_iters", c.cg_iters, w);
    read_opt(j, "cg_tol", c.cg_tol, w);
    if (j.contains("transform")) c.transform = recon::transform_from_string(j.at("transform").get<std::string>());
    if (j.contains("mode")) c.mode = recon::mode_from_string(j.at("mode").get<std::string>());
    c.validate();
    return c;
}

inline json to_json(const recon::LplusSConfig& c) {
    return {{"lambda_L", c.lambda_L}, {"lambda_S", c.lambda_S},   {"max_iters", c.max_iters},
            {"tol", c.tol},           {"exact_dc", c.exact_dc},   {"dc_cg_iters", c.dc_cg_iters},
            {"dc_cg_tol", c.dc_cg_tol}};
}

inline recon::LplusSConfig lplus_s_from_json(const json& j, recon::LplusSConfig c = {}) {
    const std::string w = "lplus_s";
    check_keys(j, {"lambda_L", "lambda_S", "max_iters", "tol", "exact_dc", "dc_cg_iters", "dc_cg_tol"}, w);
    read_opt(j, "lambda_L", c.lambda_L, w);
    read_opt(j, "lambda_S", c.lambda_S, w);
    read_opt(j, "max_iters", c.max_iters, w);
    read_opt(j, "tol", c.tol, w);
    read_opt(j, "exact_dc", c.exact_dc, w);
    read_opt(j, "dc_cg_iters", c.dc_cg_iters, w);
    read_opt(j, "dc_cg_tol", c.dc_cg_tol, w);
    c.validate();
    return c;
}

inline json to_json(const analysis::FitConfig& c) {
    return {{"t1rho_min", c.t1rho_min},       {"t1rho_max", c.t1rho_max}, {"intensity_floor", c.intensity_floor},
            {"max_lm_iters", c.max_lm_iters}, {"lm_tol", c.lm_tol},       {"lm_lambda0", c.lm_lambda0}};
}

inline analysis::FitConfig fit_from_json(const json& j) {
    analysis::FitConfig c;
    const std::string w = "fit";
    check_keys(j, {"t1rho_min", "t1rho_max", "intensity_floor", "max_lm_iters", "lm_tol", "lm_lambda0"}, w);
    read_opt(j, "t1rho_min", c.t1rho_min, w);
    read_opt(j, "t1rho_max", c.t1rho_max, w);
    read_opt(j, "intensity_floor", c.intensity_floor, w);
    read_opt(j, "max_lm_iters", c.max_lm_iters, w);
    read_opt(j, "lm_tol", c.lm_tol, w);
    read_opt(j, "lm_lambda0", c.lm_lambda0, w);
    c.validate();
    return c;
}

inline json to_json(const gen::TrainConfig& c) {
    return {{"lr", c.lr},
            {"loss_mix", c.loss_mix},
            {"epochs_step1", c.epochs_step1},
            {"epochs_step2", c.epochs_step2},
            {"epochs_step3", c.epochs_step3},
            {"seed", c.seed.value},
            {"batch", c.batch},
            {"width", c.width},
            {"crop", c.crop},
            {"search_slices", c.search_slices},
            {"recon_width", c.recon_width}};
}

inline gen::TrainConfig train_from_json(const json& j) {
    gen::TrainConfig c;
    const std::string w = "train";
    check_keys(j,
               {"lr", "loss_mix", "epochs_step1", "epochs_step2", "epochs_step3", "seed", "batch", "width", "crop",
                "search_slices", "recon_width"},
               w);
    read_opt(j, "lr", c.lr, w);
    read_opt(j, "loss_mix", c.loss_mix, w);
    read_opt(j, "epochs_step1", c.epochs_step1, w);
    read_opt(j, "epochs_step2", c.epochs_step2, w);
    read_opt(j, "epochs_step3", c.epochs_step3, w);
    read_opt(j, "seed", c.seed.value, w);
    read_opt(j, "batch", c.batch, w);
    read_opt(j, "width", c.width, w);
    read_opt(j, "crop", c.crop, w);
    read_opt(j, "search_slices", c.search_slices, w);
    read_opt(j, "recon_width", c.recon_width, w);
    c.validate();
    return c;
}

// ---- experiment ----

enum class ReconKind { ZeroFilled, Admm, LearnedAdmm, LplusS };
enum class GenKind { None, Analytic, Model };

inline std::string to_string(ReconKind k) {
    switch (k) {
    case ReconKind::ZeroFilled: return "zero-filled";
    case ReconKind::Admm: return "admm";
    case ReconKind::LearnedAdmm: return "learned-admm";
    case ReconKind::LplusS: return "l+s";
    }
    return "?";
}

inline ReconKind recon_kind_from_string(const std::string& s) {
    for (auto k : {ReconKind::ZeroFilled, ReconKind::Admm, ReconKind::LearnedAdmm, ReconKind::LplusS})
        if (to_string(k) == s) return k;
    throw ConfigError("recon: unknown mode '" + s + "' (zero-filled, admm, learned-admm, l+s)");
}

inline std::string to_string(GenKind k) {
    return k == GenKind::None ? "none" : k == GenKind::Analytic ? "analytic" : "model";
}

inline GenKind gen_kind_from_string(const std::string& s) {
    for (auto k : {GenKind::None, GenKind::Analytic, GenKind::Model})
        if (to_string(k) == s) return k;
    throw ConfigError("generation: unknown mode '" + s + "' (none, analytic, model)");
}

/// Phantom source: a preset, a seeded random phantom or an explicit spec.
struct PhantomChoice {
    std::string preset; // "knee-like", "brain-like", "random" or "" for an explicit spec
    std::size_t ny = 64, nx = 64;
    std::optional<phantom::PhantomSpec> spec;

    phantom::PhantomSpec resolve(Seed seed) const {
        if (spec) return *spec;
        if (preset == "random") return phantom::random_phantom(ny, nx, derive(seed, 1));
        return phantom::preset(preset, ny, nx);
    }
};

struct ExperimentConfig {
    std::string name = "experiment";
    PhantomChoice phantom{"knee-like", 64, 64, std::nullopt};
    std::vector<double> tsl_ms{5, 10, 20, 40, 60};
    std::size_t n_coils = 8;
    double r_k = 1.0;
    double r_tsl = 1.0;
    double snr_db = std::numeric_limits<double>::infinity();
    double calib_frac = 1.0 / 16.0;
    ReconKind recon = ReconKind::ZeroFilled;
    GenKind generation = GenKind::None;
    recon::ReconConfig admm = default_admm();
    recon::LplusSConfig lplus_s = default_lplus_s();
    analysis::FitConfig fit;
    std::string recon_model; // directory of a trained learned-ADMM model
    std::string gen_model;   // directory of a trained generator
    Seed seed{0};
    std::string out;

    static recon::ReconConfig default_admm() {
        recon::ReconConfig c;
        c.eta = 0.03;
        c.reg_relative = true;
        return c;
    }

    // Exact data consistency on noisy multi-coil data fits the noise.
    static recon::LplusSConfig default_lplus_s() {
        recon::LplusSConfig c;
        c.lambda_L = c.lambda_S = 0.1;
        c.exact_dc = false;
        return c;
    }

    /// R_e = R_K * R_TSL.
    double r_e() const { return r_k * r_tsl; }

    /// Indices of the acquired contrasts.
    std::vector<std::size_t> acquired() const {
        if (r_tsl == 1.0) {
            std::vector<std::size_t> all(tsl_ms.size());
            for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
            return all;
        }
        return {0, tsl_ms.size() - 1};
    }

    void validate() const {
        if (name.empty() || name.find_first_of(",\n\"") != std::string::npos)
            throw ConfigError("name: must be nonempty without commas, quotes or newlines");
        if (tsl_ms.size() < 2) throw ConfigError("tsl_ms: need at least two spin-lock times");
        ContrastImageSet::validate_tsl(tsl_ms);
        if (n_coils < 1) throw ConfigError("n_coils: must be >= 1");
        if (!(r_k >= 1.0)) throw ConfigError("r_k: must be >= 1");
        if (r_tsl != 1.0 && r_tsl != 2.5) throw ConfigError("r_tsl: must be 1 or 2.5");
        if (r_tsl == 2.5 && tsl_ms.size() != 5)
            throw ConfigError("r_tsl: 2.5 means two of five contrasts; tsl_ms must list five times");
        if (generation != GenKind::None && r_tsl != 2.5)
            throw ConfigError("generation: requires r_tsl = 2.5 (two acquired contrasts)");
        if (recon == ReconKind::LplusS && acquired().size() < 2) throw ConfigError("recon: l+s needs two contrasts");
        if (recon == ReconKind::LearnedAdmm && recon_model.empty())
            throw ConfigError("recon_model: required for recon = learned-admm");
        if (generation == GenKind::Model && gen_model.empty())
            throw ConfigError("gen_model: required for generation = model");
        if (!(calib_frac > 0.0 && calib_frac <= 1.0)) throw ConfigError("calib_frac: must lie in (0, 1]");
        if (std::isnan(snr_db)) throw ConfigError("snr_db: not a number");
        admm.validate();
        lplus_s.validate();
        fit.validate();
    }
};

inline json phantom_to_json(const PhantomChoice& p) {
    if (p.spec) return *p.spec;
    return {{"preset", p.preset}, {"ny", p.ny}, {"nx", p.nx}};
}

inline PhantomChoice phantom_from_json(const json& j) {
    PhantomChoice p;
    p.preset.clear();
    if (j.contains("regions")) {
        check_keys(j, {"ny", "nx", "regions"}, "phantom");
        try {
            p.spec = j.get<phantom::PhantomSpec>();
        } catch (const json::exception& e) {
            throw ConfigError(std::string("phantom: ") + e.what());
        }
        p.ny = p.spec->ny;
        p.nx = p.spec->nx;
        return p;
    }
    check_keys(j, {"preset", "ny", "nx"}, "phantom");
    if (!j.contains("preset")) throw ConfigError("phantom: need 'preset' or 'regions'");
    p.preset = j.at("preset").get<std::string>();
    read_opt(j, "ny", p.ny, "phantom");
    read_opt(j, "nx", p.nx, "phantom");
    if (p.preset != "random" && p.preset != "knee-like" && p.preset != "brain-like")
        throw ConfigError("phantom: unknown preset '" + p.preset + "' (knee-like, brain-like, random)");
    return p;
}

inline json to_json(const ExperimentConfig& c) {
    return {{"name", c.name},
            {"phantom", phantom_to_json(c.phantom)},
            {"tsl_ms", c.tsl_ms},
            {"n_coils", c.n_coils},
            {"r_k", c.r_k},
            {"r_tsl", c.r_tsl},
            {"snr_db", snr_to_json(c.snr_db)},
            {"calib_frac", c.calib_frac},
            {"recon", to_string(c.recon)},
            {"generation", to_string(c.generation)},
            {"admm", to_json(c.admm)},
            {"lplus_s", to_json(c.lplus_s)},
            {"fit", to_json(c.fit)},
            {"recon_model", c.recon_model},
            {"gen_model", c.gen_model},
            {"seed", c.seed.value},
            {"out", c.out}};
}

inline ExperimentConfig experiment_from_json(const json& j) {
    check_keys(j,
               {"name", "phantom", "tsl_ms", "n_coils", "r_k", "r_tsl", "snr_db", "calib_frac", "recon", "generation",
                "admm", "lplus_s", "fit", "recon_model", "gen_model", "seed", "out"},
               "config");
    ExperimentConfig c;
    const std::string w = "config";
    read_opt(j, "name", c.name, w);
    if (j.contains("phantom")) c.phantom = phantom_from_json(j.at("phantom"));
    read_opt(j, "tsl_ms", c.tsl_ms, w);
    read_opt(j, "n_coils", c.n_coils, w);
    read_opt(j, "r_k", c.r_k, w);
    read_opt(j, "r_tsl", c.r_tsl, w);
    if (j.contains("snr_db")) c.snr_db = snr_from_json(j.at("snr_db"));
    read_opt(j, "calib_frac", c.calib_frac, w);
    if (j.contains("recon")) c.recon = recon_kind_from_string(j.at("recon").get<std::string>());
    if (j.contains("generation")) c.generation = gen_kind_from_string(j.at("generation").get<std::string>());
    if (j.contains("admm")) c.admm = recon_from_json(j.at("admm"), ExperimentConfig::default_admm());
    if (j.contains("lplus_s")) c.lplus_s = lplus_s_from_json(j.at("lplus_s"), ExperimentConfig::default_lplus_s());
    if (j.contains("fit")) c.fit = fit_from_json(j.at("fit"));
    read_opt(j, "recon_model", c.recon_model, w);
    read_opt(j, "gen_model", c.gen_model, w);
    read_opt(j, "seed", c.seed.value, w);
    read_opt(j, "out", c.out, w);
    c.validate();
    return c;
}

inline json read_json_file(const std::filesystem::path& p) {
    std::ifstream in(p);
    if (!in) throw ConfigError("cannot read config " + p.string());
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError(p.string() + ": " + e.what());
    }
}

/// Relative model paths in a config file resolve against the file's directory.
inline std::string resolve_path(const std::string& p, const std::filesystem::path& base) {
    if (p.empty() || std::filesystem::path(p).is_absolute()) return p;
    return (base / p).lexically_normal().string();
}

// ---- training run ----

struct DatasetSpec {
    std::string path; // where the reconstructed generator datasets are written
    gen::DatasetConfig data;
    std::size_t n_train = 200;
    std::size_t n_val = 20;

    void validate() const {
        if (path.empty()) throw ConfigError("dataset.path: required");
        if (n_train < 1 || n_val < 1) throw ConfigError("dataset: n_train and n_val must be >= 1");
        data.validate();
    }
};

inline json to_json(const DatasetSpec& d) {
    json snr = json::array();
    for (double s : d.data.snr_db) snr.push_back(snr_to_json(s));
    return {{"path", d.path},          {"ny", d.data.ny},
            {"nx", d.data.nx},         {"n_coils", d.data.n_coils},
            {"tsl_ms", d.data.tsl_ms}, {"r_k", d.data.r_k},
            {"snr_db", snr},           {"calib_frac", d.data.calib_frac},
            {"seed", d.data.seed.value}, {"n_train", d.n_train},
            {"n_val", d.n_val}};
}

inline DatasetSpec dataset_from_json(const json& j) {
    const std::string w = "dataset";
    check_keys(j, {"path", "ny", "nx", "n_coils", "tsl_ms", "r_k", "snr_db", "calib_frac", "seed", "n_train", "n_val"},
               w);
    DatasetSpec d;
    read_opt(j, "path", d.path, w);
    read_opt(j, "ny", d.data.ny, w);
    read_opt(j, "nx", d.data.nx, w);
    read_opt(j, "n_coils", d.data.n_coils, w);
    read_opt(j, "tsl_ms", d.data.tsl_ms, w);
    read_opt(j, "r_k", d.data.r_k, w);
    if (j.contains("snr_db")) {
        d.data.snr_db.clear();
        for (const auto& s : j.at("snr_db")) d.data.snr_db.push_back(snr_from_json(s));
    }
    read_opt(j, "calib_frac", d.data.calib_frac, w);
    read_opt(j, "seed", d.data.seed.value, w);
    read_opt(j, "n_train", d.n_train, w);
    read_opt(j, "n_val", d.n_val, w);
    return d;
}

struct TrainRunConfig {
    std::string name = "train";
    DatasetSpec dataset;
    recon::ReconConfig admm = ExperimentConfig::default_admm();
    gen::TrainConfig train;
    std::string out;

    void validate() const {
        if (name.empty()) throw ConfigError("name: must be nonempty");
        dataset.validate();
        admm.validate();
        train.validate();
    }
};

inline json to_json(const TrainRunConfig& c) {
    return {{"name", c.name}, {"dataset", to_json(c.dataset)}, {"admm", to_json(c.admm)}, {"train", to_json(c.train)},
            {"out", c.out}};
}

/// A top-level "seed" seeds both the dataset and the training run.
inline TrainRunConfig train_run_from_json(const json& j) {
    check_keys(j, {"name", "dataset", "admm", "train", "seed", "out"}, "config");
    TrainRunConfig c;
    read_opt(j, "name", c.name, "config");
    if (!j.contains("dataset")) throw ConfigError("dataset: required (with dataset.path)");
    c.dataset = dataset_from_json(j.at("dataset"));
    if (j.contains("admm")) c.admm = recon_from_json(j.at("admm"), ExperimentConfig::default_admm());
    if (j.contains("train")) c.train = train_from_json(j.at("train"));
    if (j.contains("seed")) {
        const auto s = j.at("seed").get<std::uint64_t>();
        c.dataset.data.seed = Seed{s};
        c.train.seed = Seed{s};
    }
    read_opt(j, "out", c.out, "config");
    c.validate();
    return c;
}

} // namespace rgmap::exp
