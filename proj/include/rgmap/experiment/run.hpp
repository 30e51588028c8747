#pragma once

// Experiment stages. Each stage reads what earlier stages wrote into the run
// directory and adds its own files; `run_pipeline` chains all of them.

#include "rgmap/acquisition/simulate.hpp"
#include "rgmap/analysis/fit.hpp"
#include "rgmap/analysis/metrics.hpp"
#include "rgmap/analysis/pgm.hpp"
#include "rgmap/experiment/config.hpp"
#include "rgmap/generative/series.hpp"
#include "rgmap/recon/learned.hpp"
#include "rgmap/recon/lplus_s.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>

namespace rgmap::exp {

namespace fs = std::filesystem;

using Log = std::function<void(const std::string&)>;

class StageError : public Error {
public:
    StageError(std::string stage, const std::string& what)
        : Error("stage '" + stage + "' failed: " + what), stage_(std::move(stage)) {}
    const std::string& stage() const { return stage_; }

private:
    std::string stage_;
};

class LockError : public Error {
public:
    using Error::Error;
};

/// `<dir>/.lock`, created exclusively and removed on destruction.
class DirLock {
public:
    explicit DirLock(const fs::path& dir) : path_(dir / ".lock") {
        fs::create_directories(dir);
        const int fd = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
        if (fd < 0)
            throw LockError("output directory " + dir.string() + " is in use (remove " + path_.string() +
                            " if no command is running)");
        const std::string pid = std::to_string(::getpid()) + "\n";
        [[maybe_unused]] auto n = ::write(fd, pid.data(), pid.size());
        ::close(fd);
    }
    ~DirLock() {
        std::error_code ec;
        fs::remove(path_, ec);
    }
    DirLock(const DirLock&) = delete;
    DirLock& operator=(const DirLock&) = delete;

private:
    fs::path path_;
};

enum class Stage { Phantom, Mask, Acquire, Recon, Generate, Fit, Eval };

inline const char* stage_name(Stage s) {
    switch (s) {
    case Stage::Phantom: return "phantom";
    case Stage::Mask: return "mask";
    case Stage::Acquire: return "acquire";
    case Stage::Recon: return "recon";
    case Stage::Generate: return "generate";
    case Stage::Fit: return "fit";
    case Stage::Eval: return "eval";
    }
    return "?";
}

inline std::string fmt17(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline std::string tsl_tag(double t) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%g", t);
    return std::string("tsl") + buf;
}

inline void write_text(const fs::path& p, const std::string& s) {
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    if (!out) throw qtns::IoError("cannot write " + p.string());
    out << s;
    if (!out) throw qtns::IoError("write failed: " + p.string());
}

inline void write_json(const fs::path& p, const json& j) { write_text(p, j.dump(2) + "\n"); }

template <class T>
Array<T> read_stage_file(const fs::path& dir, const std::string& file, const char* producer) {
    const fs::path p = dir / file;
    if (!fs::exists(p)) throw Error("missing " + p.string() + "; run '" + producer + "' first");
    return qtns::read_as<T>(p);
}

inline json read_stage_json(const fs::path& dir, const std::string& file, const char* producer) {
    const fs::path p = dir / file;
    if (!fs::exists(p)) throw Error("missing " + p.string() + "; run '" + producer + "' first");
    std::ifstream in(p);
    return json::parse(in);
}

/// Config as stored in the manifest: everything needed to rerun, minus the
/// output location.
inline json manifest_config(const ExperimentConfig& cfg) {
    json j = to_json(cfg);
    j.erase("out");
    return j;
}

inline std::string phantom_hash(const phantom::PhantomSpec& spec) { return hex64(fnv1a(json(spec).dump())); }

/// Records `stage` in `<dir>/manifest.json`, refusing a directory that holds
/// a run of another configuration.
inline void update_manifest(const ExperimentConfig& cfg, const fs::path& dir, Stage stage) {
    const fs::path p = dir / "manifest.json";
    json man;
    if (fs::exists(p)) {
        std::ifstream in(p);
        man = json::parse(in);
        if (man.value("kind", "") != "experiment" || man.at("config") != manifest_config(cfg))
            throw ConfigError(dir.string() + " holds a run with a different configuration");
    } else {
        man = {{"kind", "experiment"},
               {"name", cfg.name},
               {"config", manifest_config(cfg)},
               {"r_k", cfg.r_k},
               {"r_tsl", cfg.r_tsl},
               {"r_e", cfg.r_e()},
               {"stages", json::array()}};
    }
    if (stage == Stage::Phantom) man["phantom_hash"] = phantom_hash(cfg.phantom.resolve(cfg.seed));
    auto& st = man["stages"];
    if (std::find(st.begin(), st.end(), stage_name(stage)) == st.end()) st.push_back(stage_name(stage));
    write_json(p, man);
}

// ---- stage bodies ----

inline Seed coil_seed(const ExperimentConfig& c) { return derive(c.seed, 2); }
inline Seed acquisition_seed(const ExperimentConfig& c) { return derive(c.seed, 3); }

inline acq::AcquisitionSpec acquisition_spec(const ExperimentConfig& c) {
    return {c.acquired(), c.r_k, c.calib_frac, c.snr_db};
}

inline std::vector<double> acquired_tsl(const ExperimentConfig& c) {
    std::vector<double> t;
    for (auto i : c.acquired()) t.push_back(c.tsl_ms[i]);
    return t;
}

inline void stage_phantom(const ExperimentConfig& cfg, const fs::path& dir) {
    const auto spec = cfg.phantom.resolve(cfg.seed);
    auto truth = phantom::rasterize(spec);
    const auto series = phantom::synthesize(truth.params, cfg.tsl_ms, phantom::PhaseMode::SmoothQuadratic);
    write_json(dir / "phantom.json", spec);
    qtns::write(dir / "truth_series.qtns", series.images);
    qtns::write(dir / "truth_t1rho.qtns", truth.params.t1rho_ms);
    qtns::write(dir / "truth_s0.qtns", truth.params.s0);
    qtns::write(dir / "labels.qtns", truth.labels);
}

inline void stage_mask(const ExperimentConfig& cfg, const fs::path& dir) {
    const auto spec = cfg.phantom.resolve(cfg.seed);
    const auto mask = acq::acquisition_mask(acquisition_spec(cfg), spec.ny, spec.nx, acquisition_seed(cfg));
    qtns::write(dir / "mask.qtns", mask.mask);
}

inline void stage_acquire(const ExperimentConfig& cfg, const fs::path& dir) {
    const ContrastImageSet truth(read_stage_file<cplx>(dir, "truth_series.qtns", "phantom"), cfg.tsl_ms);
    const auto labels = read_stage_file<std::int32_t>(dir, "labels.qtns", "phantom");
    const auto coils = acq::make_coils(cfg.n_coils, truth.ny(), truth.nx(), coil_seed(cfg));
    const auto y = acq::simulate_acquisition(truth, coils, analysis::label_roi(labels), acquisition_spec(cfg),
                                             acquisition_seed(cfg));
    qtns::write(dir / "coils.qtns", coils.sens);
    qtns::write(dir / "kspace.qtns", y.y);
    qtns::write(dir / "mask.qtns", y.mask.mask);
    json realized = json::array();
    for (std::size_t i = 0; i < y.mask.n_tsl(); ++i) realized.push_back(y.mask.realized_acceleration(i));
    write_json(dir / "acquisition.json", {{"tsl_ms", acquired_tsl(cfg)},
                                          {"r_k", cfg.r_k},
                                          {"calib_frac", cfg.calib_frac},
                                          {"snr_db", snr_to_json(cfg.snr_db)},
                                          {"noise_std", y.noise_std},
                                          {"realized_r_k", realized}});
}

inline acq::KSpaceData load_kspace(const ExperimentConfig& cfg, const fs::path& dir) {
    const auto info = read_stage_json(dir, "acquisition.json", "acquire");
    acq::KSpaceData y;
    y.y = read_stage_file<cplx>(dir, "kspace.qtns", "acquire");
    y.mask = acq::SamplingMask{read_stage_file<std::uint8_t>(dir, "mask.qtns", "acquire"), cfg.r_k, cfg.calib_frac};
    y.noise_std = info.at("noise_std").get<double>();
    y.tsl_ms = acquired_tsl(cfg);
    if (y.y.ndim() != 4 || y.mask.mask.ndim() != 3 || y.y.dim(1) != y.mask.n_tsl())
        throw ShapeError("k-space and mask files disagree");
    return y;
}

inline void stage_recon(const ExperimentConfig& cfg, const fs::path& dir) {
    const auto y = load_kspace(cfg, dir);
    const acq::CoilProfile coils(read_stage_file<cplx>(dir, "coils.qtns", "acquire"));
    CArray m;
    json info = {{"recon", to_string(cfg.recon)}};
    switch (cfg.recon) {
    case ReconKind::ZeroFilled: m = recon::zero_filled(y, coils).images; break;
    case ReconKind::Admm: {
        auto c = cfg.admm;
        c.mode = recon::Mode::Classical;
        m = recon::admm_reconstruct(y, coils, y.mask, c).images;
        break;
    }
    case ReconKind::LearnedAdmm: {
        const auto model = recon::load_learned(cfg.recon_model);
        m = recon::learned_admm_reconstruct(y, coils, y.mask, model).images;
        break;
    }
    case ReconKind::LplusS: {
        const auto r = recon::ls_reconstruct(y, coils, y.mask, cfg.lplus_s);
        m = r.image().images;
        info["iterations"] = r.iterations;
        info["converged"] = r.converged;
        info["dc_residual"] = r.dc_residual;
        break;
    }
    }
    qtns::write(dir / "recon.qtns", m);
    write_json(dir / "recon.json", info);
}

inline void stage_generate(const ExperimentConfig& cfg, const fs::path& dir) {
    const ContrastImageSet m(read_stage_file<cplx>(dir, "recon.qtns", "recon"), acquired_tsl(cfg));
    RArray series;
    if (cfg.generation == GenKind::None) {
        series = m.magnitudes();
    } else if (cfg.generation == GenKind::Analytic) {
        series = gen::generate_full_series(m, gen::analytic_generator(cfg.tsl_ms), cfg.tsl_ms).magnitudes();
    } else {
        const auto model = nnet::load_dense(cfg.gen_model);
        series = gen::generate_full_series(m, gen::model_generator(model), cfg.tsl_ms).magnitudes();
    }
    qtns::write(dir / "series.qtns", series);
}

inline std::vector<double> series_tsl(const ExperimentConfig& cfg) {
    return cfg.generation == GenKind::None ? acquired_tsl(cfg) : cfg.tsl_ms;
}

inline void stage_fit(const ExperimentConfig& cfg, const fs::path& dir) {
    const auto series = read_stage_file<double>(dir, "series.qtns", "generate");
    const auto pm = analysis::fit_map(series, series_tsl(cfg), cfg.fit);
    qtns::write(dir / "t1rho.qtns", pm.t1rho_ms);
    qtns::write(dir / "s0.qtns", pm.s0);
    qtns::write(dir / "valid.qtns", pm.valid_mask);
}

struct MetricRow {
    std::string stage, region, metric;
    double value = 0.0;
};

inline std::string metrics_csv(const std::string& experiment, std::uint64_t seed, const std::vector<MetricRow>& rows) {
    std::string s = "experiment,stage,region,metric,value,seed\n";
    for (const auto& r : rows)
        s += experiment + "," + r.stage + "," + r.region + "," + r.metric + "," + fmt17(r.value) + "," +
             std::to_string(seed) + "\n";
    return s;
}

inline std::vector<MetricRow> parse_metrics_csv(const fs::path& p, std::string* experiment = nullptr) {
    std::ifstream in(p);
    if (!in) throw Error("cannot read " + p.string());
    std::string line;
    std::getline(in, line);
    if (line != "experiment,stage,region,metric,value,seed") throw Error(p.string() + ": unexpected header");
    std::vector<MetricRow> rows;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<std::string> f;
        std::stringstream ss(line);
        for (std::string cell; std::getline(ss, cell, ',');) f.push_back(cell);
        if (f.size() != 6) throw Error(p.string() + ": malformed row '" + line + "'");
        if (experiment) *experiment = f[0];
        rows.push_back({f[1], f[2], f[3], std::stod(f[4])});
    }
    return rows;
}

inline MaskArray label_mask(const LabelArray& labels, std::int32_t k) {
    MaskArray m(labels.shape());
    for (std::size_t p = 0; p < labels.size(); ++p) m[p] = labels[p] == k;
    return m;
}

inline RArray plane(const RArray& stack, std::size_t i) {
    auto s = stack.slab(i);
    return RArray({stack.dim(1), stack.dim(2)}, std::vector<double>(s.begin(), s.end()));
}

inline void stage_eval(const ExperimentConfig& cfg, const fs::path& dir) {
    const ContrastImageSet truth(read_stage_file<cplx>(dir, "truth_series.qtns", "phantom"), cfg.tsl_ms);
    const auto labels = read_stage_file<std::int32_t>(dir, "labels.qtns", "phantom");
    const auto t_true = read_stage_file<double>(dir, "truth_t1rho.qtns", "phantom");
    const auto m = read_stage_file<cplx>(dir, "recon.qtns", "recon");
    const auto series = read_stage_file<double>(dir, "series.qtns", "generate");
    const auto t_est = read_stage_file<double>(dir, "t1rho.qtns", "fit");
    const auto valid = read_stage_file<std::uint8_t>(dir, "valid.qtns", "fit");
    const auto acq_info = read_stage_json(dir, "acquisition.json", "acquire");
    const auto rec_info = read_stage_json(dir, "recon.json", "recon");
    const MaskArray roi = analysis::label_roi(labels);
    const std::size_t ny = truth.ny(), nx = truth.nx();

    std::vector<MetricRow> rows;
    double realized = 0.0;
    for (const auto& r : acq_info.at("realized_r_k")) realized += r.get<double>();
    rows.push_back({"acquire", "all", "realized_r_k", realized / static_cast<double>(acq_info.at("realized_r_k").size())});
    rows.push_back({"acquire", "all", "noise_std", acq_info.at("noise_std").get<double>()});
    rows.push_back({"acquire", "all", "r_e", cfg.r_e()});

    // Reconstructed contrasts against the complex truth.
    const auto idx = cfg.acquired();
    const CArray ref = truth.select(idx).images;
    MaskArray roi_stack({idx.size(), ny, nx});
    for (std::size_t i = 0; i < idx.size(); ++i) std::copy(roi.vec().begin(), roi.vec().end(), roi_stack.slab(i).begin());
    rows.push_back({"recon", "all", "image_nrmse", analysis::nrmse(m, ref, &roi_stack)});
    for (std::size_t i = 0; i < idx.size(); ++i) {
        CArray a({ny, nx}), b({ny, nx});
        std::copy(m.slab(i).begin(), m.slab(i).end(), a.data());
        std::copy(ref.slab(i).begin(), ref.slab(i).end(), b.data());
        rows.push_back({"recon", "all", "image_nrmse_" + tsl_tag(cfg.tsl_ms[idx[i]]), analysis::nrmse(a, b, &roi)});
    }
    if (rec_info.contains("dc_residual"))
        rows.push_back({"recon", "all", "dc_residual", rec_info.at("dc_residual").get<double>()});

    if (cfg.generation != GenKind::None) {
        const RArray mag = truth.magnitudes();
        for (std::size_t k = 1; k + 1 < cfg.tsl_ms.size(); ++k)
            rows.push_back({"generate", "all", "image_nrmse_" + tsl_tag(cfg.tsl_ms[k]),
                            analysis::nrmse(plane(series, k), plane(mag, k), &roi)});
    }

    RArray err({ny, nx});
    for (std::size_t p = 0; p < err.size(); ++p) err[p] = roi[p] ? std::abs(t_est[p] - t_true[p]) : 0.0;
    std::size_t n_valid = 0, n_roi = 0;
    for (std::size_t p = 0; p < roi.size(); ++p) {
        n_roi += roi[p];
        n_valid += roi[p] && valid[p];
    }
    rows.push_back({"fit", "all", "t1rho_nrmse", analysis::nrmse(t_est, t_true, &roi)});
    rows.push_back({"fit", "all", "valid_fraction", static_cast<double>(n_valid) / static_cast<double>(n_roi)});
    const auto t_stats = analysis::region_stats(t_est, labels, &valid);
    const auto e_stats = analysis::region_stats(err, labels, nullptr);
    for (std::size_t r = 0; r < t_stats.size(); ++r) {
        const std::string region = "region_" + std::to_string(t_stats[r].label);
        const auto mask = label_mask(labels, t_stats[r].label);
        rows.push_back({"fit", region, "t1rho_nrmse", analysis::nrmse(t_est, t_true, &mask)});
        rows.push_back({"fit", region, "valid_count", static_cast<double>(t_stats[r].count)});
        if (!t_stats[r].empty) {
            rows.push_back({"fit", region, "t1rho_mean", t_stats[r].mean});
            rows.push_back({"fit", region, "t1rho_median", t_stats[r].median});
            rows.push_back({"fit", region, "t1rho_q1", t_stats[r].q1});
            rows.push_back({"fit", region, "t1rho_q3", t_stats[r].q3});
        }
        rows.push_back({"fit", region, "abs_error_mean", e_stats[r].mean});
        rows.push_back({"fit", region, "abs_error_median", e_stats[r].median});
        rows.push_back({"fit", region, "abs_error_q1", e_stats[r].q1});
        rows.push_back({"fit", region, "abs_error_q3", e_stats[r].q3});
    }
    write_text(dir / "metrics.csv", metrics_csv(cfg.name, cfg.seed.value, rows));
    analysis::write_pgm16(dir / "t1rho.pgm", t_est, 0.0, cfg.fit.t1rho_max);
    analysis::write_pgm16(dir / "error.pgm", err, 0.0, cfg.fit.t1rho_max);
    const json window = {{"format", "P5 16-bit"}, {"unit", "ms"}, {"lo", 0.0}, {"hi", cfg.fit.t1rho_max}};
    write_json(dir / "t1rho.pgm.json", window);
    write_json(dir / "error.pgm.json", window);
}

/// Runs one stage under the directory lock and records it in the manifest.
inline void run_stage(Stage s, const ExperimentConfig& cfg, const fs::path& dir) {
    try {
        fs::create_directories(dir);
        switch (s) {
        case Stage::Phantom: stage_phantom(cfg, dir); break;
        case Stage::Mask: stage_mask(cfg, dir); break;
        case Stage::Acquire: stage_acquire(cfg, dir); break;
        case Stage::Recon: stage_recon(cfg, dir); break;
        case Stage::Generate: stage_generate(cfg, dir); break;
        case Stage::Fit: stage_fit(cfg, dir); break;
        case Stage::Eval: stage_eval(cfg, dir); break;
        }
        update_manifest(cfg, dir, s);
    } catch (const StageError&) {
        throw;
    } catch (const std::exception& e) {
        throw StageError(stage_name(s), e.what());
    }
}

inline void run_pipeline(const ExperimentConfig& cfg, const fs::path& dir, const Log& log = {}) {
    for (Stage s : {Stage::Phantom, Stage::Acquire, Stage::Recon, Stage::Generate, Stage::Fit, Stage::Eval}) {
        if (log) log(std::string("stage ") + stage_name(s));
        run_stage(s, cfg, dir);
    }
}

// ---- training ----

inline std::string history_csv(const std::vector<gen::HistoryRow>& h) {
    std::string s = "epoch,step,train_loss1,train_loss2,train_loss3,val_loss1,val_loss2,val_loss3\n";
    for (const auto& r : h)
        s += std::to_string(r.epoch) + "," + std::to_string(r.step) + "," + fmt17(r.train_loss1) + "," +
             fmt17(r.train_loss2) + "," + fmt17(r.train_loss3) + "," + fmt17(r.val_loss1) + "," +
             fmt17(r.val_loss2) + "," + fmt17(r.val_loss3) + "\n";
    return s;
}

/// Builds the synthetic dataset, runs the three-step schedule and writes
/// models, loss history and the generator datasets.
inline gen::PipelineModel run_train(const TrainRunConfig& cfg, const fs::path& out, const Log& log = {}) {
    cfg.validate();
    const auto& d = cfg.dataset;
    if (log) log("building " + std::to_string(d.n_train) + " training and " + std::to_string(d.n_val) + " validation slices");
    const auto train = gen::make_pipeline_set(d.data, 0, d.n_train);
    const auto val = gen::make_pipeline_set(d.data, d.n_train, d.n_val);
    auto res = gen::train_pipeline(train, val, cfg.admm, cfg.train, [&](const gen::HistoryRow& r) {
        if (!log) return;
        char buf[200];
        std::snprintf(buf, sizeof buf, "epoch %d (step %d): train loss3 %.5g, val loss3 %.5g", r.epoch, r.step,
                      r.train_loss3, r.val_loss3);
        log(buf);
    });
    fs::create_directories(out);
    write_text(out / "history.csv", history_csv(res.history));
    nnet::save_dense(out / "gen_model", res.gen);
    if (res.learned) {
        recon::save_learned(out / "recon_model", *res.learned);
    } else {
        write_json(out / "recon.json", to_json(res.recon));
        std::string s = "reg_weight,loss1\n";
        for (auto [r, l] : res.reg_search) s += fmt17(r) + "," + fmt17(l) + "\n";
        write_text(out / "reg_search.csv", s);
    }
    const fs::path dp(d.path);
    gen::save_gen_dataset(dp / "train", res.gen_train);
    gen::save_gen_dataset(dp / "val", res.gen_val);
    write_json(dp / "manifest.json", {{"kind", "pipeline-dataset"},
                                      {"dataset", to_json(d)},
                                      {"train_indices", {0, d.n_train}},
                                      {"val_indices", {d.n_train, d.n_train + d.n_val}}});
    json man = {{"kind", "training"}, {"config", to_json(cfg)}, {"epochs", res.history.size()},
                {"gen_model", "gen_model"}};
    man["config"].erase("out");
    if (res.learned) man["recon_model"] = "recon_model";
    write_json(out / "manifest.json", man);
    return res;
}

// ---- comparison ----

struct RunSummary {
    fs::path dir;
    std::string name, phantom_hash, recon, generation;
    double r_e = 0.0;
    double t1rho_nrmse = 0.0;
    std::vector<MetricRow> rows;
};

inline RunSummary load_run(const fs::path& dir) {
    const fs::path mp = dir / "manifest.json";
    if (!fs::exists(mp)) throw Error(dir.string() + ": no manifest.json");
    std::ifstream in(mp);
    const json man = json::parse(in);
    if (man.value("kind", "") != "experiment") throw Error(dir.string() + ": not an experiment run");
    if (!man.contains("phantom_hash")) throw Error(dir.string() + ": run has no phantom stage");
    RunSummary r;
    r.dir = dir;
    r.name = man.at("name").get<std::string>();
    r.phantom_hash = man.at("phantom_hash").get<std::string>();
    r.recon = man.at("config").at("recon").get<std::string>();
    r.generation = man.at("config").at("generation").get<std::string>();
    r.r_e = man.at("r_e").get<double>();
    r.rows = parse_metrics_csv(dir / "metrics.csv");
    bool found = false;
    for (const auto& row : r.rows)
        if (row.stage == "fit" && row.region == "all" && row.metric == "t1rho_nrmse") {
            r.t1rho_nrmse = row.value;
            found = true;
        }
    if (!found) throw Error(dir.string() + ": metrics.csv lacks the T1rho nRMSE");
    return r;
}

/// Experiment runs among the immediate subdirectories of `parent`, by name.
inline std::vector<fs::path> find_runs(const fs::path& parent) {
    std::vector<fs::path> out;
    for (const auto& e : fs::directory_iterator(parent))
        if (e.is_directory() && fs::exists(e.path() / "manifest.json") && fs::exists(e.path() / "metrics.csv"))
            out.push_back(e.path());
    std::sort(out.begin(), out.end());
    return out;
}

/// Ranked table by T1rho-map nRMSE plus per-region box statistics.
inline std::vector<RunSummary> run_compare(const std::vector<fs::path>& dirs, const fs::path& out) {
    if (dirs.size() < 2) throw Error("compare: need at least two completed runs");
    std::vector<RunSummary> runs;
    for (const auto& d : dirs) runs.push_back(load_run(d));
    for (const auto& r : runs)
        if (r.phantom_hash != runs[0].phantom_hash)
            throw Error("compare: runs use different phantoms (" + runs[0].dir.string() + " has " +
                        runs[0].phantom_hash + ", " + r.dir.string() + " has " + r.phantom_hash + ")");
    std::stable_sort(runs.begin(), runs.end(), [](const RunSummary& a, const RunSummary& b) {
        return a.t1rho_nrmse < b.t1rho_nrmse;
    });
    fs::create_directories(out);
    std::string rank = "rank,experiment,run,recon,generation,r_e,t1rho_nrmse\n";
    for (std::size_t i = 0; i < runs.size(); ++i)
        rank += std::to_string(i + 1) + "," + runs[i].name + "," + runs[i].dir.filename().string() + "," +
                runs[i].recon + "," + runs[i].generation + "," + fmt17(runs[i].r_e) + "," +
                fmt17(runs[i].t1rho_nrmse) + "\n";
    write_text(out / "ranking.csv", rank);

    std::string box = "experiment,run,region,quantity,mean,median,q1,q3\n";
    for (const auto& r : runs) {
        std::map<std::pair<std::string, std::string>, std::map<std::string, double>> cells;
        for (const auto& row : r.rows) {
            if (row.stage != "fit" || row.region == "all") continue;
            for (const char* q : {"t1rho", "abs_error"}) {
                const std::string pre = std::string(q) + "_";
                if (row.metric.rfind(pre, 0) == 0 && row.metric != "t1rho_nrmse")
                    cells[{row.region, q}][row.metric.substr(pre.size())] = row.value;
            }
        }
        for (const auto& [key, v] : cells) {
            if (!v.count("mean")) continue;
            box += r.name + "," + r.dir.filename().string() + "," + key.first + "," + key.second + "," +
                   fmt17(v.at("mean")) + "," + fmt17(v.at("median")) + "," + fmt17(v.at("q1")) + "," +
                   fmt17(v.at("q3")) + "\n";
        }
    }
    write_text(out / "boxplot.csv", box);
    json runs_j = json::array();
    for (const auto& r : runs) runs_j.push_back(r.dir.string());
    write_json(out / "manifest.json", {{"kind", "comparison"}, {"phantom_hash", runs[0].phantom_hash}, {"runs", runs_j}});
    return runs;
}

} // namespace rgmap::exp
