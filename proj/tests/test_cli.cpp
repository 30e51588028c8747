#include "rgmap/experiment/run.hpp"

#include <gtest/gtest.h>

#include <cstdlib>
#include <sstream>

using namespace rgmap;
using namespace rgmap::exp;

namespace {

fs::path scratch(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("rgmap_cli_test_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

ExperimentConfig small_config(const std::string& name) {
    ExperimentConfig c;
    c.name = name;
    c.phantom = PhantomChoice{"knee-like", 32, 32, std::nullopt};
    c.n_coils = 4;
    c.admm.n_iters = 4;
    c.seed = Seed{5};
    return c;
}

double metric(const fs::path& dir, const std::string& stage, const std::string& region, const std::string& name) {
    for (const auto& r : parse_metrics_csv(dir / "metrics.csv"))
        if (r.stage == stage && r.region == region && r.metric == name) return r.value;
    ADD_FAILURE() << "metric " << stage << "/" << region << "/" << name << " missing";
    return std::nan("");
}

int run_cli(const std::string& args, std::string* err = nullptr) {
    const fs::path log = fs::temp_directory_path() / "rgmap_cli_test_stderr.txt";
    const std::string cmd = std::string("\"") + RGMAP_CLI + "\" " + args + " 2> \"" + log.string() + "\"";
    const int status = std::system(cmd.c_str());
    if (err) *err = slurp(log);
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

fs::path write_config(const fs::path& dir, const json& j) {
    const fs::path p = dir / "config.json";
    write_json(p, j);
    return p;
}

} // namespace

TEST(Pipeline, IdentityConfigRecoversTruthMap) {
    const auto dir = scratch("identity");
    auto cfg = small_config("identity");
    run_pipeline(cfg, dir);
    EXPECT_LT(metric(dir, "fit", "all", "t1rho_nrmse"), 1e-6);
    EXPECT_LT(metric(dir, "recon", "all", "image_nrmse"), 1e-12);
    EXPECT_EQ(metric(dir, "fit", "all", "valid_fraction"), 1.0);
    // Independent check from the stored tensors.
    const auto t = qtns::read_as<double>(dir / "t1rho.qtns");
    const auto truth = qtns::read_as<double>(dir / "truth_t1rho.qtns");
    const auto labels = qtns::read_as<std::int32_t>(dir / "labels.qtns");
    for (std::size_t p = 0; p < t.size(); ++p) {
        if (!labels[p]) continue;
        EXPECT_NEAR(t[p], truth[p], 1e-6 * truth[p]);
    }
    for (const char* f : {"manifest.json", "metrics.csv", "t1rho.pgm", "error.pgm", "t1rho.pgm.json", "kspace.qtns",
                          "recon.qtns", "series.qtns", "valid.qtns", "coils.qtns", "mask.qtns"})
        EXPECT_TRUE(fs::exists(dir / f)) << f;
    EXPECT_EQ(slurp(dir / "metrics.csv").substr(0, 42), "experiment,stage,region,metric,value,seed\n");
    EXPECT_FALSE(fs::exists(dir / ".lock"));
}

TEST(Pipeline, ManifestRecordsNetAcceleration) {
    const auto dir = scratch("re17");
    const auto model_dir = dir / "gen";
    auto g = gen::make_gen_model(4, Seed{1});
    nnet::save_dense(model_dir, g);
    auto cfg = small_config("re17");
    cfg.r_k = 6.8;
    cfg.r_tsl = 2.5;
    cfg.snr_db = 30;
    cfg.recon = ReconKind::Admm;
    cfg.generation = GenKind::Model;
    cfg.gen_model = model_dir.string();
    const auto out = dir / "run";
    run_pipeline(cfg, out);
    const json man = json::parse(slurp(out / "manifest.json"));
    EXPECT_EQ(man.at("r_e").get<double>(), 17.0);
    EXPECT_EQ(man.at("r_k").get<double>(), 6.8);
    EXPECT_EQ(man.at("r_tsl").get<double>(), 2.5);
    EXPECT_EQ(man.at("stages").size(), 6u);
    // The stored config is enough to rebuild the run.
    EXPECT_EQ(manifest_config(experiment_from_json(man.at("config"))), man.at("config"));
    EXPECT_EQ(qtns::read_as<double>(out / "series.qtns").shape(), (Shape{5, 32, 32}));
    EXPECT_EQ(qtns::read_as<cplx>(out / "recon.qtns").shape(), (Shape{2, 32, 32}));
}

TEST(Pipeline, RerunIsByteIdentical) {
    const auto dir = scratch("rerun");
    auto cfg = small_config("rerun");
    cfg.r_k = 4.6;
    cfg.snr_db = 25;
    cfg.recon = ReconKind::Admm;
    cfg.phantom = PhantomChoice{"random", 32, 32, std::nullopt};
    run_pipeline(cfg, dir / "a");
    run_pipeline(cfg, dir / "b");
    EXPECT_EQ(slurp(dir / "a" / "metrics.csv"), slurp(dir / "b" / "metrics.csv"));
    for (const auto& e : fs::directory_iterator(dir / "a")) {
        if (e.path().extension() != ".qtns") continue;
        EXPECT_EQ(slurp(e.path()), slurp(dir / "b" / e.path().filename())) << e.path().filename();
    }
    cfg.seed = Seed{6};
    run_pipeline(cfg, dir / "c");
    EXPECT_NE(slurp(dir / "a" / "kspace.qtns"), slurp(dir / "c" / "kspace.qtns"));
}

TEST(Pipeline, StagesRunInIsolationAndNameMissingInputs) {
    const auto dir = scratch("stages");
    auto cfg = small_config("stages");
    cfg.r_k = 4.6;
    cfg.recon = ReconKind::Admm;
    try {
        run_stage(Stage::Recon, cfg, dir);
        FAIL() << "expected StageError";
    } catch (const StageError& e) {
        EXPECT_EQ(e.stage(), "recon");
        EXPECT_NE(std::string(e.what()).find("run 'acquire' first"), std::string::npos) << e.what();
    }
    run_stage(Stage::Phantom, cfg, dir);
    run_stage(Stage::Mask, cfg, dir);
    const auto mask = qtns::read_as<std::uint8_t>(dir / "mask.qtns");
    run_stage(Stage::Acquire, cfg, dir);
    EXPECT_EQ(qtns::read_as<std::uint8_t>(dir / "mask.qtns"), mask);
    for (Stage s : {Stage::Recon, Stage::Generate, Stage::Fit, Stage::Eval}) run_stage(s, cfg, dir);
    EXPECT_GT(metric(dir, "acquire", "all", "realized_r_k"), 4.6 * 0.95);
}

TEST(Pipeline, RejectsDirectoryOfAnotherConfiguration) {
    const auto dir = scratch("other");
    auto cfg = small_config("other");
    run_stage(Stage::Phantom, cfg, dir);
    cfg.r_k = 2.0;
    EXPECT_THROW(run_stage(Stage::Phantom, cfg, dir), StageError);
}

TEST(Pipeline, LplusSRunReportsResidual) {
    const auto dir = scratch("lps");
    auto cfg = small_config("lps");
    cfg.r_k = 4.6;
    cfg.recon = ReconKind::LplusS;
    cfg.lplus_s.max_iters = 5;
    run_pipeline(cfg, dir);
    EXPECT_GT(metric(dir, "recon", "all", "dc_residual"), 0.0);
}

TEST(Pipeline, LearnedReconWithoutTrainedModelFailsInReconStage) {
    const auto dir = scratch("learned");
    auto cfg = small_config("learned");
    cfg.r_k = 4.6;
    cfg.recon = ReconKind::LearnedAdmm;
    cfg.recon_model = (dir / "missing").string();
    run_stage(Stage::Phantom, cfg, dir);
    run_stage(Stage::Acquire, cfg, dir);
    try {
        run_stage(Stage::Recon, cfg, dir);
        FAIL() << "expected StageError";
    } catch (const StageError& e) {
        EXPECT_EQ(e.stage(), "recon");
    }
}

TEST(Config, StrictKeysAndInvariants) {
    json j = to_json(small_config("x"));
    EXPECT_NO_THROW(experiment_from_json(j));
    j["r_kk"] = 2;
    EXPECT_THROW(experiment_from_json(j), ConfigError);
    j.erase("r_kk");
    j["admm"]["etaa"] = 1;
    EXPECT_THROW(experiment_from_json(j), ConfigError);
    j["admm"].erase("etaa");
    j["r_tsl"] = 2.0;
    EXPECT_THROW(experiment_from_json(j), ConfigError);
    j["r_tsl"] = 1.0;
    j["generation"] = "analytic";
    EXPECT_THROW(experiment_from_json(j), ConfigError);
    j["generation"] = "none";
    j["snr_db"] = "inf";
    EXPECT_TRUE(std::isinf(experiment_from_json(j).snr_db));
    j["phantom"] = {{"preset", "elbow"}};
    EXPECT_THROW(experiment_from_json(j), ConfigError);
}

TEST(Config, ExplicitPhantomSpecRoundTrips) {
    auto cfg = small_config("spec");
    cfg.phantom.spec = phantom::random_phantom(32, 32, Seed{3});
    const auto back = experiment_from_json(to_json(cfg));
    ASSERT_TRUE(back.phantom.spec.has_value());
    EXPECT_EQ(json(*back.phantom.spec), json(*cfg.phantom.spec));
}

TEST(Lock, SecondHolderIsRefused) {
    const auto dir = scratch("lock");
    {
        DirLock lock(dir);
        EXPECT_TRUE(fs::exists(dir / ".lock"));
        EXPECT_THROW(DirLock again(dir), LockError);
    }
    EXPECT_FALSE(fs::exists(dir / ".lock"));
    EXPECT_NO_THROW(DirLock again(dir));
}

namespace {

json smoke_train_json(const fs::path& dir) {
    return {{"name", "smoke"},
            {"dataset", {{"path", (dir / "data").string()}, {"ny", 32}, {"nx", 32}, {"n_coils", 2}, {"n_train", 8}, {"n_val", 2}}},
            {"admm", {{"n_iters", 3}, {"cg_iters", 4}}},
            {"train",
             {{"epochs_step1", 2}, {"epochs_step2", 2}, {"epochs_step3", 10}, {"width", 4}, {"crop", 16}, {"batch", 2},
              {"search_slices", 2}}},
            {"seed", 3}};
}

} // namespace

TEST(Train, SmokeRunWritesFourteenEpochHistory) {
    const auto dir = scratch("train");
    const auto cfg = train_run_from_json(smoke_train_json(dir));
    run_train(cfg, dir / "out");
    std::ifstream in(dir / "out" / "history.csv");
    std::string line;
    std::getline(in, line);
    EXPECT_EQ(line, "epoch,step,train_loss1,train_loss2,train_loss3,val_loss1,val_loss2,val_loss3");
    int rows = 0;
    while (std::getline(in, line)) rows += !line.empty();
    EXPECT_EQ(rows, 14);
    EXPECT_NO_THROW(nnet::load_dense(dir / "out" / "gen_model"));
    EXPECT_TRUE(fs::exists(dir / "out" / "reg_search.csv"));
    EXPECT_EQ(gen::load_gen_dataset(dir / "data" / "train").size(), 8u);
    EXPECT_EQ(gen::load_gen_dataset(dir / "data" / "val").size(), 2u);
}

TEST(Train, MissingDatasetPathIsConfigError) {
    const auto dir = scratch("train_bad");
    json j = smoke_train_json(dir);
    j["dataset"].erase("path");
    EXPECT_THROW(train_run_from_json(j), ConfigError);
    j.erase("dataset");
    EXPECT_THROW(train_run_from_json(j), ConfigError);
    std::string err;
    EXPECT_EQ(run_cli("train --quiet --config \"" + write_config(dir, j).string() + "\" --out \"" + (dir / "o").string() + "\"", &err), 2);
    EXPECT_NE(err.find("dataset"), std::string::npos) << err;
}

namespace {

// nRMSE over the labelled region, straight from the stored tensors.
double recomputed_nrmse(const fs::path& run) {
    const auto t = qtns::read_as<double>(run / "t1rho.qtns");
    const auto truth = qtns::read_as<double>(run / "truth_t1rho.qtns");
    const auto labels = qtns::read_as<std::int32_t>(run / "labels.qtns");
    double num = 0.0, den = 0.0;
    for (std::size_t p = 0; p < t.size(); ++p) {
        if (!labels[p]) continue;
        num += (t[p] - truth[p]) * (t[p] - truth[p]);
        den += truth[p] * truth[p];
    }
    return std::sqrt(num / den);
}

} // namespace

TEST(Compare, RanksRunsByRecomputedNrmse) {
    const auto dir = scratch("compare");
    auto a = small_config("zf");
    a.r_k = 4.6;
    a.snr_db = 25;
    auto b = a;
    b.name = "admm";
    b.recon = ReconKind::Admm;
    auto c = a;
    c.name = "full";
    c.r_k = 1.0;
    run_pipeline(a, dir / "zf");
    run_pipeline(b, dir / "admm");
    run_pipeline(c, dir / "full");
    const auto runs = run_compare(find_runs(dir), dir / "cmp");
    ASSERT_EQ(runs.size(), 3u);
    std::vector<std::pair<double, std::string>> expect;
    for (const char* r : {"zf", "admm", "full"}) expect.emplace_back(recomputed_nrmse(dir / r), r);
    std::sort(expect.begin(), expect.end());
    for (std::size_t i = 0; i < 3; ++i) {
        EXPECT_EQ(runs[i].dir.filename().string(), expect[i].second);
        EXPECT_NEAR(runs[i].t1rho_nrmse, expect[i].first, 1e-12 * expect[i].first);
    }
    std::ifstream rank(dir / "cmp" / "ranking.csv");
    std::string line;
    std::getline(rank, line);
    EXPECT_EQ(line, "rank,experiment,run,recon,generation,r_e,t1rho_nrmse");
    std::getline(rank, line);
    const std::string first = "1," + runs[0].name + "," + expect[0].second + ",";
    EXPECT_EQ(line.substr(0, first.size()), first);
    EXPECT_TRUE(fs::exists(dir / "cmp" / "boxplot.csv"));
}

TEST(Compare, DifferentPhantomsAreRejected) {
    const auto dir = scratch("compare_bad");
    auto a = small_config("knee");
    auto b = small_config("brain");
    b.phantom.preset = "brain-like";
    run_pipeline(a, dir / "a");
    run_pipeline(b, dir / "b");
    EXPECT_THROW(run_compare(find_runs(dir), dir / "cmp"), Error);
    EXPECT_THROW(run_compare({dir / "a"}, dir / "cmp"), Error);
    std::string err;
    EXPECT_NE(run_cli("compare --quiet --config \"" + dir.string() + "\"", &err), 0);
    EXPECT_NE(err.find("different phantoms"), std::string::npos) << err;
}

TEST(Cli, ExitCodesAndStageNames) {
    const auto dir = scratch("cli");
    json j = to_json(small_config("cli"));
    j.erase("out");
    const auto cfg = write_config(dir, j);
    const std::string base = "--quiet --config \"" + cfg.string() + "\" --out \"" + (dir / "run").string() + "\"";
    std::string err;
    EXPECT_EQ(run_cli("fit " + base, &err), 1);
    EXPECT_NE(err.find("stage 'fit'"), std::string::npos) << err;
    EXPECT_EQ(run_cli("pipeline " + base), 0);
    EXPECT_LT(metric(dir / "run", "fit", "all", "t1rho_nrmse"), 1e-6);

    j["bogus"] = 1;
    const auto bad = write_config(dir, j);
    EXPECT_EQ(run_cli("pipeline --quiet --config \"" + bad.string() + "\" --out \"" + (dir / "r2").string() + "\"", &err), 2);
    EXPECT_NE(err.find("bogus"), std::string::npos) << err;

    j.erase("bogus");
    write_config(dir, j);
    {
        DirLock held(dir / "r3");
        EXPECT_EQ(run_cli("pipeline --quiet --config \"" + cfg.string() + "\" --out \"" + (dir / "r3").string() + "\"", &err), 1);
    }
    EXPECT_NE(err.find("in use"), std::string::npos) << err;

    EXPECT_EQ(run_cli("pipeline --quiet --seed 9 --config \"" + cfg.string() + "\" --out \"" + (dir / "r4").string() + "\""), 0);
    EXPECT_EQ(json::parse(slurp(dir / "r4" / "manifest.json")).at("config").at("seed").get<std::uint64_t>(), 9u);
    EXPECT_EQ(run_cli("nonsense"), 2);
}
