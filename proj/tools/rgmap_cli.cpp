#include "rgmap/core/platform.hpp"
#include "rgmap/experiment/run.hpp"

#include "CLI11.hpp"

#include <iostream>
#include <optional>

namespace {

using namespace rgmap;
namespace fs = std::filesystem;

constexpr int kStageFailure = 1;
constexpr int kConfigError = 2;

struct Options {
    std::string config;
    std::string out;
    std::optional<std::uint64_t> seed;
    bool quiet = false;
};

exp::ExperimentConfig load_experiment(const Options& o) {
    const fs::path cfg_path(o.config);
    auto j = exp::read_json_file(cfg_path);
    if (o.seed) j["seed"] = *o.seed;
    if (!o.out.empty()) j["out"] = o.out;
    auto cfg = exp::experiment_from_json(j);
    const fs::path base = cfg_path.parent_path();
    cfg.recon_model = exp::resolve_path(cfg.recon_model, base);
    cfg.gen_model = exp::resolve_path(cfg.gen_model, base);
    if (cfg.out.empty()) throw exp::ConfigError("out: no output directory (set \"out\" or pass --out)");
    return cfg;
}

exp::TrainRunConfig load_train(const Options& o) {
    const fs::path cfg_path(o.config);
    auto j = exp::read_json_file(cfg_path);
    if (o.seed) j["seed"] = *o.seed;
    if (!o.out.empty()) j["out"] = o.out;
    auto cfg = exp::train_run_from_json(j);
    cfg.dataset.path = exp::resolve_path(cfg.dataset.path, cfg_path.parent_path());
    if (cfg.out.empty()) throw exp::ConfigError("out: no output directory (set \"out\" or pass --out)");
    return cfg;
}

exp::Log logger(const Options& o) {
    if (o.quiet) return {};
    return [](const std::string& s) { std::cerr << s << "\n"; };
}

int guarded(const std::function<void()>& body) {
    try {
        body();
        return 0;
    } catch (const exp::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kConfigError;
    } catch (const exp::LockError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kStageFailure;
    } catch (const exp::StageError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kStageFailure;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kStageFailure;
    }
}

void add_common(CLI::App* sub, Options& o, bool config_is_dir = false) {
    sub->add_option("--config", o.config, config_is_dir ? "Directory holding completed runs" : "JSON config file")
        ->required();
    sub->add_option("--out", o.out, "Output directory (overrides the config)");
    sub->add_option("--seed", o.seed, "Seed (overrides the config)");
    sub->add_flag("--quiet", o.quiet, "Suppress progress messages");
}

} // namespace

int main(int argc, char** argv) {
    tune_allocator();
    CLI::App app{"T1rho mapping experiments on synthetic phantoms"};
    app.require_subcommand(1);
    Options o;

    const std::pair<const char*, exp::Stage> stages[] = {
        {"phantom", exp::Stage::Phantom}, {"mask", exp::Stage::Mask},         {"acquire", exp::Stage::Acquire},
        {"recon", exp::Stage::Recon},     {"generate", exp::Stage::Generate}, {"fit", exp::Stage::Fit},
        {"eval", exp::Stage::Eval}};
    int rc = 0;
    for (const auto& [name, stage] : stages) {
        auto* sub = app.add_subcommand(name, std::string("Run the ") + name + " stage");
        add_common(sub, o);
        sub->callback([&o, &rc, stage = stage] {
            rc = guarded([&] {
                const auto cfg = load_experiment(o);
                exp::DirLock lock(cfg.out);
                exp::run_stage(stage, cfg, cfg.out);
            });
        });
    }

    auto* pipeline = app.add_subcommand("pipeline", "Run every stage from phantom to eval");
    add_common(pipeline, o);
    pipeline->callback([&] {
        rc = guarded([&] {
            const auto cfg = load_experiment(o);
            exp::DirLock lock(cfg.out);
            exp::run_pipeline(cfg, cfg.out, logger(o));
        });
    });

    auto* train = app.add_subcommand("train", "Build the synthetic dataset and train the pipeline");
    add_common(train, o);
    train->callback([&] {
        rc = guarded([&] {
            const auto cfg = load_train(o);
            exp::DirLock lock(cfg.out);
            exp::run_train(cfg, cfg.out, logger(o));
        });
    });

    auto* compare = app.add_subcommand("compare", "Rank completed runs by T1rho-map nRMSE");
    add_common(compare, o, true);
    compare->callback([&] {
        rc = guarded([&] {
            const fs::path dir(o.config);
            if (!fs::is_directory(dir)) throw exp::ConfigError("compare: " + dir.string() + " is not a directory");
            const fs::path out = o.out.empty() ? dir : fs::path(o.out);
            exp::DirLock lock(out);
            const auto runs = exp::run_compare(exp::find_runs(dir), out);
            if (!o.quiet)
                for (std::size_t i = 0; i < runs.size(); ++i)
                    std::cerr << i + 1 << ". " << runs[i].dir.filename().string() << "  t1rho nRMSE "
                              << runs[i].t1rho_nrmse << "\n";
        });
    });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kConfigError;
    }
    return rc;
}
