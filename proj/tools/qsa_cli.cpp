#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "qsa/config.hpp"
#include "qsa/gfo.hpp"
#include "qsa/harness.hpp"

namespace {

constexpr int kOk = 0;
constexpr int kIo = 1;
constexpr int kUsage = 2;
constexpr int kInvalid = 3;
constexpr int kDiverged = 4;

void print_fits(const nlohmann::json& summary) {
    for (const auto& [channel, fits] : summary["channels"].items()) {
        for (const auto& fit : fits) {
            std::cout << "  " << channel << " rho=" << fit["rho"].get<double>() << " " << fit["estimator"].get<std::string>();
            if (fit.contains("slope")) {
                std::cout << " slope=" << fit["slope"].get<double>() << " r2=" << fit["r2"].get<double>();
            } else {
                std::cout << " fit failed: " << fit["error"].get<std::string>();
            }
            std::cout << "\n";
        }
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"quasi-stochastic approximation experiments"};
    app.require_subcommand(1);
    std::size_t threads = 0;
    app.add_option("--threads", threads, "worker threads (0 = all cores)");

    std::string config_path;
    std::string out_dir;
    std::optional<std::size_t> runs;
    std::optional<std::uint64_t> seed;
    auto* run = app.add_subcommand("run", "run an experiment config");
    run->add_option("--config", config_path, "config file")->required();
    run->add_option("--out", out_dir, "output root (overrides output.dir)");
    run->add_option("--runs", runs, "override experiment.runs");
    run->add_option("--seed", seed, "override experiment.master_seed");
    run->add_option("--threads", threads, "worker threads (0 = all cores)");

    auto* validate = app.add_subcommand("validate", "parse and validate a config");
    validate->add_option("--config", config_path, "config file")->required();

    std::string in_dir;
    auto* analyze = app.add_subcommand("analyze", "recompute summary.json from stored artifacts");
    analyze->add_option("--in", in_dir, "experiment output directory")->required();

    auto* list = app.add_subcommand("list-objectives", "print the built-in objectives");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kUsage;
    }

    try {
        if (*list) {
            for (const auto& name : qsa::builtin_objective_names()) {
                std::cout << name << "\n";
            }
            return kOk;
        }
        if (*validate) {
            const auto cfg = qsa::config::load_config(config_path);
            std::cout << "ok: " << cfg.name << " (" << qsa::config::kind_name(cfg.kind) << ")\n";
            return kOk;
        }
        if (*analyze) {
            const auto summary = qsa::harness::analyze(in_dir);
            std::cout << "rewrote " << in_dir << "/summary.json\n";
            print_fits(summary);
            return kOk;
        }

        auto cfg = qsa::config::load_config(config_path);
        if (runs) {
            cfg.runs = *runs;
        }
        if (seed) {
            cfg.master_seed = *seed;
        }
        qsa::config::validate(cfg);
        qsa::harness::RunOptions opts;
        opts.threads = threads;
        if (!out_dir.empty()) {
            opts.out_dir = out_dir;
        }
        const auto result = qsa::harness::run_experiment(cfg, opts);
        std::cout << "wrote " << result.dir.string() << " (" << result.runs.size() << " runs)\n";
        print_fits(result.summary);
        if (result.any_diverged()) {
            for (const auto& d : result.summary["diverged"]) {
                std::cerr << "diverged: run " << d["run_id"].get<std::size_t>() << " "
                          << d["estimator"].get<std::string>() << ": " << d["message"].get<std::string>() << "\n";
            }
            return kDiverged;
        }
        return kOk;
    } catch (const qsa::ParseError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kInvalid;
    } catch (const qsa::ValidationError& e) {
        std::cerr << "invalid config: " << e.what() << "\n";
        return kInvalid;
    } catch (const qsa::IoError& e) {
        std::cerr << "io error: " << e.what() << "\n";
        return kIo;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kIo;
    }
}
