#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "qsa/averaging.hpp"
#include "qsa/config.hpp"

namespace qsa::harness {

std::uint64_t splitmix64(std::uint64_t x);
std::uint64_t fnv1a(std::string_view text);

/// Per-run seed: a hash of (master_seed, replicate).
std::uint64_t derive_seed(std::uint64_t master_seed, std::uint64_t replicate);

/// Independent sub-stream of a seed for one purpose ("phases", "theta0", "mc", ...).
/// Adding a new label never changes the streams of existing labels.
std::uint64_t derive_stream(std::uint64_t seed, std::string_view label);

/// One launched estimator run. Failed runs are kept and flagged.
struct RunSummary {
    std::size_t run_id = 0;
    std::size_t replicate = 0;
    std::string estimator;
    double rho = 0.0;
    std::uint64_t seed = 0;
    std::string file;
    Vector terminal_raw;
    Vector terminal_pr;
    Vector terminal_fb;
    std::uint64_t evaluations = 0;
    bool diverged = false;
    std::size_t divergence_step = 0;
    std::string message;
    double wall_seconds = 0.0;  // kept out of the deterministic artifacts
};

struct RunRecord {
    RunSummary summary;
    EstimateSeries series;  // exactly the rows written to the run CSV
};

struct RunOptions {
    std::size_t threads = 0;  // 0: hardware concurrency
    bool write_artifacts = true;
    std::optional<std::filesystem::path> out_dir;  // overrides output.dir
};

struct ExperimentResult {
    config::ExperimentConfig config;
    std::vector<RunRecord> runs;
    nlohmann::json summary;
    std::filesystem::path dir;  // <out>/<name>, empty when nothing was written

    [[nodiscard]] bool any_diverged() const;
    [[nodiscard]] std::vector<const RunRecord*> select(const std::string& estimator, double rho) const;
};

/// Executes every (rho, replicate) task of the config on a worker pool and,
/// unless disabled, writes run_<k>[_<estimator>].csv, aggregate.csv, runs.csv,
/// timing.csv, config.echo and summary.json under <out>/<name>/.
/// Output is identical for any thread count.
ExperimentResult run_experiment(const config::ExperimentConfig& cfg, const RunOptions& options = {});

/// Fits, covariance traces, terminal statistics and the run table, computed
/// only from the given records (plus closed forms derived from the config).
nlohmann::json summarize(const config::ExperimentConfig& cfg, std::span<const RunRecord> runs);

/// Reloads config.echo, runs.csv and the run CSVs from an output directory,
/// recomputes the summary and rewrites summary.json.
nlohmann::json analyze(const std::filesystem::path& dir);

/// Convert a config into the JSON object embedded in summary.json.
nlohmann::json config_json(const config::ExperimentConfig& cfg);

/// Known optimum / root of the experiment (0 for linear and QMC with a zero mean).
Vector theta_star(const config::ExperimentConfig& cfg);

/// Checkpoint times of the covariance trace.
std::vector<double> checkpoint_times(const config::ExperimentConfig& cfg);

}  // namespace qsa::harness
