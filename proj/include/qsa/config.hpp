#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "qsa/errors.hpp"

namespace qsa::config {

/// A parsed right-hand side: number, boolean, string or (nested) list.
struct Value {
    enum class Kind { Number, Bool, String, List };

    Kind kind = Kind::Number;
    double number = 0.0;
    bool boolean = false;
    std::string text;
    std::vector<Value> items;

    static Value of(double x) { return {Kind::Number, x, false, {}, {}}; }
    static Value of(bool b) { return {Kind::Bool, 0.0, b, {}, {}}; }
    static Value of(std::string s) { return {Kind::String, 0.0, false, std::move(s), {}}; }
    static Value list(std::vector<Value> xs) { return {Kind::List, 0.0, false, {}, std::move(xs)}; }

    bool operator==(const Value&) const = default;
};

/// Parses one value. Numbers accept arithmetic expressions with + - * / ^,
/// parentheses, the constants pi and e, and sqrt, log, exp, sin, cos.
/// Lists are bracketed and comma separated. Anything else must be a quoted
/// string or a bare word.
Value parse_value(const std::string& text);

/// Inverse of parse_value for the values this module produces.
std::string format_value(const Value& v);

struct Entry {
    std::string key;
    Value value;
    std::size_t line = 0;
};

struct Section {
    std::string name;
    std::size_t line = 0;
    std::vector<Entry> entries;
};

/// `[section]` headers, `key = value` lines, `#` comments. Duplicate sections
/// or keys are ParseErrors.
std::vector<Section> parse_sections(const std::string& text);

enum class ExperimentKind { LinearExample, Qmc, Gfo };

const char* kind_name(ExperimentKind k);

struct ProbeConfig {
    std::string waveform = "cosine";
    std::string convention = "cycles";
    double amplitude = 1.0;
    std::vector<std::vector<double>> v;
    std::vector<double> omega;
    std::vector<std::pair<std::int64_t, std::int64_t>> log_rational_pairs;
    std::optional<std::pair<double, double>> omega_draw;
    double omega_scale = 1.0;
    std::vector<double> phi;
    std::optional<std::pair<double, double>> phi_draw;

    bool operator==(const ProbeConfig&) const = default;
};

struct LinearModelConfig {
    std::vector<std::vector<double>> A_star{{-0.8, 0.0}, {0.0, -0.8}};
    std::vector<double> omega;
    double forcing = 10.0;
    std::vector<double> theta0{5.0, -5.0};

    bool operator==(const LinearModelConfig&) const = default;
};

struct QmcModelConfig {
    std::string target = "exp_sine";
    double gamma = 1.0;
    double value = 0.0;
    std::optional<double> theta0;
    std::pair<double, double> theta0_draw{-25.0, 25.0};

    bool operator==(const QmcModelConfig&) const = default;
};

struct GfoModelConfig {
    std::string objective = "rastrigin";
    std::size_t dim = 2;
    double epsilon = 0.25;
    std::string method = "1qsgd";
    std::vector<std::vector<double>> gain_matrix;
    std::optional<std::pair<double, double>> box;
    std::vector<double> theta0;

    bool operator==(const GfoModelConfig&) const = default;
};

struct AnalysisConfig {
    std::optional<std::pair<double, double>> rate_window;
    std::size_t checkpoints = 10;
    std::string checkpoint_spacing = "log";
    std::string covariance_channel = "pr";
    std::optional<double> success_radius;
    std::optional<double> ybar_T;
    double ybar_dt = 1e-3;

    bool operator==(const AnalysisConfig&) const = default;
};

struct OutputConfig {
    std::string dir = "results";
    std::string series = "log";
    std::size_t points_per_decade = 50;

    bool operator==(const OutputConfig&) const = default;
};

struct ExperimentConfig {
    std::string name;
    ExperimentKind kind = ExperimentKind::LinearExample;
    double T = 0.0;
    double Ts = 0.0;
    std::size_t runs = 1;
    std::uint64_t master_seed = 1;
    std::size_t store_stride = 1;
    std::vector<std::string> channels{"raw", "pr"};
    std::vector<std::string> comparators;

    double a0 = 1.0;
    std::vector<double> rho;
    bool capped = false;

    ProbeConfig probe;
    LinearModelConfig linear;
    QmcModelConfig qmc;
    GfoModelConfig gfo;

    double kappa = 4.0;
    AnalysisConfig analysis;
    OutputConfig output;

    bool operator==(const ExperimentConfig&) const = default;

    [[nodiscard]] bool has_channel(const std::string& c) const;
    /// Rate window, defaulting to the last decade of the horizon.
    [[nodiscard]] std::pair<double, double> window() const;
};

/// Parses and validates. `default_name` is used when [experiment] has no name.
ExperimentConfig parse_config(const std::string& text, const std::string& default_name = "experiment");

/// Reads a file; the default name is its stem. Throws IoError.
ExperimentConfig load_config(const std::string& path);

/// Canonical text form; parse_config(serialize(c)) == c.
std::string serialize(const ExperimentConfig& c);

/// Domain checks shared by parse_config and programmatic edits (CLI overrides).
/// Throws ValidationError naming the offending key.
void validate(const ExperimentConfig& c);

}  // namespace qsa::config
