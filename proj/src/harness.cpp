#include "qsa/harness.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <fstream>
#include <map>
#include <random>
#include <sstream>
#include <thread>

#include "qsa/analysis.hpp"
#include "qsa/csv.hpp"
#include "qsa/gfo.hpp"
#include "qsa/qmc.hpp"

namespace qsa::harness {

using config::ExperimentConfig;
using config::ExperimentKind;
using nlohmann::json;

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

std::uint64_t fnv1a(std::string_view text) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (char c : text) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::uint64_t derive_seed(std::uint64_t master_seed, std::uint64_t replicate) {
    return splitmix64(splitmix64(master_seed) ^ splitmix64(replicate + 0x5851f42d4c957f2dULL));
}

std::uint64_t derive_stream(std::uint64_t seed, std::string_view label) {
    return splitmix64(seed ^ fnv1a(label));
}

bool ExperimentResult::any_diverged() const {
    return std::any_of(runs.begin(), runs.end(), [](const RunRecord& r) { return r.summary.diverged; });
}

std::vector<const RunRecord*> ExperimentResult::select(const std::string& estimator, double rho) const {
    std::vector<const RunRecord*> out;
    for (const auto& r : runs) {
        if (r.summary.estimator == estimator && r.summary.rho == rho && !r.summary.diverged) {
            out.push_back(&r);
        }
    }
    return out;
}

namespace {

Matrix to_matrix(const std::vector<std::vector<double>>& rows) {
    const auto n = static_cast<Eigen::Index>(rows.size());
    Matrix out(n, n == 0 ? 0 : static_cast<Eigen::Index>(rows[0].size()));
    for (Eigen::Index i = 0; i < out.rows(); ++i) {
        for (Eigen::Index j = 0; j < out.cols(); ++j) {
            out(i, j) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
        }
    }
    return out;
}

LinearExampleModel linear_model(const ExperimentConfig& c) {
    LinearExampleModel m;
    m.A_star = to_matrix(c.linear.A_star);
    m.w11 = c.linear.omega[0];
    m.w21 = c.linear.omega[1];
    m.w12 = c.linear.omega[2];
    m.w22 = c.linear.omega[3];
    m.forcing = c.linear.forcing;
    return m;
}

QmcTarget qmc_target(const ExperimentConfig& c) {
    return c.qmc.target == "constant" ? constant_target(c.qmc.value, 2) : exp_sine_target(c.qmc.gamma);
}

GfoProblem gfo_problem(const ExperimentConfig& c, GfoMethod method) {
    Objective obj = builtin_objective(c.gfo.objective, c.gfo.dim);
    const auto d = static_cast<Eigen::Index>(c.gfo.dim);
    Matrix M = c.gfo.gain_matrix.empty() ? Matrix(Matrix::Identity(d, d)) : to_matrix(c.gfo.gain_matrix);
    BoxConstraint box = c.gfo.box ? BoxConstraint::cube(c.gfo.dim, c.gfo.box->first, c.gfo.box->second)
                                  : obj.default_box();
    GfoProblem prob{std::move(obj), c.gfo.epsilon, std::move(M), std::move(box), method};
    prob.validate();
    return prob;
}

GfoMethod parse_method(const std::string& m) { return m == "2qsgd" ? GfoMethod::TwoQSGD : GfoMethod::OneQSGD; }

double uniform(std::mt19937_64& rng, double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(rng);
}

// Frequencies shared by every run of the experiment.
Vector experiment_omega(const ExperimentConfig& c) {
    const auto& p = c.probe;
    Vector omega;
    if (!p.omega.empty()) {
        omega = p.omega;
    } else if (!p.log_rational_pairs.empty()) {
        omega = make_log_rational_frequencies(p.log_rational_pairs).omega;
    } else {
        const std::size_t K = p.v.empty() ? (c.kind == ExperimentKind::Gfo ? c.gfo.dim : 2) : p.v.size();
        std::mt19937_64 rng(derive_stream(c.master_seed, "frequencies"));
        for (std::size_t i = 0; i < K; ++i) {
            omega.push_back(uniform(rng, p.omega_draw->first, p.omega_draw->second));
        }
    }
    for (auto& w : omega) {
        w *= p.omega_scale;
    }
    return omega;
}

ProbingSignal build_probe(const config::ProbeConfig& p, const Vector& omega, const Vector& phi) {
    std::vector<Vector> rows;
    if (p.v.empty()) {
        for (std::size_t i = 0; i < omega.size(); ++i) {
            Vector r(omega.size(), 0.0);
            r[i] = p.amplitude;
            rows.push_back(std::move(r));
        }
    } else {
        for (auto r : p.v) {
            for (auto& x : r) {
                x *= p.amplitude;
            }
            rows.push_back(std::move(r));
        }
    }
    if (p.convention == "sine_radians") {
        return ProbingSignal::from_sine_radians(rows, omega, phi);
    }
    return {rows, omega, phi, p.waveform == "triangle" ? Waveform::Triangle : Waveform::Cosine};
}

Vector run_phases(const config::ProbeConfig& p, std::size_t K, std::uint64_t seed) {
    if (!p.phi.empty()) {
        return p.phi;
    }
    Vector phi(K, 0.0);
    if (p.phi_draw) {
        std::mt19937_64 rng(derive_stream(seed, "phases"));
        for (auto& x : phi) {
            x = uniform(rng, p.phi_draw->first, p.phi_draw->second);
        }
    }
    return phi;
}

double grid_time(const ExperimentConfig& c, double t) {
    const double h = c.Ts * static_cast<double>(c.store_stride);
    const double last = std::floor(static_cast<double>(step_count(c.T, c.Ts)) / static_cast<double>(c.store_stride));
    const double k = std::clamp(std::round(t / h), 1.0, last);
    return k * static_cast<double>(c.store_stride) * c.Ts;
}

std::size_t nearest_index(const std::vector<double>& times, double t) {
    auto it = std::lower_bound(times.begin(), times.end(), t);
    if (it == times.end()) {
        return times.size() - 1;
    }
    if (it != times.begin() && t - *std::prev(it) < *it - t) {
        --it;
    }
    return static_cast<std::size_t>(it - times.begin());
}

EstimateSeries select_rows(const EstimateSeries& s, const ExperimentConfig& c) {
    if (c.output.series == "full" || s.size() < 3) {
        return s;
    }
    std::vector<std::size_t> idx{0};
    const auto logs = log_spaced_indices(s.times, s.times[1], s.times.back(), c.output.points_per_decade);
    idx.insert(idx.end(), logs.begin(), logs.end());
    for (double t : checkpoint_times(c)) {
        idx.push_back(nearest_index(s.times, t));
    }
    const auto [lo, hi] = c.window();
    idx.push_back(nearest_index(s.times, lo));
    idx.push_back(nearest_index(s.times, hi));
    idx.push_back(s.size() - 1);
    std::sort(idx.begin(), idx.end());
    idx.erase(std::unique(idx.begin(), idx.end()), idx.end());

    EstimateSeries out;
    out.dim = s.dim;
    const std::size_t d = s.dim;
    auto take = [&](const std::vector<double>& src, std::vector<double>& dst, std::size_t k) {
        if (!src.empty()) {
            dst.insert(dst.end(), src.begin() + static_cast<std::ptrdiff_t>(k * d),
                       src.begin() + static_cast<std::ptrdiff_t>((k + 1) * d));
        }
    };
    for (auto k : idx) {
        out.times.push_back(s.times[k]);
        take(s.raw, out.raw, k);
        take(s.pr, out.pr, k);
        take(s.fb, out.fb, k);
    }
    return out;
}

EstimateSeries run_qsa(const VectorField& f, const ProbingSignal& p, const GainSchedule& g, const Vector& theta0,
                       const std::optional<BoxConstraint>& box, const ExperimentConfig& c) {
    const AveragingConfig avg{c.kappa};
    EstimateSeries s = pr_average(integrate(f, p, g, theta0, c.T, c.Ts, box, Direction::Forward, c.store_stride), avg);
    if (c.has_channel("fb")) {
        const auto back = pr_average(integrate(f, p, g, theta0, c.T, c.Ts, box, Direction::Backward, c.store_stride), avg);
        s = fb_combine(s, back);
    }
    return s;
}

struct Task {
    std::size_t rho_index = 0;
    std::size_t replicate = 0;
};

struct Shared {
    const ExperimentConfig* cfg = nullptr;
    Vector omega;  // probe frequencies fixed for the whole experiment
};

std::string file_name(std::size_t run_id, const std::string& estimator) {
    return estimator == "qsa" ? "run_" + std::to_string(run_id) + ".csv"
                              : "run_" + std::to_string(run_id) + "_" + estimator + ".csv";
}

template <class Body>
RunRecord timed_run(RunSummary base, const ExperimentConfig& c, Body&& body) {
    RunRecord rec;
    rec.summary = std::move(base);
    const auto start = std::chrono::steady_clock::now();
    try {
        EstimateSeries full = body(rec.summary.evaluations);
        rec.series = select_rows(full, c);
        const auto& s = rec.series;
        rec.summary.terminal_raw.assign(s.terminal(Channel::Raw).begin(), s.terminal(Channel::Raw).end());
        rec.summary.terminal_pr.assign(s.terminal(Channel::Pr).begin(), s.terminal(Channel::Pr).end());
        if (s.has_fb()) {
            rec.summary.terminal_fb.assign(s.terminal(Channel::Fb).begin(), s.terminal(Channel::Fb).end());
        }
    } catch (const NonFiniteState& err) {
        rec.summary.diverged = true;
        rec.summary.divergence_step = err.step();
        rec.summary.message = err.what();
        rec.series = EstimateSeries{};
    } catch (const NonFiniteObjective& err) {
        rec.summary.diverged = true;
        rec.summary.message = err.what();
        rec.series = EstimateSeries{};
    }
    rec.summary.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return rec;
}

std::vector<RunRecord> run_task(const Shared& shared, const Task& task) {
    const ExperimentConfig& c = *shared.cfg;
    const double rho = c.rho[task.rho_index];
    const GainSchedule g{c.a0, rho, c.capped};
    const std::uint64_t seed = derive_seed(c.master_seed, task.replicate);
    const std::size_t run_id = task.rho_index * c.runs + task.replicate;

    RunSummary base;
    base.run_id = run_id;
    base.replicate = task.replicate;
    base.rho = rho;
    base.seed = seed;
    auto named = [&](const std::string& est) {
        RunSummary s = base;
        s.estimator = est;
        s.file = file_name(run_id, est);
        return s;
    };

    std::vector<RunRecord> out;
    if (c.kind == ExperimentKind::LinearExample) {
        const auto model = linear_model(c);
        const LinearExampleField field(model);
        const ProbingSignal p = model.probe();
        out.push_back(timed_run(named("qsa"), c, [&](std::uint64_t&) {
            return run_qsa(field, p, g, c.linear.theta0, std::nullopt, c);
        }));
        return out;
    }

    const ProbingSignal p = build_probe(c.probe, shared.omega, run_phases(c.probe, shared.omega.size(), seed));

    if (c.kind == ExperimentKind::Qmc) {
        const QmcTarget target = qmc_target(c);
        double theta0 = 0.0;
        if (c.qmc.theta0) {
            theta0 = *c.qmc.theta0;
        } else {
            std::mt19937_64 rng(derive_stream(seed, "theta0"));
            theta0 = uniform(rng, c.qmc.theta0_draw.first, c.qmc.theta0_draw.second);
        }
        const QmcField field(target);
        out.push_back(timed_run(named("qsa"), c, [&](std::uint64_t&) {
            return run_qsa(field, p, g, Vector{theta0}, std::nullopt, c);
        }));
        for (const auto& cmp : c.comparators) {
            out.push_back(timed_run(named(cmp), c, [&](std::uint64_t&) {
                return mc_baseline(target, g, theta0, c.T, c.Ts, AveragingConfig{c.kappa},
                                   derive_stream(seed, "mc"), c.store_stride)
                    .series;
            }));
        }
        return out;
    }

    const GfoProblem prob = gfo_problem(c, parse_method(c.gfo.method));
    Vector theta0 = c.gfo.theta0;
    if (theta0.empty()) {
        std::mt19937_64 rng(derive_stream(seed, "theta0"));
        for (std::size_t i = 0; i < c.gfo.dim; ++i) {
            theta0.push_back(uniform(rng, prob.box.lower[i], prob.box.upper[i]));
        }
    }
    out.push_back(timed_run(named("qsa"), c, [&](std::uint64_t& evals) {
        const GfoField field(prob);
        auto s = run_qsa(field, p, g, theta0, prob.box, c);
        evals = field.problem().objective.evaluations();
        return s;
    }));
    for (const auto& cmp : c.comparators) {
        out.push_back(timed_run(named(cmp), c, [&](std::uint64_t& evals) {
            GfoProblem sp = gfo_problem(c, cmp == "spsa2" ? GfoMethod::TwoQSGD : GfoMethod::OneQSGD);
            const GfoField field(std::move(sp));
            GaussianProbe source(probe_covariance(p), derive_stream(seed, cmp));
            const auto traj = integrate(field, source, g, theta0, c.T, c.Ts, field.problem().box, c.store_stride);
            evals = field.problem().objective.evaluations();
            return pr_average(traj, AveragingConfig{c.kappa});
        }));
    }
    return out;
}

std::vector<RunRecord> execute(const ExperimentConfig& c, std::size_t threads) {
    Shared shared;
    shared.cfg = &c;
    if (c.kind != ExperimentKind::LinearExample) {
        shared.omega = experiment_omega(c);
    }
    std::vector<Task> tasks;
    for (std::size_t r = 0; r < c.rho.size(); ++r) {
        for (std::size_t m = 0; m < c.runs; ++m) {
            tasks.push_back({r, m});
        }
    }
    std::vector<std::vector<RunRecord>> results(tasks.size());
    std::vector<std::exception_ptr> errors(tasks.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next++; i < tasks.size(); i = next++) {
            try {
                results[i] = run_task(shared, tasks[i]);
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    };
    if (threads == 0) {
        threads = std::max<std::size_t>(1, std::thread::hardware_concurrency());
    }
    threads = std::min(threads, tasks.size());
    if (threads <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (std::size_t t = 0; t < threads; ++t) {
            pool.emplace_back(worker);
        }
        for (auto& th : pool) {
            th.join();
        }
    }
    for (const auto& e : errors) {
        if (e) {
            std::rethrow_exception(e);
        }
    }
    std::vector<RunRecord> runs;
    for (auto& r : results) {
        for (auto& rec : r) {
            runs.push_back(std::move(rec));
        }
    }
    std::sort(runs.begin(), runs.end(), [](const RunRecord& a, const RunRecord& b) {
        return a.summary.run_id != b.summary.run_id ? a.summary.run_id < b.summary.run_id
                                                    : a.summary.estimator < b.summary.estimator;
    });
    return runs;
}

double error_of(std::span<const double> estimate, const Vector& star) {
    if (estimate.size() == 1) {
        return estimate[0] - star[0];
    }
    double s = 0.0;
    for (std::size_t i = 0; i < estimate.size(); ++i) {
        s += (estimate[i] - star[i]) * (estimate[i] - star[i]);
    }
    return std::sqrt(s);
}

std::vector<QmcAggregateRow> aggregate_rows(const ExperimentConfig& c, std::span<const RunRecord> runs) {
    const Vector star = theta_star(c);
    std::vector<QmcAggregateRow> rows;
    for (const auto& r : runs) {
        if (r.summary.diverged) {
            continue;
        }
        const double T = r.series.times.back();
        const double scale = std::pow(T, 2.0 * r.summary.rho);
        const double e = error_of(r.summary.terminal_pr, star);
        rows.push_back({r.summary.run_id, r.summary.estimator, r.summary.rho, T, e, scale * e});
        if (!r.summary.terminal_fb.empty()) {
            const double f = error_of(r.summary.terminal_fb, star);
            rows.push_back({r.summary.run_id, r.summary.estimator + "_fb", r.summary.rho, T, f, scale * f});
        }
    }
    return rows;
}

json vec_json(std::span<const double> v) { return json(std::vector<double>(v.begin(), v.end())); }

json eigen_json(const Eigen::VectorXd& v) {
    return json(std::vector<double>(v.data(), v.data() + v.size()));
}

json run_json(const RunSummary& s) {
    json j;
    j["run_id"] = s.run_id;
    j["replicate"] = s.replicate;
    j["estimator"] = s.estimator;
    j["rho"] = s.rho;
    j["seed"] = s.seed;
    j["file"] = s.file;
    j["terminal"] = {{"raw", vec_json(s.terminal_raw)}, {"pr", vec_json(s.terminal_pr)}};
    if (!s.terminal_fb.empty()) {
        j["terminal"]["fb"] = vec_json(s.terminal_fb);
    }
    j["evaluations"] = s.evaluations;
    j["diverged"] = s.diverged;
    if (s.diverged) {
        j["divergence_step"] = s.divergence_step;
        j["message"] = s.message;
    }
    return j;
}

json value_json(const config::Value& v) {
    switch (v.kind) {
        case config::Value::Kind::Number: return v.number;
        case config::Value::Kind::Bool: return v.boolean;
        case config::Value::Kind::String: return v.text;
        case config::Value::Kind::List: {
            json arr = json::array();
            for (const auto& x : v.items) {
                arr.push_back(value_json(x));
            }
            return arr;
        }
    }
    return nullptr;
}

std::string sanitize(std::string s) {
    std::replace(s.begin(), s.end(), ',', ';');
    std::replace(s.begin(), s.end(), '\n', ' ');
    return s;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw IoError("cannot write '" + path.string() + "'");
    }
    out << text;
    if (!out) {
        throw IoError("write failed for '" + path.string() + "'");
    }
}

std::string join(std::span<const double> v, char sep) {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i > 0) {
            out += sep;
        }
        out += csv::format_double(v[i]);
    }
    return out;
}

Vector split_numbers(const std::string& s) {
    Vector out;
    if (s.empty()) {
        return out;
    }
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ';')) {
        out.push_back(std::stod(item));
    }
    return out;
}

const char* kRunsHeader =
    "run_id,replicate,estimator,rho,seed,file,evaluations,diverged,divergence_step,terminal_raw,terminal_pr,"
    "terminal_fb,message";

std::string runs_csv(std::span<const RunRecord> runs) {
    std::ostringstream os;
    os << kRunsHeader << "\n";
    for (const auto& r : runs) {
        const auto& s = r.summary;
        os << s.run_id << ',' << s.replicate << ',' << s.estimator << ',' << csv::format_double(s.rho) << ','
           << s.seed << ',' << s.file << ',' << s.evaluations << ',' << (s.diverged ? 1 : 0) << ','
           << s.divergence_step << ',' << join(s.terminal_raw, ';') << ',' << join(s.terminal_pr, ';') << ','
           << join(s.terminal_fb, ';') << ',' << sanitize(s.message) << "\n";
    }
    return os.str();
}

std::vector<RunSummary> read_runs_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot read '" + path.string() + "'");
    }
    std::string line;
    if (!std::getline(in, line) || line != kRunsHeader) {
        throw IoError("unexpected header in '" + path.string() + "'");
    }
    std::vector<RunSummary> out;
    while (std::getline(in, line)) {
        if (line.empty()) {
            continue;
        }
        auto cells = csv::split_line(line);
        if (cells.size() == 12) {
            cells.emplace_back();  // empty trailing message
        }
        if (cells.size() != 13) {
            throw IoError("malformed row in '" + path.string() + "'");
        }
        try {
            RunSummary s;
            s.run_id = std::stoull(cells[0]);
            s.replicate = std::stoull(cells[1]);
            s.estimator = cells[2];
            s.rho = std::stod(cells[3]);
            s.seed = std::stoull(cells[4]);
            s.file = cells[5];
            s.evaluations = std::stoull(cells[6]);
            s.diverged = cells[7] == "1";
            s.divergence_step = std::stoull(cells[8]);
            s.terminal_raw = split_numbers(cells[9]);
            s.terminal_pr = split_numbers(cells[10]);
            s.terminal_fb = split_numbers(cells[11]);
            s.message = cells[12];
            out.push_back(std::move(s));
        } catch (const std::logic_error&) {
            throw IoError("malformed row in '" + path.string() + "'");
        }
    }
    return out;
}

// Groups of successful runs sharing (rho, estimator), in first-seen order.
std::vector<std::pair<std::pair<double, std::string>, std::vector<const RunRecord*>>> groups(
    std::span<const RunRecord> runs) {
    std::vector<std::pair<std::pair<double, std::string>, std::vector<const RunRecord*>>> out;
    for (const auto& r : runs) {
        if (r.summary.diverged) {
            continue;
        }
        const auto key = std::make_pair(r.summary.rho, r.summary.estimator);
        auto it = std::find_if(out.begin(), out.end(), [&](const auto& g) { return g.first == key; });
        if (it == out.end()) {
            out.push_back({key, {}});
            it = std::prev(out.end());
        }
        it->second.push_back(&r);
    }
    return out;
}

Channel parse_channel(const std::string& c) {
    if (c == "raw") {
        return Channel::Raw;
    }
    return c == "fb" ? Channel::Fb : Channel::Pr;
}

json stats_json(const std::vector<double>& xs) {
    if (xs.empty()) {
        return nullptr;
    }
    double mean = 0.0;
    for (double x : xs) {
        mean += x;
    }
    mean /= static_cast<double>(xs.size());
    double var = 0.0;
    for (double x : xs) {
        var += (x - mean) * (x - mean);
    }
    const double sd = xs.size() > 1 ? std::sqrt(var / static_cast<double>(xs.size() - 1)) : 0.0;
    const auto flags = mad_outliers(xs);
    return {{"mean", mean},
            {"std", sd},
            {"median", median(xs)},
            {"iqr", quantile(xs, 0.75) - quantile(xs, 0.25)},
            {"outliers", std::count(flags.begin(), flags.end(), true)}};
}

}  // namespace

Vector theta_star(const ExperimentConfig& c) {
    switch (c.kind) {
        case ExperimentKind::LinearExample: return Vector(2, 0.0);
        case ExperimentKind::Qmc: return Vector{qmc_target(c).true_mean.value_or(0.0)};
        case ExperimentKind::Gfo: return builtin_objective(c.gfo.objective, c.gfo.dim).theta_opt();
    }
    return {};
}

std::vector<double> checkpoint_times(const ExperimentConfig& c) {
    const std::size_t n = c.analysis.checkpoints;
    std::vector<double> out;
    const double lo = c.window().first;
    for (std::size_t i = 1; i <= n; ++i) {
        const double frac = static_cast<double>(i) / static_cast<double>(n);
        double t = c.T * frac;
        if (c.analysis.checkpoint_spacing == "log") {
            t = n == 1 ? c.T : lo * std::pow(c.T / lo, static_cast<double>(i - 1) / static_cast<double>(n - 1));
        }
        out.push_back(grid_time(c, t));
    }
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

json config_json(const ExperimentConfig& cfg) {
    json out = json::object();
    for (const auto& section : config::parse_sections(config::serialize(cfg))) {
        json s = json::object();
        for (const auto& e : section.entries) {
            s[e.key] = value_json(e.value);
        }
        out[section.name] = s;
    }
    return out;
}

json summarize(const ExperimentConfig& c, std::span<const RunRecord> runs) {
    const Vector star = theta_star(c);
    const auto [lo, hi] = c.window();
    const auto grouped = groups(runs);

    json summary;
    summary["experiment"] = {{"name", c.name}, {"kind", config::kind_name(c.kind)}};
    summary["config"] = config_json(c);
    if (c.kind != ExperimentKind::LinearExample) {
        summary["probe"] = {{"omega", experiment_omega(c)}, {"convention", c.probe.convention}};
    }

    json channels = json::object();
    for (const auto& ch : c.channels) {
        json list = json::array();
        for (const auto& [key, members] : grouped) {
            const Channel channel = parse_channel(ch);
            if (channel == Channel::Fb && !members.front()->series.has_fb()) {
                continue;
            }
            std::vector<EstimateSeries> series;
            for (const auto* r : members) {
                series.push_back(r->series);
            }
            json entry{{"rho", key.first}, {"estimator", key.second}, {"runs", members.size()},
                       {"window", {lo, hi}}};
            try {
                const RateFit fit = fit_rate_rms(series, channel, star, lo, hi);
                entry["slope"] = fit.slope;
                entry["intercept"] = fit.intercept;
                entry["r2"] = fit.r_squared;
                entry["points"] = fit.points;
            } catch (const Error& err) {
                entry["error"] = err.what();
            }
            list.push_back(entry);
        }
        channels[ch] = list;
    }
    summary["channels"] = channels;

    if (c.kind == ExperimentKind::LinearExample) {
        const auto model = linear_model(c);
        const Eigen::Vector2d closed = ybar_closed_form(model);
        json ybar{{"closed_form", eigen_json(closed)}};
        std::optional<Eigen::VectorXd> numeric;
        if (c.analysis.ybar_T) {
            const LinearExampleField field(model);
            const auto p = model.probe();
            numeric = ybar_numeric(field, p, star, model.A_star, *c.analysis.ybar_T, c.analysis.ybar_dt);
            ybar["numeric"] = eigen_json(*numeric);
            ybar["numeric_backward"] = eigen_json(
                ybar_numeric(field, p, star, model.A_star, *c.analysis.ybar_T, c.analysis.ybar_dt, Direction::Backward));
            ybar["T"] = *c.analysis.ybar_T;
            ybar["dt"] = c.analysis.ybar_dt;
        }
        summary["ybar"] = ybar;

        // theta_pr(T) - theta* = a_T c(kappa, rho) Ybar + o(a_T)
        json bias = json::array();
        for (const auto& [key, members] : grouped) {
            const double rho = key.first;
            const double T = members.front()->series.times.back();
            const double aT = GainSchedule{c.a0, rho, c.capped}.at(T);
            const double ck = c_kappa_rho(c.kappa, rho);
            Eigen::Vector2d measured = Eigen::Vector2d::Zero();
            for (const auto* r : members) {
                for (int i = 0; i < 2; ++i) {
                    measured[i] += (r->summary.terminal_pr[static_cast<std::size_t>(i)] -
                                    star[static_cast<std::size_t>(i)]) / aT;
                }
            }
            measured /= static_cast<double>(members.size());
            json entry{{"rho", rho}, {"estimator", key.second}, {"T", T}, {"c_kappa_rho", ck},
                       {"measured", eigen_json(measured)}, {"predicted_closed_form", eigen_json(ck * closed)}};
            if (numeric) {
                entry["predicted_numeric"] = eigen_json(ck * *numeric);
            }
            bias.push_back(entry);
        }
        summary["pr_bias"] = bias;
    }

    json trace = json::array();
    const auto checkpoints = checkpoint_times(c);
    const Channel cov_channel = parse_channel(c.analysis.covariance_channel);
    for (const auto& [key, members] : grouped) {
        if (cov_channel == Channel::Fb && !members.front()->series.has_fb()) {
            continue;
        }
        json points = json::array();
        json rmse = json::array();
        for (double t : checkpoints) {
            std::vector<Vector> states;
            for (const auto* r : members) {
                const auto k = nearest_index(r->series.times, t);
                const auto v = r->series.at(cov_channel, k);
                states.emplace_back(v.begin(), v.end());
            }
            const auto cov = empirical_covariance(states, t);
            points.push_back({t, scaled_trace_root(cov, key.first)});
            rmse.push_back({t, scaled_rmse(cov, star, key.first)});
        }
        trace.push_back({{"rho", key.first}, {"estimator", key.second}, {"channel", c.analysis.covariance_channel},
                         {"runs", members.size()}, {"points", points}, {"rmse", rmse}});
    }
    summary["covariance_trace"] = trace;

    json terminal = json::array();
    const auto rows = aggregate_rows(c, runs);
    std::vector<std::pair<double, std::string>> keys;
    for (const auto& row : rows) {
        const auto k = std::make_pair(row.rho, row.estimator);
        if (std::find(keys.begin(), keys.end(), k) == keys.end()) {
            keys.push_back(k);
        }
    }
    for (const auto& [rho, est] : keys) {
        std::vector<double> err;
        std::vector<double> scaled;
        for (const auto& row : rows) {
            if (row.rho == rho && row.estimator == est) {
                err.push_back(row.error);
                scaled.push_back(row.scaled_error);
            }
        }
        double mse = 0.0;
        for (double e : err) {
            mse += e * e;
        }
        mse /= static_cast<double>(err.size());
        json entry{{"rho", rho}, {"estimator", est}, {"runs", err.size()}, {"mse", mse},
                   {"error", stats_json(err)}, {"scaled_error", stats_json(scaled)}};
        if (c.analysis.success_radius) {
            const auto within = std::count_if(err.begin(), err.end(), [&](double e) {
                return std::abs(e) <= *c.analysis.success_radius;
            });
            entry["fraction_within"] = static_cast<double>(within) / static_cast<double>(err.size());
            entry["success_radius"] = *c.analysis.success_radius;
        }
        terminal.push_back(entry);
    }
    summary["terminal"] = terminal;

    json evals = json::object();
    json diverged = json::array();
    json run_list = json::array();
    for (const auto& r : runs) {
        run_list.push_back(run_json(r.summary));
        const std::uint64_t prev = evals.contains(r.summary.estimator) ? evals[r.summary.estimator].get<std::uint64_t>() : 0;
        evals[r.summary.estimator] = prev + r.summary.evaluations;
        if (r.summary.diverged) {
            diverged.push_back({{"run_id", r.summary.run_id},
                                {"estimator", r.summary.estimator},
                                {"step", r.summary.divergence_step},
                                {"message", r.summary.message}});
        }
    }
    summary["evaluations"] = evals;
    summary["diverged"] = diverged;
    summary["runs"] = run_list;
    return summary;
}

ExperimentResult run_experiment(const ExperimentConfig& cfg, const RunOptions& options) {
    config::validate(cfg);
    ExperimentResult result;
    result.config = cfg;
    result.runs = execute(cfg, options.threads);
    result.summary = summarize(cfg, result.runs);
    if (!options.write_artifacts) {
        return result;
    }

    const std::filesystem::path root = options.out_dir.value_or(std::filesystem::path(cfg.output.dir));
    result.dir = root / cfg.name;
    std::error_code ec;
    std::filesystem::create_directories(result.dir, ec);
    if (ec) {
        throw IoError("cannot create '" + result.dir.string() + "': " + ec.message());
    }
    for (const auto& r : result.runs) {
        if (r.summary.diverged) {
            continue;
        }
        std::ostringstream os;
        write_series_csv(os, r.series);
        write_text(result.dir / r.summary.file, os.str());
    }
    {
        std::ostringstream os;
        const auto rows = aggregate_rows(cfg, result.runs);
        write_qmc_aggregate(os, rows);
        write_text(result.dir / "aggregate.csv", os.str());
    }
    write_text(result.dir / "runs.csv", runs_csv(result.runs));
    {
        std::ostringstream os;
        os << "run_id,estimator,wall_seconds\n";
        for (const auto& r : result.runs) {
            os << r.summary.run_id << ',' << r.summary.estimator << ',' << csv::format_double(r.summary.wall_seconds)
               << "\n";
        }
        write_text(result.dir / "timing.csv", os.str());
    }
    write_text(result.dir / "config.echo", config::serialize(cfg));
    write_text(result.dir / "summary.json", result.summary.dump(2) + "\n");
    return result;
}

json analyze(const std::filesystem::path& dir) {
    const ExperimentConfig cfg = config::load_config((dir / "config.echo").string());
    std::vector<RunRecord> runs;
    for (auto& s : read_runs_csv(dir / "runs.csv")) {
        RunRecord rec;
        if (!s.diverged) {
            std::ifstream in(dir / s.file);
            if (!in) {
                throw IoError("missing run file '" + (dir / s.file).string() + "'");
            }
            rec.series = read_series_csv(in);
        }
        rec.summary = std::move(s);
        runs.push_back(std::move(rec));
    }
    json summary = summarize(cfg, runs);
    write_text(dir / "summary.json", summary.dump(2) + "\n");
    return summary;
}

}  // namespace qsa::harness
