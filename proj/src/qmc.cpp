#include "qsa/qmc.hpp"

#include <istream>
#include <numbers>
#include <ostream>

#include "qsa/csv.hpp"

namespace qsa {

QmcTarget exp_sine_target(double gamma) {
    QmcTarget t;
    t.dim = 2;
    t.h = [gamma](std::span<const double> x) {
        return std::exp(gamma * x[0]) * std::sin(2.0 * std::numbers::pi * (x[1] - x[0]));
    };
    t.true_mean = 0.0;
    t.gamma = gamma;
    t.name = "exp_sine";
    return t;
}

QmcTarget constant_target(double c, std::size_t dim) {
    QmcTarget t;
    t.dim = dim;
    t.h = [c](std::span<const double>) { return c; };
    t.true_mean = c;
    t.name = "constant";
    return t;
}

std::optional<Vector> QmcField::theta_star() const {
    if (target_.true_mean) {
        return Vector{*target_.true_mean};
    }
    return std::nullopt;
}

EstimateSeries qmc_estimate(const QmcTarget& target, const ProbingSignal& p, const GainSchedule& g, double theta0,
                            double T, double Ts, const AveragingConfig& cfg, std::size_t stride) {
    const QmcField field(target);
    return pr_average(integrate(field, p, g, {theta0}, T, Ts, std::nullopt, Direction::Forward, stride), cfg);
}

namespace {

// Uniform draws that also keep the running sum of h over everything drawn.
class RecordingUniform final : public ProbeSource {
public:
    RecordingUniform(const QmcTarget& target, std::uint64_t seed) : target_(target), inner_(target.dim, -1.0, 1.0, seed) {}

    [[nodiscard]] std::size_t dim() const override { return inner_.dim(); }
    void sample(std::size_t step, double t, std::span<double> out) override {
        inner_.sample(step, t, out);
        sum_ += target_.h(out);
        sums_.push_back(sum_);
    }

    [[nodiscard]] const std::vector<double>& sums() const noexcept { return sums_; }

private:
    const QmcTarget& target_;
    UniformProbe inner_;
    double sum_ = 0.0;
    std::vector<double> sums_;
};

}  // namespace

McEstimate mc_baseline(const QmcTarget& target, const GainSchedule& g, double theta0, double T, double Ts,
                       const AveragingConfig& cfg, std::uint64_t seed, std::size_t stride) {
    const QmcField field(target);
    RecordingUniform source(target, seed);
    const auto traj = integrate(field, source, g, {theta0}, T, Ts, std::nullopt, stride);
    McEstimate out;
    out.series = pr_average(traj, cfg);
    out.sample_mean.resize(traj.size());
    out.sample_mean_window.resize(traj.size());
    out.sample_mean[0] = theta0;
    out.sample_mean_window[0] = theta0;
    const auto& sums = source.sums();
    const double frac = 1.0 - 1.0 / cfg.kappa;
    for (std::size_t k = 1; k < traj.size(); ++k) {
        const std::size_t n = k * stride;
        out.sample_mean[k] = sums[n - 1] / static_cast<double>(n);
        // Draws are made at t_j = j Ts; keep those with t_j >= (1 - 1/kappa) T.
        auto first = static_cast<std::size_t>(std::ceil(frac * static_cast<double>(n) - 1e-9));
        first = std::min(first, n - 1);
        const double before = first == 0 ? 0.0 : sums[first - 1];
        out.sample_mean_window[k] = (sums[n - 1] - before) / static_cast<double>(n - first);
    }
    return out;
}

double PartialSumResult::sup_up_to(std::uint64_t n) const {
    double best = 0.0;
    for (const auto& pt : trace) {
        if (pt.n <= n) {
            best = pt.running_sup;
        }
    }
    return best;
}

PartialSumResult partial_sum_check(const std::function<double(std::span<const double>)>& h, const ProbingSignal& p,
                                   std::uint64_t N, std::optional<double> mean) {
    if (N == 0) {
        throw Error("partial_sum_check needs N >= 1");
    }
    Vector sample(p.dim());
    PartialSumResult res;
    if (mean) {
        res.mean_used = *mean;
        res.known_mean = true;
    } else {
        const std::uint64_t long_run = 10 * N;
        double acc = 0.0;
        for (std::uint64_t k = 1; k <= long_run; ++k) {
            p.eval(static_cast<double>(k), sample);
            acc += h(sample);
        }
        res.mean_used = acc / static_cast<double>(long_run);
    }
    double s = 0.0;
    double sup = 0.0;
    std::uint64_t next = 10;
    for (std::uint64_t k = 1; k <= N; ++k) {
        p.eval(static_cast<double>(k), sample);
        s += h(sample) - res.mean_used;
        sup = std::max(sup, std::abs(s));
        if (k == next || k == N) {
            res.trace.push_back({k, std::abs(s), sup});
            if (k == next) {
                next *= 10;
            }
        }
    }
    res.sup_abs = sup;
    return res;
}

void write_qmc_aggregate(std::ostream& os, std::span<const QmcAggregateRow> rows) {
    os << "run_id,estimator,rho,T,error,scaled_error\n";
    for (const auto& r : rows) {
        os << r.run_id << ',' << r.estimator << ',' << csv::format_double(r.rho) << ',' << csv::format_double(r.T)
           << ',' << csv::format_double(r.error) << ',' << csv::format_double(r.scaled_error) << '\n';
    }
}

std::vector<QmcAggregateRow> read_qmc_aggregate(std::istream& is) {
    std::string line;
    if (!std::getline(is, line) || line != "run_id,estimator,rho,T,error,scaled_error") {
        throw IoError("aggregate CSV header must be run_id,estimator,rho,T,error,scaled_error");
    }
    std::vector<QmcAggregateRow> rows;
    while (std::getline(is, line)) {
        if (line.empty()) {
            continue;
        }
        const auto cells = csv::split_line(line);
        if (cells.size() != 6) {
            throw IoError("aggregate CSV row must have 6 cells: " + line);
        }
        QmcAggregateRow r;
        try {
            r.run_id = std::stoull(cells[0]);
            r.estimator = cells[1];
            r.rho = std::stod(cells[2]);
            r.T = std::stod(cells[3]);
            r.error = std::stod(cells[4]);
            r.scaled_error = std::stod(cells[5]);
        } catch (const std::exception&) {
            throw IoError("malformed aggregate CSV row: " + line);
        }
        rows.push_back(std::move(r));
    }
    return rows;
}

}  // namespace qsa
