#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "qsa/averaging.hpp"
#include "qsa/qsa_core.hpp"

namespace qsa {

/// Integrand h on [-1, 1]^dim and, when known, its mean under the probe.
struct QmcTarget {
    std::size_t dim = 0;
    std::function<double(std::span<const double>)> h;
    std::optional<double> true_mean;
    std::optional<double> gamma;
    std::string name = "h";
};

/// h(x1, x2) = exp(gamma x1) sin(2 pi (x2 - x1)); its mean over uniform
/// (or independent triangle-wave) inputs on [-1, 1]^2 is 0 for every gamma.
QmcTarget exp_sine_target(double gamma);

QmcTarget constant_target(double c, std::size_t dim);

/// Scalar field -theta + h(probe).
class QmcField final : public VectorField {
public:
    explicit QmcField(QmcTarget target) : target_(std::move(target)) {}

    [[nodiscard]] std::size_t dim() const override { return 1; }
    [[nodiscard]] std::size_t probe_dim() const override { return target_.dim; }
    [[nodiscard]] std::string name() const override { return "qmc:" + target_.name; }
    [[nodiscard]] std::optional<Vector> theta_star() const override;

    void eval(std::span<const double> theta, std::span<const double> probe, double,
              std::span<double> out) const override {
        out[0] = -theta[0] + target_.h(probe);
    }
    void jacobian(std::span<const double>, std::span<const double>, double, std::span<double> out) const override {
        out[0] = -1.0;
    }

    [[nodiscard]] const QmcTarget& target() const noexcept { return target_; }

private:
    QmcTarget target_;
};

/// integrate on QmcField followed by pr_average.
EstimateSeries qmc_estimate(const QmcTarget& target, const ProbingSignal& p, const GainSchedule& g, double theta0,
                            double T, double Ts, const AveragingConfig& cfg, std::size_t stride = 1);

struct McEstimate {
    EstimateSeries series;
    /// Plain average of h over the draws made before each stored time
    /// (theta0 at t = 0).
    std::vector<double> sample_mean;
    /// Average of h over the draws inside the PR window [(1 - 1/kappa) T, T].
    std::vector<double> sample_mean_window;
};

/// The same recursion with i.i.d. uniform draws on [-1, 1]^dim in place of
/// the probe.
McEstimate mc_baseline(const QmcTarget& target, const GainSchedule& g, double theta0, double T, double Ts,
                       const AveragingConfig& cfg, std::uint64_t seed, std::size_t stride = 1);

struct PartialSumPoint {
    std::uint64_t n = 0;
    double abs_sum = 0.0;
    double running_sup = 0.0;
};

struct PartialSumResult {
    double sup_abs = 0.0;
    double mean_used = 0.0;
    bool known_mean = false;
    /// One entry per power of ten up to N, plus N itself.
    std::vector<PartialSumPoint> trace;

    /// Running sup at the largest checkpoint not exceeding n.
    [[nodiscard]] double sup_up_to(std::uint64_t n) const;
};

/// S_n = sum_{k=1..n} (h(probe(k)) - mean) sampled at integer times k.
/// Uses `mean` when supplied, otherwise the average over k = 1..10 N.
PartialSumResult partial_sum_check(const std::function<double(std::span<const double>)>& h, const ProbingSignal& p,
                                   std::uint64_t N, std::optional<double> mean = std::nullopt);

struct QmcAggregateRow {
    std::size_t run_id = 0;
    std::string estimator;
    double rho = 0.0;
    double T = 0.0;
    double error = 0.0;
    double scaled_error = 0.0;
};

/// CSV `run_id,estimator,rho,T,error,scaled_error`.
void write_qmc_aggregate(std::ostream& os, std::span<const QmcAggregateRow> rows);
std::vector<QmcAggregateRow> read_qmc_aggregate(std::istream& is);

}  // namespace qsa
