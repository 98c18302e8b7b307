#pragma once

#include <functional>
#include <span>
#include <utility>
#include <vector>

#include "qsa/averaging.hpp"
#include "qsa/qsa_core.hpp"

namespace qsa {

/// Two-dimensional linear QSA model
///
///     f(theta, t) = (A* + A(t)) theta + forcing * b(t)
///     A(t) = [[4 sin(w11 t), sin(w21 t)], [sin(w12 t), 4 sin(w22 t)]]
///     b(t) = [2 cos(w11 t), cos(w22 t)]
///
/// with frequencies in radians per unit time and theta* = 0.
struct LinearExampleModel {
    Matrix A_star = -0.8 * Matrix::Identity(2, 2);
    double w11 = 0.0;
    double w21 = 0.0;
    double w12 = 0.0;
    double w22 = 0.0;
    double forcing = 10.0;

    /// A* = -0.8 I and frequencies [pi, sqrt 3, 4, sqrt 5] / 5.
    static LinearExampleModel standard();

    /// Throws ValidationError unless A* is 2x2 Hurwitz and all frequencies are positive.
    void validate() const;

    /// Six-component probe (sin w11, sin w21, sin w12, sin w22, cos w11, cos w22).
    [[nodiscard]] ProbingSignal probe() const;
};

class LinearExampleField final : public VectorField {
public:
    explicit LinearExampleField(LinearExampleModel model);

    [[nodiscard]] std::size_t dim() const override { return 2; }
    [[nodiscard]] std::size_t probe_dim() const override { return 6; }
    [[nodiscard]] std::string name() const override { return "linear_example"; }
    [[nodiscard]] std::optional<Vector> theta_star() const override { return Vector{0.0, 0.0}; }

    void eval(std::span<const double> theta, std::span<const double> probe, double t,
              std::span<double> out) const override;
    void jacobian(std::span<const double> theta, std::span<const double> probe, double t,
                  std::span<double> out) const override;

    [[nodiscard]] const LinearExampleModel& model() const noexcept { return model_; }

private:
    LinearExampleModel model_;
};

/// [A*]^-1 Upsilon with Upsilon = (-4 F / w11, -2 F / w22) for forcing F.
Eigen::Vector2d ybar_closed_form(const LinearExampleModel& model);

/// Brute-force bias vector. With I_t = sum_r [A(theta*, probe_r) - A*] dt,
///
///     Upsilon = (1/T) sum_t I_t f(theta*, probe_t) dt,   Ybar = [A*]^-1 Upsilon.
///
/// The Jacobian comes from f.jacobian. Direction::Backward uses probe(-t).
/// Throws SingularAStar.
Eigen::VectorXd ybar_numeric(const VectorField& f, const ProbingSignal& p, const Vector& theta_star,
                             const Matrix& A_star, double T, double dt, Direction direction = Direction::Forward);

/// ybar_numeric evaluated at every horizon of an increasing ladder in one pass.
std::vector<Eigen::VectorXd> ybar_numeric_ladder(const VectorField& f, const ProbingSignal& p,
                                                 const Vector& theta_star, const Matrix& A_star,
                                                 std::span<const double> horizons, double dt,
                                                 Direction direction = Direction::Forward);

/// Nonlinear model with probe-dependent Jacobian and theta* = 0:
///
///     f1 = -(1 + q1/2) x1 - sin(x1)/4 + q2 x2 / 2 + 4 (q2^2 - 1/2)
///     f2 = -(1 + q2/2) x2 - sin(x2)/4 + q1 x1 / 2 + 4 (q1^2 - 1/2)
///
/// For a unit-amplitude cosine probe the averaged Jacobian at 0 is -1.25 I.
class MultiplicativeExampleField final : public VectorField {
public:
    [[nodiscard]] std::size_t dim() const override { return 2; }
    [[nodiscard]] std::size_t probe_dim() const override { return 2; }
    [[nodiscard]] std::string name() const override { return "multiplicative_example"; }
    [[nodiscard]] std::optional<Vector> theta_star() const override { return Vector{0.0, 0.0}; }

    void eval(std::span<const double> theta, std::span<const double> probe, double t,
              std::span<double> out) const override;

    static Matrix a_star() { return -1.25 * Matrix::Identity(2, 2); }
};

struct CovarianceSummary {
    Matrix sigma_bar;
    Vector theta_bar;
    std::size_t M = 0;
    double T = 0.0;

    [[nodiscard]] double trace() const { return sigma_bar.trace(); }
};

/// Sigma = (1/M) sum x x^T - xbar xbar^T over the run list.
CovarianceSummary empirical_covariance(std::span<const Vector> terminal_states, double T = 0.0);

/// T^{2 rho} sqrt(tr Sigma).
double scaled_trace_root(const CovarianceSummary& c, double rho);

/// T^{2 rho} sqrt(tr Sigma + |xbar - theta*|^2).
double scaled_rmse(const CovarianceSummary& c, const Vector& theta_star, double rho);

struct RateFit {
    double slope = 0.0;
    double intercept = 0.0;
    double r_squared = 0.0;
    double t_lo = 0.0;
    double t_hi = 0.0;
    std::size_t points = 0;
};

/// OLS of log(error) on log(T) over the given samples with t_lo <= T <= t_hi.
/// Throws DegenerateWindow for fewer than 10 points or a non-positive error.
RateFit fit_rate(std::span<const double> times, std::span<const double> errors, double t_lo, double t_hi);

/// Grid indices nearest to `per_decade` log-spaced times in [t_lo, t_hi]
/// (duplicates removed).
std::vector<std::size_t> log_spaced_indices(std::span<const double> times, double t_lo, double t_hi,
                                            std::size_t per_decade = 50);

/// Euclidean error of one channel against theta* at every grid point.
std::vector<double> channel_errors(const EstimateSeries& s, Channel c, const Vector& theta_star);

/// fit_rate on the channel error |x_T - theta*| at log-spaced grid points
/// (50 per decade) within the window.
RateFit fit_rate(const EstimateSeries& s, Channel c, const Vector& theta_star, double t_lo, double t_hi);

/// Same, using the root-mean-square error across runs sharing a time grid.
RateFit fit_rate_rms(std::span<const EstimateSeries> runs, Channel c, const Vector& theta_star, double t_lo,
                     double t_hi);

/// |<g(probe) H>| with H_t = -int_0^t (h(probe_s) - <h>) ds re-centred to mean zero.
double orthogonality_check(const std::function<double(std::span<const double>)>& g,
                           const std::function<double(std::span<const double>)>& h, const ProbingSignal& p, double T,
                           double dt);

/// Flags values further than `threshold` scaled MADs (1.4826 x median absolute
/// deviation) from the median.
std::vector<bool> mad_outliers(std::span<const double> values, double threshold = 3.0);

double median(std::vector<double> values);
double quantile(std::vector<double> values, double q);

}  // namespace qsa
