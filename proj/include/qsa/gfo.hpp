#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "qsa/qsa_core.hpp"

namespace qsa {

/// Benchmark objective with a known minimizer. Every call increments a
/// per-instance evaluation counter; copies count independently.
class Objective {
public:
    using Function = std::function<double(std::span<const double>)>;

    Objective(std::string name, std::size_t dim, Function fn, Vector theta_opt, double min_value,
              BoxConstraint default_box);

    double operator()(std::span<const double> theta) const;

    [[nodiscard]] const std::string& name() const noexcept { return name_; }
    [[nodiscard]] std::size_t dim() const noexcept { return dim_; }
    [[nodiscard]] const Vector& theta_opt() const noexcept { return theta_opt_; }
    [[nodiscard]] double min_value() const noexcept { return min_value_; }
    [[nodiscard]] const BoxConstraint& default_box() const noexcept { return default_box_; }
    [[nodiscard]] std::uint64_t evaluations() const noexcept { return evaluations_; }
    void reset_evaluations() const noexcept { evaluations_ = 0; }

private:
    std::string name_;
    std::size_t dim_;
    Function fn_;
    Vector theta_opt_;
    double min_value_;
    BoxConstraint default_box_;
    mutable std::uint64_t evaluations_ = 0;
};

/// rastrigin, ackley (any dim >= 1) and three_hump_camel (dim 2). Throws
/// DimensionMismatch for a bad dimension and Error for an unknown name.
Objective builtin_objective(std::string_view name, std::size_t dim);
std::vector<std::string> builtin_objective_names();

/// 0.5 (x - c)^T Q (x - c) with Q symmetric positive definite.
Objective quadratic_objective(const Matrix& Q, const Vector& center);

/// Strongly convex but not quadratic: the quadratic above plus
/// sum_i w_i (exp(s_i y_i) - 1 - s_i y_i), y = x - c, w_i > 0.
/// The exponential terms have non-zero third derivatives at the minimizer c.
Objective convex_exponential_objective(const Matrix& Q, const Vector& center, const Vector& weights,
                                       const Vector& signs);

enum class GfoMethod { OneQSGD, TwoQSGD };

const char* method_name(GfoMethod m);

struct GfoProblem {
    Objective objective;
    double epsilon;
    Matrix gain_matrix;
    BoxConstraint box;
    GfoMethod method;

    /// Identity gain matrix and the objective's default box.
    static GfoProblem make(Objective objective, double epsilon, GfoMethod method);
    void validate() const;
};

/// -(1/eps) M probe Obj(theta + eps probe); one objective evaluation.
Vector f_1qsgd(std::span<const double> theta, std::span<const double> probe, const GfoProblem& prob);

/// -(1/(2 eps)) M probe [Obj(theta + eps probe) - Obj(theta - eps probe)]; two evaluations.
Vector f_2qsgd(std::span<const double> theta, std::span<const double> probe, const GfoProblem& prob);

/// The qSGD field of a problem, dispatching on its method.
class GfoField final : public VectorField {
public:
    explicit GfoField(GfoProblem problem);

    [[nodiscard]] std::size_t dim() const override { return problem_.objective.dim(); }
    [[nodiscard]] std::size_t probe_dim() const override { return problem_.objective.dim(); }
    [[nodiscard]] std::string name() const override;
    [[nodiscard]] std::optional<Vector> theta_star() const override { return problem_.objective.theta_opt(); }

    void eval(std::span<const double> theta, std::span<const double> probe, double t,
              std::span<double> out) const override;

    [[nodiscard]] const GfoProblem& problem() const noexcept { return problem_; }

private:
    GfoProblem problem_;
    mutable Vector scratch_;
};

/// max over thetas of |<f_1Q(theta, .)>_T - <f_2Q(theta, .)>_T| using the
/// probe's empirical average on a dt grid.
double check_fbar_equality(const GfoProblem& one_point, const GfoProblem& two_point, const ProbingSignal& p,
                           std::span<const Vector> thetas, double T, double dt);

/// Stochastic counterpart of a qSGD run: the same Euler recursion and
/// projection with i.i.d. N(0, cov) exploration in place of the probe.
Trajectory run_spsa(const GfoProblem& prob, const Matrix& cov, const GainSchedule& g, const Vector& theta0,
                    double T, double Ts, std::uint64_t seed, std::size_t stride = 1);

}  // namespace qsa
