#include "qsa/gfo.hpp"

#include <numbers>

namespace qsa {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

double rastrigin(std::span<const double> x) {
    double s = 10.0 * static_cast<double>(x.size());
    for (double xi : x) {
        s += xi * xi - 10.0 * std::cos(kTwoPi * xi);
    }
    return s;
}

double ackley(std::span<const double> x) {
    const auto d = static_cast<double>(x.size());
    double sq = 0.0;
    double cs = 0.0;
    for (double xi : x) {
        sq += xi * xi;
        cs += std::cos(kTwoPi * xi);
    }
    return -20.0 * std::exp(-0.2 * std::sqrt(sq / d)) - std::exp(cs / d) + 20.0 + std::numbers::e;
}

double three_hump_camel(std::span<const double> x) {
    const double a = x[0];
    const double b = x[1];
    const double a2 = a * a;
    return 2.0 * a2 - 1.05 * a2 * a2 + a2 * a2 * a2 / 6.0 + a * b + b * b;
}

void apply_gain(const Matrix& M, std::span<const double> probe, double scale, std::span<double> out) {
    const auto d = static_cast<Eigen::Index>(probe.size());
    Eigen::Map<const Eigen::VectorXd> p(probe.data(), d);
    Eigen::Map<Eigen::VectorXd> o(out.data(), d);
    o.noalias() = scale * (M * p);
}

void field_1q(std::span<const double> theta, std::span<const double> probe, const GfoProblem& prob,
              std::span<double> shifted, std::span<double> out) {
    const double eps = prob.epsilon;
    for (std::size_t i = 0; i < theta.size(); ++i) {
        shifted[i] = theta[i] + eps * probe[i];
    }
    const double value = prob.objective(shifted);
    if (!std::isfinite(value)) {
        throw NonFiniteObjective("objective '" + prob.objective.name() + "' returned a non-finite value");
    }
    apply_gain(prob.gain_matrix, probe, -value / eps, out);
}

void field_2q(std::span<const double> theta, std::span<const double> probe, const GfoProblem& prob,
              std::span<double> shifted, std::span<double> out) {
    const double eps = prob.epsilon;
    for (std::size_t i = 0; i < theta.size(); ++i) {
        shifted[i] = theta[i] + eps * probe[i];
    }
    const double up = prob.objective(shifted);
    for (std::size_t i = 0; i < theta.size(); ++i) {
        shifted[i] = theta[i] - eps * probe[i];
    }
    const double down = prob.objective(shifted);
    if (!std::isfinite(up) || !std::isfinite(down)) {
        throw NonFiniteObjective("objective '" + prob.objective.name() + "' returned a non-finite value");
    }
    apply_gain(prob.gain_matrix, probe, -(up - down) / (2.0 * eps), out);
}

}  // namespace

Objective::Objective(std::string name, std::size_t dim, Function fn, Vector theta_opt, double min_value,
                     BoxConstraint default_box)
    : name_(std::move(name)),
      dim_(dim),
      fn_(std::move(fn)),
      theta_opt_(std::move(theta_opt)),
      min_value_(min_value),
      default_box_(std::move(default_box)) {}

double Objective::operator()(std::span<const double> theta) const {
    if (theta.size() != dim_) {
        throw DimensionMismatch("objective '" + name_ + "' expects dimension " + std::to_string(dim_));
    }
    ++evaluations_;
    return fn_(theta);
}

std::vector<std::string> builtin_objective_names() { return {"rastrigin", "ackley", "three_hump_camel"}; }

Objective builtin_objective(std::string_view name, std::size_t dim) {
    if (dim == 0) {
        throw DimensionMismatch("objective dimension must be >= 1");
    }
    const Vector zero(dim, 0.0);
    if (name == "rastrigin") {
        return {"rastrigin", dim, rastrigin, zero, 0.0, BoxConstraint::cube(dim, -5.12, 5.12)};
    }
    if (name == "ackley") {
        return {"ackley", dim, ackley, zero, 0.0, BoxConstraint::cube(dim, -32.768, 32.768)};
    }
    if (name == "three_hump_camel") {
        if (dim != 2) {
            throw DimensionMismatch("three_hump_camel is defined for dimension 2 only");
        }
        return {"three_hump_camel", dim, three_hump_camel, zero, 0.0, BoxConstraint::cube(dim, -5.0, 5.0)};
    }
    throw Error("unknown objective '" + std::string(name) + "'");
}

Objective quadratic_objective(const Matrix& Q, const Vector& center) {
    return convex_exponential_objective(Q, center, Vector(center.size(), 0.0), Vector(center.size(), 1.0));
}

Objective convex_exponential_objective(const Matrix& Q, const Vector& center, const Vector& weights,
                                       const Vector& signs) {
    const auto d = center.size();
    if (static_cast<std::size_t>(Q.rows()) != d || static_cast<std::size_t>(Q.cols()) != d ||
        weights.size() != d || signs.size() != d) {
        throw DimensionMismatch("objective parameters must share the center's dimension");
    }
    Eigen::LLT<Matrix> llt(Q);
    if (llt.info() != Eigen::Success) {
        throw Error("curvature matrix must be symmetric positive definite");
    }
    bool quadratic = true;
    for (double w : weights) {
        if (w < 0.0) {
            throw Error("exponential weights must be non-negative");
        }
        quadratic = quadratic && w == 0.0;
    }
    auto fn = [Q, center, weights, signs](std::span<const double> x) {
        const auto n = static_cast<Eigen::Index>(center.size());
        Eigen::VectorXd y(n);
        double extra = 0.0;
        for (Eigen::Index i = 0; i < n; ++i) {
            const auto k = static_cast<std::size_t>(i);
            y[i] = x[k] - center[k];
            if (weights[k] != 0.0) {
                const double s = signs[k] * y[i];
                extra += weights[k] * (std::exp(s) - 1.0 - s);
            }
        }
        return 0.5 * y.dot(Q * y) + extra;
    };
    Vector lo(d);
    Vector hi(d);
    for (std::size_t i = 0; i < d; ++i) {
        lo[i] = center[i] - 10.0;
        hi[i] = center[i] + 10.0;
    }
    return {quadratic ? "quadratic" : "convex_exponential", d, fn, center, 0.0, BoxConstraint{lo, hi}};
}

const char* method_name(GfoMethod m) { return m == GfoMethod::OneQSGD ? "1qsgd" : "2qsgd"; }

GfoProblem GfoProblem::make(Objective objective, double epsilon, GfoMethod method) {
    const auto d = static_cast<Eigen::Index>(objective.dim());
    BoxConstraint box = objective.default_box();
    GfoProblem prob{std::move(objective), epsilon, Matrix::Identity(d, d), std::move(box), method};
    prob.validate();
    return prob;
}

void GfoProblem::validate() const {
    if (!(epsilon > 0.0)) {
        throw Error("probe amplitude epsilon must be > 0");
    }
    const auto d = static_cast<Eigen::Index>(objective.dim());
    if (gain_matrix.rows() != d || gain_matrix.cols() != d) {
        throw DimensionMismatch("gain matrix must be d x d");
    }
    Eigen::SelfAdjointEigenSolver<Matrix> eig(0.5 * (gain_matrix + gain_matrix.transpose()));
    if (eig.eigenvalues().minCoeff() <= 0.0) {
        throw Error("gain matrix must be positive definite");
    }
}

Vector f_1qsgd(std::span<const double> theta, std::span<const double> probe, const GfoProblem& prob) {
    Vector shifted(theta.size());
    Vector out(theta.size());
    field_1q(theta, probe, prob, shifted, out);
    return out;
}

Vector f_2qsgd(std::span<const double> theta, std::span<const double> probe, const GfoProblem& prob) {
    Vector shifted(theta.size());
    Vector out(theta.size());
    field_2q(theta, probe, prob, shifted, out);
    return out;
}

GfoField::GfoField(GfoProblem problem) : problem_(std::move(problem)), scratch_(problem_.objective.dim()) {
    problem_.validate();
}

std::string GfoField::name() const { return std::string(method_name(problem_.method)) + ":" + problem_.objective.name(); }

void GfoField::eval(std::span<const double> theta, std::span<const double> probe, double,
                    std::span<double> out) const {
    if (problem_.method == GfoMethod::OneQSGD) {
        field_1q(theta, probe, problem_, scratch_, out);
    } else {
        field_2q(theta, probe, problem_, scratch_, out);
    }
}

double check_fbar_equality(const GfoProblem& one_point, const GfoProblem& two_point, const ProbingSignal& p,
                           std::span<const Vector> thetas, double T, double dt) {
    double worst = 0.0;
    const auto d = static_cast<Eigen::Index>(one_point.objective.dim());
    for (const auto& theta : thetas) {
        auto stacked = [&](std::span<const double> probe) {
            Eigen::VectorXd both(2 * d);
            const Vector a = f_1qsgd(theta, probe, one_point);
            const Vector b = f_2qsgd(theta, probe, two_point);
            for (Eigen::Index i = 0; i < d; ++i) {
                both[i] = a[static_cast<std::size_t>(i)];
                both[d + i] = b[static_cast<std::size_t>(i)];
            }
            return both;
        };
        const Eigen::VectorXd avg = empirical_average(stacked, p, T, dt);
        worst = std::max(worst, (avg.head(d) - avg.tail(d)).norm());
    }
    return worst;
}

Trajectory run_spsa(const GfoProblem& prob, const Matrix& cov, const GainSchedule& g, const Vector& theta0,
                    double T, double Ts, std::uint64_t seed, std::size_t stride) {
    GfoField field(prob);
    GaussianProbe source(cov, seed);
    return integrate(field, source, g, theta0, T, Ts, prob.box, stride);
}

}  // namespace qsa
