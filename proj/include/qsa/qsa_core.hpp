#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "qsa/probing.hpp"

namespace qsa {

/// Vanishing gain a_t: a0 (1+t)^-rho, or min{a0, (1+t)^-rho} when capped.
struct GainSchedule {
    double a0 = 1.0;
    double rho = 1.0;
    bool capped = false;

    [[nodiscard]] double at(double t) const {
        const double decay = std::pow(1.0 + t, -rho);
        return capped ? std::min(a0, decay) : a0 * decay;
    }
};

inline double gain_at(const GainSchedule& g, double t) { return g.at(t); }

/// Right-hand side f(theta, probe, t) of the QSA ODE.
class VectorField {
public:
    virtual ~VectorField() = default;

    [[nodiscard]] virtual std::size_t dim() const = 0;
    [[nodiscard]] virtual std::size_t probe_dim() const = 0;
    [[nodiscard]] virtual std::string name() const { return "field"; }
    [[nodiscard]] virtual std::optional<Vector> theta_star() const { return std::nullopt; }

    virtual void eval(std::span<const double> theta, std::span<const double> probe, double t,
                      std::span<double> out) const = 0;

    /// d x d Jacobian in theta, row-major. The default uses central
    /// differences with step 1e-5 (1 + |theta|).
    virtual void jacobian(std::span<const double> theta, std::span<const double> probe, double t,
                          std::span<double> out) const;

    [[nodiscard]] Vector operator()(const Vector& theta, const Vector& probe, double t = 0.0) const;
};

using FieldFunction =
    std::function<void(std::span<const double>, std::span<const double>, double, std::span<double>)>;

/// Adapts a callable into a VectorField.
class FunctionField final : public VectorField {
public:
    FunctionField(std::size_t dim, std::size_t probe_dim, FieldFunction fn, std::string name = "field",
                  std::optional<Vector> theta_star = std::nullopt);

    [[nodiscard]] std::size_t dim() const override { return dim_; }
    [[nodiscard]] std::size_t probe_dim() const override { return probe_dim_; }
    [[nodiscard]] std::string name() const override { return name_; }
    [[nodiscard]] std::optional<Vector> theta_star() const override { return theta_star_; }

    void eval(std::span<const double> theta, std::span<const double> probe, double t,
              std::span<double> out) const override {
        fn_(theta, probe, t, out);
    }

private:
    std::size_t dim_;
    std::size_t probe_dim_;
    FieldFunction fn_;
    std::string name_;
    std::optional<Vector> theta_star_;
};

struct BoxConstraint {
    Vector lower;
    Vector upper;

    [[nodiscard]] bool contains(std::span<const double> theta) const;
    static BoxConstraint cube(std::size_t dim, double lo, double hi) {
        return {Vector(dim, lo), Vector(dim, hi)};
    }
};

Vector clamp_box(std::span<const double> theta, const BoxConstraint& box);
void clamp_box_inplace(std::span<double> theta, const BoxConstraint& box);

enum class Direction { Forward, Backward };

/// Euler samples of one QSA run on a uniform grid. When stride > 1 only every
/// stride-th step is stored, and `integral` holds the trapezoidal integral of
/// the full-resolution path from 0 up to each stored time.
struct Trajectory {
    std::vector<double> times;
    std::vector<double> states;  // row-major, times.size() x dim
    std::vector<double> integral;  // empty, or same layout as states
    std::size_t dim = 0;
    double Ts = 0.0;
    std::size_t stride = 1;
    Direction direction = Direction::Forward;

    [[nodiscard]] std::size_t size() const noexcept { return times.size(); }
    [[nodiscard]] std::span<const double> state(std::size_t i) const {
        return {states.data() + i * dim, dim};
    }
    [[nodiscard]] std::span<const double> terminal() const { return state(size() - 1); }
    [[nodiscard]] double spacing() const noexcept { return Ts * static_cast<double>(stride); }
};

/// Source of probe samples for the Euler recursion: deterministic signals or
/// i.i.d. draws used by the stochastic comparators.
class ProbeSource {
public:
    virtual ~ProbeSource() = default;
    [[nodiscard]] virtual std::size_t dim() const = 0;
    virtual void sample(std::size_t step, double t, std::span<double> out) = 0;
};

class SignalProbe final : public ProbeSource {
public:
    SignalProbe(const ProbingSignal& p, Direction direction) : p_(p), direction_(direction) {}
    [[nodiscard]] std::size_t dim() const override { return p_.dim(); }
    void sample(std::size_t, double t, std::span<double> out) override {
        direction_ == Direction::Forward ? p_.eval(t, out) : p_.eval_backward(t, out);
    }

private:
    const ProbingSignal& p_;
    Direction direction_;
};

/// i.i.d. uniform samples on [lo, hi]^d.
class UniformProbe final : public ProbeSource {
public:
    UniformProbe(std::size_t dim, double lo, double hi, std::uint64_t seed)
        : dim_(dim), rng_(seed), dist_(lo, hi) {}
    [[nodiscard]] std::size_t dim() const override { return dim_; }
    void sample(std::size_t, double, std::span<double> out) override {
        for (auto& x : out) {
            x = dist_(rng_);
        }
    }

private:
    std::size_t dim_;
    std::mt19937_64 rng_;
    std::uniform_real_distribution<double> dist_;
};

/// i.i.d. N(0, cov) samples.
class GaussianProbe final : public ProbeSource {
public:
    GaussianProbe(const Matrix& cov, std::uint64_t seed);
    [[nodiscard]] std::size_t dim() const override { return static_cast<std::size_t>(chol_.rows()); }
    void sample(std::size_t step, double t, std::span<double> out) override;

private:
    Matrix chol_;
    Eigen::VectorXd z_;
    std::mt19937_64 rng_;
    std::normal_distribution<double> normal_{0.0, 1.0};
};

/// Explicit Euler for d/dt theta = a_t f(theta, probe_t, t), optionally
/// projected onto `box` after every step:
///
///     theta_{n+1} = clamp(theta_n + Ts a_{t_n} f(theta_n, probe_{t_n}, t_n))
///
/// Direction::Backward feeds probe(-t); the gain and f's clock still run
/// forward. Throws NonFiniteState at the first non-finite step.
Trajectory integrate(const VectorField& f, const ProbingSignal& p, const GainSchedule& g, const Vector& theta0,
                     double T, double Ts, const std::optional<BoxConstraint>& box = std::nullopt,
                     Direction direction = Direction::Forward, std::size_t stride = 1);

Trajectory integrate(const VectorField& f, ProbeSource& source, const GainSchedule& g, const Vector& theta0,
                     double T, double Ts, const std::optional<BoxConstraint>& box = std::nullopt,
                     std::size_t stride = 1);

/// Number of Euler steps covering [0, T] at spacing Ts.
std::size_t step_count(double T, double Ts);

/// CSV with header `t,theta_1,...,theta_d`, 17 significant digits.
void write_trajectory_csv(std::ostream& os, const Trajectory& traj);

}  // namespace qsa
