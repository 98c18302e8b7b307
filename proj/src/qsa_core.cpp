#include "qsa/qsa_core.hpp"

#include <ostream>
#include <string>

#include "qsa/csv.hpp"

namespace qsa {

void VectorField::jacobian(std::span<const double> theta, std::span<const double> probe, double t,
                           std::span<double> out) const {
    const std::size_t d = dim();
    double norm = 0.0;
    for (double x : theta) {
        norm += x * x;
    }
    const double h = 1e-5 * (1.0 + std::sqrt(norm));
    Vector shifted(theta.begin(), theta.end());
    Vector plus(d);
    Vector minus(d);
    for (std::size_t j = 0; j < d; ++j) {
        shifted[j] = theta[j] + h;
        eval(shifted, probe, t, plus);
        shifted[j] = theta[j] - h;
        eval(shifted, probe, t, minus);
        shifted[j] = theta[j];
        for (std::size_t i = 0; i < d; ++i) {
            out[i * d + j] = (plus[i] - minus[i]) / (2.0 * h);
        }
    }
}

Vector VectorField::operator()(const Vector& theta, const Vector& probe, double t) const {
    Vector out(dim());
    eval(theta, probe, t, out);
    return out;
}

FunctionField::FunctionField(std::size_t dim, std::size_t probe_dim, FieldFunction fn, std::string name,
                             std::optional<Vector> theta_star)
    : dim_(dim), probe_dim_(probe_dim), fn_(std::move(fn)), name_(std::move(name)), theta_star_(std::move(theta_star)) {}

bool BoxConstraint::contains(std::span<const double> theta) const {
    if (theta.size() != lower.size()) {
        return false;
    }
    for (std::size_t i = 0; i < theta.size(); ++i) {
        if (theta[i] < lower[i] || theta[i] > upper[i]) {
            return false;
        }
    }
    return true;
}

Vector clamp_box(std::span<const double> theta, const BoxConstraint& box) {
    Vector out(theta.begin(), theta.end());
    clamp_box_inplace(out, box);
    return out;
}

void clamp_box_inplace(std::span<double> theta, const BoxConstraint& box) {
    if (theta.size() != box.lower.size() || theta.size() != box.upper.size()) {
        throw DimensionMismatch("box dimension does not match state dimension");
    }
    for (std::size_t i = 0; i < theta.size(); ++i) {
        theta[i] = std::max(box.lower[i], std::min(box.upper[i], theta[i]));
    }
}

GaussianProbe::GaussianProbe(const Matrix& cov, std::uint64_t seed) : rng_(seed) {
    Eigen::LLT<Matrix> llt(cov);
    if (llt.info() != Eigen::Success) {
        throw Error("GaussianProbe covariance must be positive definite");
    }
    chol_ = llt.matrixL();
    z_.resize(cov.rows());
}

void GaussianProbe::sample(std::size_t, double, std::span<double> out) {
    for (Eigen::Index i = 0; i < z_.size(); ++i) {
        z_[i] = normal_(rng_);
    }
    Eigen::Map<Eigen::VectorXd>(out.data(), z_.size()).noalias() = chol_ * z_;
}

std::size_t step_count(double T, double Ts) {
    if (!(Ts > 0.0) || !(T >= Ts)) {
        throw Error("integration requires T >= Ts > 0");
    }
    const double ratio = T / Ts;
    const double rounded = std::round(ratio);
    if (std::abs(ratio - rounded) <= 1e-9 * std::max(1.0, ratio)) {
        return static_cast<std::size_t>(rounded);
    }
    return static_cast<std::size_t>(std::floor(ratio));
}

namespace {

void check_inputs(const VectorField& f, std::size_t probe_dim, const Vector& theta0,
                  const std::optional<BoxConstraint>& box, std::size_t stride) {
    if (theta0.size() != f.dim()) {
        throw DimensionMismatch("theta0 has dimension " + std::to_string(theta0.size()) + ", field expects " +
                                std::to_string(f.dim()));
    }
    if (probe_dim != f.probe_dim()) {
        throw DimensionMismatch("probe dimension " + std::to_string(probe_dim) + " does not match field (" +
                                std::to_string(f.probe_dim()) + ")");
    }
    for (double x : theta0) {
        if (!std::isfinite(x)) {
            throw Error("theta0 must be finite");
        }
    }
    if (box && !box->contains(theta0)) {
        throw Error("theta0 lies outside the projection box");
    }
    if (stride == 0) {
        throw Error("stride must be positive");
    }
}

}  // namespace

Trajectory integrate(const VectorField& f, ProbeSource& source, const GainSchedule& g, const Vector& theta0,
                     double T, double Ts, const std::optional<BoxConstraint>& box, std::size_t stride) {
    check_inputs(f, source.dim(), theta0, box, stride);
    const std::size_t steps = step_count(T, Ts);
    const std::size_t d = f.dim();

    Trajectory traj;
    traj.dim = d;
    traj.Ts = Ts;
    traj.stride = stride;
    const std::size_t stored = steps / stride + 1;
    traj.times.reserve(stored);
    traj.states.reserve(stored * d);
    traj.integral.reserve(stored * d);

    Vector theta = theta0;
    Vector prev(d);
    Vector probe(source.dim());
    Vector drift(d);
    Vector acc(d, 0.0);
    Vector comp(d, 0.0);  // Neumaier compensation for the running integral

    auto store = [&](std::size_t n) {
        traj.times.push_back(static_cast<double>(n) * Ts);
        traj.states.insert(traj.states.end(), theta.begin(), theta.end());
        for (std::size_t i = 0; i < d; ++i) {
            traj.integral.push_back(acc[i] + comp[i]);
        }
    };
    store(0);

    for (std::size_t n = 0; n < steps; ++n) {
        const double t = static_cast<double>(n) * Ts;
        source.sample(n, t, probe);
        f.eval(theta, probe, t, drift);
        const double step = Ts * g.at(t);
        prev = theta;
        for (std::size_t i = 0; i < d; ++i) {
            theta[i] += step * drift[i];
        }
        if (box) {
            clamp_box_inplace(theta, *box);
        }
        for (std::size_t i = 0; i < d; ++i) {
            if (!std::isfinite(theta[i])) {
                throw NonFiniteState(n + 1, static_cast<double>(n + 1) * Ts);
            }
            const double term = 0.5 * Ts * (prev[i] + theta[i]);
            const double sum = acc[i] + term;
            comp[i] += std::abs(acc[i]) >= std::abs(term) ? (acc[i] - sum) + term : (term - sum) + acc[i];
            acc[i] = sum;
        }
        if ((n + 1) % stride == 0) {
            store(n + 1);
        }
    }
    return traj;
}

Trajectory integrate(const VectorField& f, const ProbingSignal& p, const GainSchedule& g, const Vector& theta0,
                     double T, double Ts, const std::optional<BoxConstraint>& box, Direction direction,
                     std::size_t stride) {
    SignalProbe source(p, direction);
    Trajectory traj = integrate(f, source, g, theta0, T, Ts, box, stride);
    traj.direction = direction;
    return traj;
}

void write_trajectory_csv(std::ostream& os, const Trajectory& traj) {
    std::vector<std::string> header{"t"};
    for (std::size_t i = 1; i <= traj.dim; ++i) {
        header.push_back("theta_" + std::to_string(i));
    }
    csv::write_header(os, header);
    Vector row(traj.dim + 1);
    for (std::size_t k = 0; k < traj.size(); ++k) {
        row[0] = traj.times[k];
        const auto s = traj.state(k);
        std::copy(s.begin(), s.end(), row.begin() + 1);
        csv::write_row(os, row);
    }
}

}  // namespace qsa
