#include "qsa/analysis.hpp"

#include <algorithm>
#include <numbers>

namespace qsa {

LinearExampleModel LinearExampleModel::standard() {
    LinearExampleModel m;
    m.w11 = std::numbers::pi / 5.0;
    m.w21 = std::sqrt(3.0) / 5.0;
    m.w12 = 4.0 / 5.0;
    m.w22 = std::sqrt(5.0) / 5.0;
    return m;
}

void LinearExampleModel::validate() const {
    if (A_star.rows() != 2 || A_star.cols() != 2) {
        throw ValidationError("A_star must be 2x2");
    }
    const Eigen::Vector2cd ev = A_star.eigenvalues();
    if (!(ev.real().maxCoeff() < 0.0)) {
        throw ValidationError("A_star must be Hurwitz (all eigenvalues with negative real part)");
    }
    for (double w : {w11, w21, w12, w22}) {
        if (!(w > 0.0) || !std::isfinite(w)) {
            throw ValidationError("linear example frequencies must be positive");
        }
    }
    if (!std::isfinite(forcing)) {
        throw ValidationError("forcing must be finite");
    }
}

ProbingSignal LinearExampleModel::probe() const {
    std::vector<Vector> v(6, Vector(6, 0.0));
    for (std::size_t i = 0; i < 6; ++i) {
        v[i][i] = 1.0;
    }
    const double quarter_turn = std::numbers::pi / 2.0;
    return ProbingSignal::from_sine_radians(std::move(v), {w11, w21, w12, w22, w11, w22},
                                            {0.0, 0.0, 0.0, 0.0, quarter_turn, quarter_turn});
}

LinearExampleField::LinearExampleField(LinearExampleModel model) : model_(std::move(model)) { model_.validate(); }

void LinearExampleField::eval(std::span<const double> theta, std::span<const double> q, double,
                              std::span<double> out) const {
    const auto& A = model_.A_star;
    const double F = model_.forcing;
    out[0] = (A(0, 0) + 4.0 * q[0]) * theta[0] + (A(0, 1) + q[1]) * theta[1] + 2.0 * F * q[4];
    out[1] = (A(1, 0) + q[2]) * theta[0] + (A(1, 1) + 4.0 * q[3]) * theta[1] + F * q[5];
}

void LinearExampleField::jacobian(std::span<const double>, std::span<const double> q, double,
                                  std::span<double> out) const {
    const auto& A = model_.A_star;
    out[0] = A(0, 0) + 4.0 * q[0];
    out[1] = A(0, 1) + q[1];
    out[2] = A(1, 0) + q[2];
    out[3] = A(1, 1) + 4.0 * q[3];
}

Eigen::Vector2d ybar_closed_form(const LinearExampleModel& model) {
    model.validate();
    const Eigen::Vector2d upsilon(-4.0 * model.forcing / model.w11, -2.0 * model.forcing / model.w22);
    return model.A_star.fullPivLu().solve(upsilon);
}

std::vector<Eigen::VectorXd> ybar_numeric_ladder(const VectorField& f, const ProbingSignal& p,
                                                 const Vector& theta_star, const Matrix& A_star,
                                                 std::span<const double> horizons, double dt, Direction direction) {
    const std::size_t d = f.dim();
    const auto di = static_cast<Eigen::Index>(d);
    if (theta_star.size() != d || A_star.rows() != di || A_star.cols() != di) {
        throw DimensionMismatch("theta_star and A_star must match the field dimension");
    }
    if (p.dim() != f.probe_dim()) {
        throw DimensionMismatch("probe dimension does not match the field");
    }
    const Eigen::FullPivLU<Matrix> lu(A_star);
    if (!lu.isInvertible()) {
        throw SingularAStar("A_star is singular");
    }
    if (horizons.empty() || !(dt > 0.0)) {
        throw Error("ybar_numeric needs at least one horizon and dt > 0");
    }
    std::vector<std::size_t> stops;
    for (double T : horizons) {
        if (!(T >= dt) || (!stops.empty() && static_cast<double>(stops.back()) * dt >= T)) {
            throw Error("ybar_numeric horizons must be increasing and >= dt");
        }
        stops.push_back(static_cast<std::size_t>(std::floor(T / dt)));
    }

    Vector probe(p.dim());
    Vector J(d * d);
    Vector fv(d);
    Vector I(d * d, 0.0);
    Vector acc(d, 0.0);
    std::vector<Eigen::VectorXd> out;
    std::size_t next = 0;
    for (std::size_t n = 0; n < stops.back(); ++n) {
        const double t = static_cast<double>(n) * dt;
        direction == Direction::Forward ? p.eval(t, probe) : p.eval_backward(t, probe);
        f.jacobian(theta_star, probe, t, J);
        f.eval(theta_star, probe, t, fv);
        for (std::size_t i = 0; i < d; ++i) {
            double s = 0.0;
            for (std::size_t j = 0; j < d; ++j) {
                s += I[i * d + j] * fv[j];
            }
            acc[i] += s * dt;
        }
        for (std::size_t i = 0; i < d; ++i) {
            for (std::size_t j = 0; j < d; ++j) {
                I[i * d + j] += (J[i * d + j] - A_star(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j))) * dt;
            }
        }
        while (next < stops.size() && n + 1 == stops[next]) {
            const double T = static_cast<double>(stops[next]) * dt;
            Eigen::VectorXd upsilon(di);
            for (std::size_t i = 0; i < d; ++i) {
                upsilon[static_cast<Eigen::Index>(i)] = acc[i] / T;
            }
            out.emplace_back(lu.solve(upsilon));
            ++next;
        }
    }
    return out;
}

Eigen::VectorXd ybar_numeric(const VectorField& f, const ProbingSignal& p, const Vector& theta_star,
                             const Matrix& A_star, double T, double dt, Direction direction) {
    const double horizon[1] = {T};
    return ybar_numeric_ladder(f, p, theta_star, A_star, horizon, dt, direction).front();
}

void MultiplicativeExampleField::eval(std::span<const double> x, std::span<const double> q, double,
                                      std::span<double> out) const {
    out[0] = -(1.0 + 0.5 * q[0]) * x[0] - 0.25 * std::sin(x[0]) + 0.5 * q[1] * x[1] + 4.0 * (q[1] * q[1] - 0.5);
    out[1] = -(1.0 + 0.5 * q[1]) * x[1] - 0.25 * std::sin(x[1]) + 0.5 * q[0] * x[0] + 4.0 * (q[0] * q[0] - 0.5);
}

CovarianceSummary empirical_covariance(std::span<const Vector> terminal_states, double T) {
    if (terminal_states.empty()) {
        throw Error("empirical_covariance needs at least one run");
    }
    const std::size_t d = terminal_states.front().size();
    const auto di = static_cast<Eigen::Index>(d);
    Eigen::VectorXd mean = Eigen::VectorXd::Zero(di);
    for (const auto& x : terminal_states) {
        if (x.size() != d) {
            throw DimensionMismatch("terminal states must share one dimension");
        }
        mean += Eigen::Map<const Eigen::VectorXd>(x.data(), di);
    }
    const auto M = static_cast<double>(terminal_states.size());
    mean /= M;
    // Centred accumulation; algebraically equal to (1/M) sum x x^T - xbar xbar^T.
    Matrix sigma = Matrix::Zero(di, di);
    for (const auto& x : terminal_states) {
        const Eigen::VectorXd c = Eigen::Map<const Eigen::VectorXd>(x.data(), di) - mean;
        sigma.noalias() += c * c.transpose();
    }
    sigma /= M;
    CovarianceSummary s;
    s.sigma_bar = 0.5 * (sigma + sigma.transpose());
    s.theta_bar.assign(mean.data(), mean.data() + di);
    s.M = terminal_states.size();
    s.T = T;
    return s;
}

double scaled_trace_root(const CovarianceSummary& c, double rho) {
    return std::pow(c.T, 2.0 * rho) * std::sqrt(std::max(0.0, c.trace()));
}

double scaled_rmse(const CovarianceSummary& c, const Vector& theta_star, double rho) {
    if (theta_star.size() != c.theta_bar.size()) {
        throw DimensionMismatch("theta_star dimension does not match the covariance summary");
    }
    double bias = 0.0;
    for (std::size_t i = 0; i < theta_star.size(); ++i) {
        bias += (c.theta_bar[i] - theta_star[i]) * (c.theta_bar[i] - theta_star[i]);
    }
    return std::pow(c.T, 2.0 * rho) * std::sqrt(std::max(0.0, c.trace()) + bias);
}

RateFit fit_rate(std::span<const double> times, std::span<const double> errors, double t_lo, double t_hi) {
    if (times.size() != errors.size()) {
        throw DimensionMismatch("fit_rate needs one error per time");
    }
    if (!(t_lo > 0.0) || !(t_lo < t_hi)) {
        throw DegenerateWindow("rate window must satisfy 0 < T_lo < T_hi");
    }
    double sx = 0.0;
    double sy = 0.0;
    std::size_t n = 0;
    std::vector<std::pair<double, double>> pts;
    for (std::size_t k = 0; k < times.size(); ++k) {
        if (times[k] < t_lo || times[k] > t_hi) {
            continue;
        }
        if (!(errors[k] > 0.0) || !std::isfinite(errors[k])) {
            throw DegenerateWindow("error is zero or non-finite at T = " + std::to_string(times[k]));
        }
        pts.emplace_back(std::log(times[k]), std::log(errors[k]));
        sx += pts.back().first;
        sy += pts.back().second;
        ++n;
    }
    if (n < 10) {
        throw DegenerateWindow("rate window holds " + std::to_string(n) + " points; at least 10 are needed");
    }
    const double mx = sx / static_cast<double>(n);
    const double my = sy / static_cast<double>(n);
    double sxx = 0.0;
    double sxy = 0.0;
    double syy = 0.0;
    for (const auto& [x, y] : pts) {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
        syy += (y - my) * (y - my);
    }
    if (sxx == 0.0) {
        throw DegenerateWindow("rate window has no spread in T");
    }
    RateFit fit;
    fit.slope = sxy / sxx;
    fit.intercept = my - fit.slope * mx;
    fit.r_squared = syy == 0.0 ? 1.0 : sxy * sxy / (sxx * syy);
    fit.t_lo = t_lo;
    fit.t_hi = t_hi;
    fit.points = n;
    return fit;
}

std::vector<std::size_t> log_spaced_indices(std::span<const double> times, double t_lo, double t_hi,
                                            std::size_t per_decade) {
    std::vector<std::size_t> idx;
    if (times.empty() || !(t_lo > 0.0) || !(t_hi > t_lo) || per_decade == 0) {
        return idx;
    }
    const double decades = std::log10(t_hi / t_lo);
    const auto count = static_cast<std::size_t>(std::ceil(decades * static_cast<double>(per_decade))) + 1;
    for (std::size_t j = 0; j < count; ++j) {
        const double target =
            count == 1 ? t_lo : t_lo * std::pow(t_hi / t_lo, static_cast<double>(j) / static_cast<double>(count - 1));
        auto it = std::lower_bound(times.begin(), times.end(), target);
        if (it == times.end()) {
            it = std::prev(it);
        } else if (it != times.begin() && target - *std::prev(it) < *it - target) {
            it = std::prev(it);
        }
        const auto k = static_cast<std::size_t>(it - times.begin());
        if (times[k] < t_lo || times[k] > t_hi) {
            continue;
        }
        if (idx.empty() || idx.back() != k) {
            idx.push_back(k);
        }
    }
    return idx;
}

std::vector<double> channel_errors(const EstimateSeries& s, Channel c, const Vector& theta_star) {
    if (theta_star.size() != s.dim) {
        throw DimensionMismatch("theta_star dimension does not match the series");
    }
    std::vector<double> err(s.size());
    for (std::size_t k = 0; k < s.size(); ++k) {
        const auto x = s.at(c, k);
        double e = 0.0;
        for (std::size_t i = 0; i < s.dim; ++i) {
            e += (x[i] - theta_star[i]) * (x[i] - theta_star[i]);
        }
        err[k] = std::sqrt(e);
    }
    return err;
}

namespace {

RateFit fit_on_indices(std::span<const double> times, const std::vector<double>& err, double t_lo, double t_hi) {
    const auto idx = log_spaced_indices(times, t_lo, t_hi);
    std::vector<double> t;
    std::vector<double> e;
    for (auto k : idx) {
        t.push_back(times[k]);
        e.push_back(err[k]);
    }
    return fit_rate(t, e, t_lo, t_hi);
}

}  // namespace

RateFit fit_rate(const EstimateSeries& s, Channel c, const Vector& theta_star, double t_lo, double t_hi) {
    return fit_on_indices(s.times, channel_errors(s, c, theta_star), t_lo, t_hi);
}

RateFit fit_rate_rms(std::span<const EstimateSeries> runs, Channel c, const Vector& theta_star, double t_lo,
                     double t_hi) {
    if (runs.empty()) {
        throw Error("fit_rate_rms needs at least one run");
    }
    std::vector<double> ms(runs.front().size(), 0.0);
    for (const auto& r : runs) {
        if (r.times != runs.front().times) {
            throw GridMismatch("runs must share one time grid");
        }
        const auto e = channel_errors(r, c, theta_star);
        for (std::size_t k = 0; k < e.size(); ++k) {
            ms[k] += e[k] * e[k];
        }
    }
    for (auto& x : ms) {
        x = std::sqrt(x / static_cast<double>(runs.size()));
    }
    return fit_on_indices(runs.front().times, ms, t_lo, t_hi);
}

double orthogonality_check(const std::function<double(std::span<const double>)>& g,
                           const std::function<double(std::span<const double>)>& h, const ProbingSignal& p, double T,
                           double dt) {
    if (!(T > 0.0) || !(dt > 0.0) || dt > T) {
        throw Error("orthogonality_check requires T > 0 and 0 < dt <= T");
    }
    const auto n = static_cast<std::size_t>(std::floor(T / dt));
    Vector q(p.dim());
    double hsum = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        p.eval(static_cast<double>(k) * dt, q);
        hsum += h(q);
    }
    const double hmean = hsum / static_cast<double>(n);
    double H = 0.0;
    double gH = 0.0;
    double gs = 0.0;
    double Hs = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        p.eval(static_cast<double>(k) * dt, q);
        const double gk = g(q);
        gH += gk * H;
        gs += gk;
        Hs += H;
        H -= (h(q) - hmean) * dt;
    }
    const auto N = static_cast<double>(n);
    return std::abs(gH / N - (gs / N) * (Hs / N));
}

double quantile(std::vector<double> values, double q) {
    if (values.empty()) {
        throw Error("quantile of an empty sample");
    }
    std::sort(values.begin(), values.end());
    const double pos = std::clamp(q, 0.0, 1.0) * static_cast<double>(values.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, values.size() - 1);
    return values[lo] + (pos - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

double median(std::vector<double> values) { return quantile(std::move(values), 0.5); }

std::vector<bool> mad_outliers(std::span<const double> values, double threshold) {
    std::vector<bool> flags(values.size(), false);
    if (values.empty()) {
        return flags;
    }
    const double med = median({values.begin(), values.end()});
    std::vector<double> dev(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) {
        dev[i] = std::abs(values[i] - med);
    }
    const double scale = 1.4826 * median(dev);
    for (std::size_t i = 0; i < values.size(); ++i) {
        flags[i] = dev[i] > threshold * scale;
    }
    return flags;
}

}  // namespace qsa
