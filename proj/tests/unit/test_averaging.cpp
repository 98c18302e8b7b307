#include <doctest.h>

#include <cmath>
#include <sstream>

#include "qsa/averaging.hpp"

using namespace qsa;

namespace {

Trajectory synthetic(double Ts, std::size_t n, std::size_t dim, const std::function<double(double, std::size_t)>& fn) {
    Trajectory traj;
    traj.dim = dim;
    traj.Ts = Ts;
    for (std::size_t k = 0; k <= n; ++k) {
        const double t = static_cast<double>(k) * Ts;
        traj.times.push_back(t);
        for (std::size_t i = 0; i < dim; ++i) {
            traj.states.push_back(fn(t, i));
        }
    }
    return traj;
}

}  // namespace

TEST_CASE("PR of a constant trajectory is the constant") {
    const auto traj = synthetic(0.1, 500, 2, [](double, std::size_t i) { return i == 0 ? 3.5 : -1.25; });
    const auto s = pr_average(traj, {4.0});
    for (std::size_t k = 0; k < s.size(); ++k) {
        CHECK(s.at(Channel::Pr, k)[0] == doctest::Approx(3.5).epsilon(1e-13));
        CHECK(s.at(Channel::Pr, k)[1] == doctest::Approx(-1.25).epsilon(1e-13));
    }
    CHECK_FALSE(s.has_fb());
}

TEST_CASE("PR of an affine trajectory equals the exact window mean") {
    const auto traj = synthetic(1.0, 100, 1, [](double t, std::size_t) { return t; });
    CHECK(pr_average(traj, {2.0}).terminal(Channel::Pr)[0] == doctest::Approx(75.0).epsilon(1e-14));

    // Window edges that fall between grid points.
    const auto ramp = synthetic(0.37, 1000, 1, [](double t, std::size_t) { return 2.0 - 0.3 * t; });
    for (double kappa : {1.5, 3.0, 5.0, 7.3}) {
        const auto s = pr_average(ramp, {kappa});
        for (std::size_t k = 1; k < s.size(); k += 13) {
            const double T = s.times[k];
            const double mid = T * (1.0 - 0.5 / kappa);
            CHECK(s.at(Channel::Pr, k)[0] == doctest::Approx(2.0 - 0.3 * mid).epsilon(1e-11));
        }
    }
}

TEST_CASE("PR window for kappa = 5 covers the most recent fifth") {
    // Indicator of t >= 80 on [0, 100]: the window [80, 100] sees only ones.
    const auto traj = synthetic(0.5, 200, 1, [](double t, std::size_t) { return t >= 80.0 ? 1.0 : 0.0; });
    const auto s = pr_average(traj, {5.0});
    CHECK(s.terminal(Channel::Pr)[0] == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("PR is shift-equivariant") {
    const auto traj = synthetic(0.05, 4000, 2, [](double t, std::size_t i) {
        return std::sin(0.7 * t + static_cast<double>(i)) / (1.0 + t) + std::cos(3.1 * t);
    });
    auto moved = traj;
    const double c[2] = {4.25, -17.0};
    for (std::size_t k = 0; k < moved.size(); ++k) {
        moved.states[2 * k] += c[0];
        moved.states[2 * k + 1] += c[1];
    }
    const auto a = pr_average(traj, {4.0});
    const auto b = pr_average(moved, {4.0});
    for (std::size_t k = 0; k < a.size(); k += 29) {
        for (std::size_t i = 0; i < 2; ++i) {
            CHECK(b.at(Channel::Pr, k)[i] == doctest::Approx(a.at(Channel::Pr, k)[i] + c[i]).epsilon(1e-10));
        }
    }
}

TEST_CASE("PR uses the stored integral when present") {
    auto traj = synthetic(1.0, 10, 1, [](double t, std::size_t) { return t * t; });
    const auto trapezoid = pr_average(traj, {2.0});
    traj.integral.resize(traj.size());
    for (std::size_t k = 0; k < traj.size(); ++k) {
        traj.integral[k] = std::pow(traj.times[k], 3) / 3.0;
    }
    const auto exact = pr_average(traj, {2.0});
    // Exact mean of t^2 over [5, 10] is (1000 - 125) / 15.
    CHECK(exact.terminal(Channel::Pr)[0] == doctest::Approx(875.0 / 15.0).epsilon(1e-12));
    CHECK(trapezoid.terminal(Channel::Pr)[0] != doctest::Approx(875.0 / 15.0).epsilon(1e-6));
}

TEST_CASE("PR averaging preconditions") {
    Trajectory one;
    one.dim = 1;
    one.times = {0.0};
    one.states = {1.0};
    CHECK_THROWS_AS(pr_average(one, {4.0}), EmptyTrajectory);
    const auto traj = synthetic(1.0, 10, 1, [](double t, std::size_t) { return t; });
    CHECK_THROWS_AS(pr_average(traj, {1.0}), Error);
    CHECK_THROWS_AS(pr_average(traj, {0.5}), Error);
}

TEST_CASE("forward-backward combination") {
    const auto fwd = pr_average(synthetic(1.0, 20, 2, [](double t, std::size_t i) { return t + i; }), {4.0});
    const auto same = fb_combine(fwd, fwd);
    CHECK(same.fb == fwd.pr);

    auto neg = fwd;
    for (auto& x : neg.pr) {
        x = -x;
    }
    const auto cancel = fb_combine(fwd, neg);
    for (double x : cancel.fb) {
        CHECK(x == 0.0);
    }
    auto shorter = fwd;
    shorter.times.pop_back();
    CHECK_THROWS_AS(fb_combine(fwd, shorter), GridMismatch);
}

TEST_CASE("bias constant c(kappa, rho)") {
    CHECK(c_kappa_rho(4.0, 1e-9) == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(c_kappa_rho(4.0, 0.7) == doctest::Approx(4.0 * (1.0 - std::pow(0.75, 0.3)) / 0.3).epsilon(1e-15));
    CHECK(c_kappa_rho(2.0, 0.5) == doctest::Approx(4.0 * (1.0 - std::sqrt(0.5))).epsilon(1e-15));
    // Window mean of (1+t)^-rho over [(1-1/k)T, T], divided by T^-rho, tends to c(kappa, rho).
    const double kappa = 4.0;
    const double rho = 0.7;
    const double T = 1e8;
    const double lo = (1.0 - 1.0 / kappa) * T;
    const double mean = (std::pow(1.0 + T, 1.0 - rho) - std::pow(1.0 + lo, 1.0 - rho)) / (1.0 - rho) / (T - lo);
    CHECK(mean / std::pow(T, -rho) == doctest::Approx(c_kappa_rho(kappa, rho)).epsilon(1e-6));
}

TEST_CASE("series CSV round-trip and decimation") {
    const auto fwd = pr_average(synthetic(0.1, 50, 2, [](double t, std::size_t i) { return std::sin(t + i); }), {3.0});
    const auto both = fb_combine(fwd, fwd);
    for (const auto* s : {&fwd, &both}) {
        std::stringstream ss;
        write_series_csv(ss, *s);
        const auto back = read_series_csv(ss);
        CHECK(back.times == s->times);
        CHECK(back.raw == s->raw);
        CHECK(back.pr == s->pr);
        CHECK(back.fb == s->fb);
    }
    const auto dec = decimate(both, 10);
    CHECK(dec.size() == 6);
    CHECK(dec.times[1] == both.times[10]);
    CHECK(dec.at(Channel::Fb, 2)[1] == both.at(Channel::Fb, 20)[1]);
}
