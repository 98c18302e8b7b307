#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "qsa/averaging.hpp"
#include "qsa/gfo.hpp"

using namespace qsa;

namespace {

Objective half_square() {
    return Objective("half_square", 1, [](std::span<const double> x) { return 0.5 * x[0] * x[0]; }, {0.0}, 0.0,
                     BoxConstraint::cube(1, -10.0, 10.0));
}

Objective constant(double c, std::size_t d) {
    return Objective("constant", d, [c](std::span<const double>) { return c; }, Vector(d, 0.0), c,
                     BoxConstraint::cube(d, -1.0, 1.0));
}

ProbingSignal log_rational(double amplitude, double phase = 0.25) {
    return ProbingSignal::axis_aligned(amplitude, {std::log(6.0) / 4.0, std::log(2.0) / 4.0}, {phase, phase});
}

}  // namespace

TEST_CASE("one-point field: hand-evaluated values") {
    const auto prob = GfoProblem::make(half_square(), 1.0, GfoMethod::OneQSGD);
    CHECK(f_1qsgd(Vector{0.0}, Vector{1.0}, prob)[0] == doctest::Approx(-0.5));
    CHECK(f_1qsgd(Vector{3.7}, Vector{0.0}, prob)[0] == 0.0);
    const auto flat = GfoProblem::make(constant(2.5, 2), 0.5, GfoMethod::OneQSGD);
    const auto out = f_1qsgd(Vector{0.1, 0.2}, Vector{0.3, -0.4}, flat);
    CHECK(out[0] == doctest::Approx(-5.0 * 0.3));
    CHECK(out[1] == doctest::Approx(-5.0 * -0.4));
    const auto p = log_rational(2.0);
    auto avg = [&](std::span<const double> q) {
        const auto v = f_1qsgd(Vector{0.1, 0.2}, Vector(q.begin(), q.end()), flat);
        return Eigen::Vector2d(v[0], v[1]);
    };
    CHECK(empirical_average(avg, p, 1e4, 0.1).norm() < 1e-2);
}

TEST_CASE("two-point field: hand-evaluated values") {
    const auto prob = GfoProblem::make(half_square(), 1.0, GfoMethod::TwoQSGD);
    CHECK(f_2qsgd(Vector{0.0}, Vector{1.0}, prob)[0] == 0.0);
    const auto flat = GfoProblem::make(constant(-3.0, 2), 0.3, GfoMethod::TwoQSGD);
    CHECK(f_2qsgd(Vector{1.0, -1.0}, Vector{0.7, 0.2}, flat) == Vector{0.0, 0.0});

    // Linear objective g^T x: f = -M q q^T g exactly, so its average is -M Sigma g.
    const Vector g{1.5, -0.5};
    const Objective lin("linear", 2, [g](std::span<const double> x) { return g[0] * x[0] + g[1] * x[1]; },
                        {0.0, 0.0}, 0.0, BoxConstraint::cube(2, -1.0, 1.0));
    auto prob2 = GfoProblem::make(lin, 0.2, GfoMethod::TwoQSGD);
    prob2.gain_matrix << 2.0, 0.5, 0.5, 1.0;
    const Vector q{0.3, -0.8};
    const auto v = f_2qsgd(Vector{0.4, 0.1}, q, prob2);
    Eigen::Vector2d qq(q[0], q[1]);
    Eigen::Vector2d gg(g[0], g[1]);
    const Eigen::Vector2d expect = -prob2.gain_matrix * qq * qq.dot(gg);
    CHECK(v[0] == doctest::Approx(expect[0]).epsilon(1e-12));
    CHECK(v[1] == doctest::Approx(expect[1]).epsilon(1e-12));

    const auto p = log_rational(2.0);
    auto avg = [&](std::span<const double> s) {
        const auto r = f_2qsgd(Vector{0.4, 0.1}, Vector(s.begin(), s.end()), prob2);
        return Eigen::Vector2d(r[0], r[1]);
    };
    const Eigen::Vector2d target = -prob2.gain_matrix * probe_covariance(p) * gg;
    CHECK((empirical_average(avg, p, 1e4, 0.1) - target).norm() < 2e-2);
}

TEST_CASE("builtin objectives: golden values and minimizers") {
    const auto r2 = builtin_objective("rastrigin", 2);
    CHECK(r2(Vector{0.0, 0.0}) == 0.0);
    CHECK(r2(Vector{1.0, 0.0}) == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(builtin_objective("rastrigin", 1)(Vector{0.5}) == doctest::Approx(20.25).epsilon(1e-14));
    const auto a2 = builtin_objective("ackley", 2);
    CHECK(std::abs(a2(Vector{0.0, 0.0})) < 1e-12);
    CHECK(a2(Vector{1.0, 1.0}) == doctest::Approx(20.0 - 20.0 * std::exp(-0.2)).epsilon(1e-13));
    const auto c = builtin_objective("three_hump_camel", 2);
    CHECK(c(Vector{0.0, 0.0}) == 0.0);
    CHECK(c(Vector{1.0, 1.0}) == doctest::Approx(2.0 - 1.05 + 1.0 / 6.0 + 2.0).epsilon(1e-14));

    for (const auto& name : builtin_objective_names()) {
        for (std::size_t d : {std::size_t{1}, std::size_t{2}, std::size_t{5}, std::size_t{30}}) {
            if (name == "three_hump_camel" && d != 2) {
                CHECK_THROWS_AS(builtin_objective(name, d), DimensionMismatch);
                continue;
            }
            const auto obj = builtin_objective(name, d);
            CHECK(obj.dim() == d);
            CHECK(std::abs(obj(obj.theta_opt()) - obj.min_value()) <= 1e-12);
            CHECK(obj.default_box().contains(obj.theta_opt()));
        }
    }
    CHECK(builtin_objective("rastrigin", 3).default_box().upper[2] == 5.12);
    CHECK(builtin_objective("ackley", 3).default_box().lower[0] == -32.768);
    CHECK(builtin_objective("three_hump_camel", 2).default_box().upper[1] == 5.0);
    CHECK_THROWS_AS(builtin_objective("rosenbrock", 2), Error);
    CHECK_THROWS_AS(builtin_objective("rastrigin", 0), DimensionMismatch);
    CHECK_THROWS_AS(r2(Vector{1.0}), DimensionMismatch);
}

TEST_CASE("objective minimizer is a local minimum on random directions") {
    std::mt19937_64 rng(5);
    std::normal_distribution<double> n(0.0, 1.0);
    for (const auto& obj : {builtin_objective("rastrigin", 4), builtin_objective("ackley", 4)}) {
        for (int k = 0; k < 100; ++k) {
            Vector x(4);
            for (auto& xi : x) {
                xi = 1e-3 * n(rng);
            }
            CHECK(obj(x) > obj.min_value());
        }
    }
}

TEST_CASE("evaluation counts: one per 1qSGD step, two per 2qSGD step") {
    const auto p = ProbingSignal::axis_aligned(2.0, {0.13, 0.29}, {0.0, 0.5});
    const GainSchedule g{0.5, 0.85, true};
    for (auto method : {GfoMethod::OneQSGD, GfoMethod::TwoQSGD}) {
        const GfoField field(GfoProblem::make(builtin_objective("rastrigin", 2), 0.25, method));
        field.problem().objective.reset_evaluations();
        const auto traj = integrate(field, p, g, {1.0, -2.0}, 300.0, 1.0, field.problem().box);
        const std::uint64_t per = method == GfoMethod::OneQSGD ? 1 : 2;
        CHECK(field.problem().objective.evaluations() == per * 300);
        CHECK(traj.size() == 301);
    }
    const auto obj = half_square();
    const auto copy = obj;
    (void)obj(Vector{1.0});
    CHECK(obj.evaluations() == 1);
    CHECK(copy.evaluations() == 0);
}

TEST_CASE("GFO iterates respect the projection box") {
    const auto p = ProbingSignal::axis_aligned(2.0, {0.21, 0.43}, {0.1, 0.9});
    const GfoField field(GfoProblem::make(builtin_objective("rastrigin", 2), 0.25, GfoMethod::OneQSGD));
    const auto& box = field.problem().box;
    const auto traj = integrate(field, p, {5.0, 0.3, false}, {5.0, -5.0}, 2000.0, 1.0, box);
    for (std::size_t k = 0; k < traj.size(); ++k) {
        CHECK(box.contains(traj.state(k)));
    }
}

TEST_CASE("one- and two-point fields share their average") {
    const auto p = log_rational(2.0);
    Matrix Q(2, 2);
    Q << 2.0, 0.3, 0.3, 1.0;
    const auto quad = quadratic_objective(Q, {1.0, -0.5});
    const auto one = GfoProblem::make(quad, 0.25, GfoMethod::OneQSGD);
    const auto two = GfoProblem::make(quad, 0.25, GfoMethod::TwoQSGD);
    const std::vector<Vector> thetas{{0.0, 0.0}, {1.0, -0.5}, {2.0, 1.0}, {-1.0, 0.5}};
    CHECK(check_fbar_equality(one, two, p, thetas, 1e4, 0.05) <= 1e-2);

    const auto flat1 = GfoProblem::make(constant(1.0, 2), 0.25, GfoMethod::OneQSGD);
    const auto flat2 = GfoProblem::make(constant(1.0, 2), 0.25, GfoMethod::TwoQSGD);
    const std::vector<Vector> origin{{0.0, 0.0}};
    const double d3 = check_fbar_equality(flat1, flat2, p, origin, 1e3, 0.05);
    const double d4 = check_fbar_equality(flat1, flat2, p, origin, 1e4, 0.05);
    auto avg1 = [&](std::span<const double> q) {
        const auto v = f_1qsgd(origin[0], Vector(q.begin(), q.end()), flat1);
        return Eigen::Vector2d(v[0], v[1]);
    };
    CHECK(d4 == doctest::Approx(empirical_average(avg1, p, 1e4, 0.05).norm()).epsilon(1e-12));
    CHECK(d4 < d3);
}

TEST_CASE("two-point average matches the gradient up to O(eps^2)") {
    const double s2 = std::numbers::sqrt2;
    const auto p = ProbingSignal::axis_aligned(s2, {std::log(6.0) / 4.0, std::log(2.0) / 4.0}, {0.25, 0.25});
    Matrix Q(2, 2);
    Q << 1.0, 0.2, 0.2, 0.8;
    const Vector center{1.0, -0.5};
    const auto obj = convex_exponential_objective(Q, center, {0.5, 0.25}, {1.0, -1.0});
    const Vector theta{0.3, 0.4};
    // Analytic gradient of the objective at theta.
    Eigen::Vector2d y(theta[0] - center[0], theta[1] - center[1]);
    Eigen::Vector2d grad = Q * y;
    grad[0] += 0.5 * (std::exp(y[0]) - 1.0);
    grad[1] += 0.25 * (-std::exp(-y[1]) + 1.0);

    double prev = 0.0;
    for (double eps : {0.4, 0.2, 0.1}) {
        const auto prob = GfoProblem::make(obj, eps, GfoMethod::TwoQSGD);
        auto field = [&](std::span<const double> q) {
            const auto v = f_2qsgd(theta, Vector(q.begin(), q.end()), prob);
            return Eigen::Vector2d(v[0], v[1]);
        };
        const double err = (empirical_average(field, p, 1e5, 0.05) + grad).norm();
        if (prev > 0.0) {
            const double ratio = prev / err;
            CHECK(ratio > 2.0);
            CHECK(ratio < 6.0);
        }
        prev = err;
    }
}

TEST_CASE("problem validation") {
    CHECK_THROWS_AS(GfoProblem::make(half_square(), 0.0, GfoMethod::OneQSGD), Error);
    auto prob = GfoProblem::make(half_square(), 0.1, GfoMethod::OneQSGD);
    prob.gain_matrix(0, 0) = -1.0;
    CHECK_THROWS_AS(prob.validate(), Error);
    prob.gain_matrix = Matrix::Identity(2, 2);
    CHECK_THROWS_AS(prob.validate(), DimensionMismatch);

    const Objective nan_obj("nan", 1, [](std::span<const double>) { return std::nan(""); }, {0.0}, 0.0,
                            BoxConstraint::cube(1, -1.0, 1.0));
    const auto bad = GfoProblem::make(nan_obj, 0.1, GfoMethod::TwoQSGD);
    CHECK_THROWS_AS(f_2qsgd(Vector{0.0}, Vector{1.0}, bad), NonFiniteObjective);
    CHECK_THROWS_AS(f_1qsgd(Vector{0.0}, Vector{1.0}, bad), NonFiniteObjective);
}

TEST_CASE("SPSA comparator is seeded and stays in the box") {
    const auto prob = GfoProblem::make(builtin_objective("rastrigin", 2), 0.25, GfoMethod::TwoQSGD);
    const Matrix cov = 2.0 * Matrix::Identity(2, 2);
    const GainSchedule g{0.5, 0.85, true};
    const auto a = run_spsa(prob, cov, g, {2.0, -3.0}, 500.0, 1.0, 99);
    const auto b = run_spsa(prob, cov, g, {2.0, -3.0}, 500.0, 1.0, 99);
    const auto c = run_spsa(prob, cov, g, {2.0, -3.0}, 500.0, 1.0, 100);
    CHECK(a.states == b.states);
    CHECK(a.states != c.states);
    for (std::size_t k = 0; k < a.size(); ++k) {
        CHECK(prob.box.contains(a.state(k)));
    }
}
