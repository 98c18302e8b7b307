#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "qsa/probing.hpp"

using namespace qsa;
using Pairs = std::vector<std::pair<std::int64_t, std::int64_t>>;

namespace {

ProbingSignal log_rational_cosine(const Vector& phi) {
    const Pairs pairs{{6, 1}, {2, 1}};
    const auto spec = make_log_rational_frequencies(pairs);
    return ProbingSignal::axis_aligned(1.0, spec.omega, phi);
}

}  // namespace

TEST_CASE("log-rational pairs: accepted and rejected sets") {
    const Pairs ok{{6, 1}, {2, 1}};
    const auto spec = make_log_rational_frequencies(ok);
    REQUIRE(spec.omega.size() == 2);
    CHECK(spec.omega[0] == doctest::Approx(std::log(6.0)).epsilon(1e-15));
    CHECK(spec.omega[1] == doctest::Approx(std::log(2.0)).epsilon(1e-15));

    const Pairs dependent{{4, 1}, {2, 1}};
    CHECK_THROWS_AS(make_log_rational_frequencies(dependent), DependentFrequencies);

    const Pairs primes{{2, 1}, {3, 1}, {5, 1}};
    CHECK(make_log_rational_frequencies(primes).omega.size() == 3);

    const Pairs nonpositive{{2, 3}};
    CHECK_THROWS_AS(make_log_rational_frequencies(nonpositive), NonPositiveFrequency);
    const Pairs zero{{3, 3}};
    CHECK_THROWS_AS(make_log_rational_frequencies(zero), NonPositiveFrequency);
    const Pairs bad{{0, 1}};
    CHECK_THROWS_AS(make_log_rational_frequencies(bad), NonPositiveFrequency);
}

TEST_CASE("prime factorization and exact rank") {
    using F = std::vector<std::pair<std::int64_t, int>>;
    CHECK(prime_factorization(1) == F{});
    CHECK(prime_factorization(360) == F{{2, 3}, {3, 2}, {5, 1}});
    CHECK(prime_factorization(9999991) == F{{9999991, 1}});
    CHECK(integer_rank({{1, 1}, {1, 0}}) == 2);
    CHECK(integer_rank({{2, 4}, {1, 2}}) == 1);
    CHECK(integer_rank({{1, 2, 3}, {4, 5, 6}, {7, 8, 9}}) == 2);
    CHECK(integer_rank({{0, 0}, {0, 0}}) == 0);
}

TEST_CASE("independence validator: injected dependencies are always caught") {
    std::mt19937_64 rng(11);
    std::uniform_int_distribution<std::int64_t> pick(2, 60);
    for (int trial = 0; trial < 200; ++trial) {
        const std::int64_t a = pick(rng);
        const std::int64_t b = pick(rng);
        Pairs square{{a * a, 1}, {a, 1}};
        CHECK_THROWS_AS(make_log_rational_frequencies(square), DependentFrequencies);
        // a*b/1 together with a/1 and b/1 always satisfies x = y + z.
        Pairs product{{a, 1}, {b, 1}, {a * b, 1}};
        CHECK_THROWS_AS(make_log_rational_frequencies(product), DependentFrequencies);
        // (a/1)^2 (b/1)^-1 ratio built as a^2 / b with b < a^2.
        if (b < a * a) {
            Pairs ratio{{a, 1}, {b, 1}, {a * a, b}};
            CHECK_THROWS_AS(make_log_rational_frequencies(ratio), DependentFrequencies);
        }
    }
    // Distinct primes, in any order, are independent.
    const std::vector<std::int64_t> ps{2, 3, 5, 7, 11, 13, 17, 19};
    for (int trial = 0; trial < 50; ++trial) {
        auto shuffled = ps;
        std::shuffle(shuffled.begin(), shuffled.end(), rng);
        Pairs pairs;
        for (std::size_t i = 0; i < 4; ++i) {
            pairs.emplace_back(shuffled[i], 1);
        }
        CHECK_NOTHROW(make_log_rational_frequencies(pairs));
    }
}

TEST_CASE("cosine and triangle evaluation") {
    const ProbingSignal p({{1.0}}, {1.0}, {0.25});
    CHECK(std::abs(eval_probe(p, 0.0)[0]) < 1e-15);

    CHECK(triangle_wave(0.0) == doctest::Approx(0.0));
    CHECK(triangle_wave(0.25) == doctest::Approx(1.0));
    CHECK(triangle_wave(0.75) == doctest::Approx(-1.0));

    const auto g = ProbingSignal::axis_aligned(2.0, {0.11, 0.37}, {0.0, 0.3});
    double worst = 0.0;
    for (int k = 0; k < 10000; ++k) {
        const auto v = g(0.731 * k);
        worst = std::max({worst, std::abs(v[0]), std::abs(v[1])});
    }
    CHECK(worst <= 2.0);
}

TEST_CASE("sine-with-radians adapter matches sin directly") {
    const Vector w{0.3, 1.7};
    const Vector phase{-0.4, 1.1};
    const auto p = ProbingSignal::from_sine_radians({{2.0, 0.0}, {0.0, 2.0}}, w, phase);
    for (double t : {0.0, 0.5, 3.25, 71.0, 1234.5}) {
        const auto v = p(t);
        CHECK(v[0] == doctest::Approx(2.0 * std::sin(w[0] * t + phase[0])).epsilon(1e-12));
        CHECK(v[1] == doctest::Approx(2.0 * std::sin(w[1] * t + phase[1])).epsilon(1e-12));
    }
}

TEST_CASE("triangle wave: period, odd half-shift symmetry, range") {
    for (int k = -4000; k <= 4000; ++k) {
        const double x = 0.001237 * k;
        const double v = triangle_wave(x);
        CHECK(v >= -1.0);
        CHECK(v <= 1.0);
        CHECK(triangle_wave(x + 1.0) == doctest::Approx(v).epsilon(1e-12));
        CHECK(triangle_wave(x + 0.5) == doctest::Approx(-v).epsilon(1e-12));
    }
    const ProbingSignal tri = ProbingSignal::axis_aligned(1.0, {0.4}, {0.1}, Waveform::Triangle);
    CHECK(tri(2.0)[0] == doctest::Approx(triangle_wave(0.4 * 2.0 + 0.1)));
}

TEST_CASE("backward probe is the probe at -t") {
    const auto p = log_rational_cosine({0.13, 0.37});
    for (double t : {0.0, 0.01, 1.0, 17.3, 1e4}) {
        const auto b = eval_probe_backward(p, t);
        const auto f = eval_probe(p, -t);
        CHECK(b == f);
    }
    CHECK(eval_probe_backward(p, 0.0) == eval_probe(p, 0.0));
    const auto even = log_rational_cosine({0.0, 0.0});
    for (double t : {0.3, 5.0, 99.9}) {
        CHECK(eval_probe_backward(even, t) == eval_probe(even, t));
    }
    const ProbingSignal one({{1.0}}, {1.0}, {0.25});
    CHECK(eval_probe_backward(one, 0.25)[0] == doctest::Approx(1.0));
}

TEST_CASE("probe covariance closed form") {
    const double s2 = std::numbers::sqrt2;
    const auto unit = ProbingSignal::axis_aligned(s2, {std::log(6.0), std::log(2.0)}, {0.0, 0.0});
    CHECK(probe_covariance(unit).isApprox(Matrix::Identity(2, 2), 1e-14));
    const auto gfo = ProbingSignal::axis_aligned(2.0, {0.1, 0.2, 0.3}, {0.0, 0.0, 0.0});
    CHECK(probe_covariance(gfo).isApprox(2.0 * Matrix::Identity(3, 3), 1e-14));

    const auto tri = ProbingSignal::axis_aligned(1.0, {0.1, 0.2}, {0.0, 0.0}, Waveform::Triangle);
    CHECK_THROWS_AS(probe_covariance(tri), UnsupportedWaveform);
}

TEST_CASE("probe covariance agrees with the empirical outer-product average") {
    // Mixed amplitudes on log-rational frequencies.
    const Pairs pairs{{6, 1}, {2, 1}};
    const auto spec = make_log_rational_frequencies(pairs);
    const ProbingSignal p({{1.0, 0.5}, {-0.3, 1.2}}, spec.omega, {0.1, 0.6});
    auto outer = [](std::span<const double> q) {
        Eigen::Map<const Eigen::Vector2d> v(q.data());
        return Eigen::Matrix2d(v * v.transpose());
    };
    const Eigen::Matrix2d emp = empirical_average(outer, p, 1e4, 0.01);
    const Matrix closed = probe_covariance(p);
    CHECK((emp - closed).cwiseAbs().maxCoeff() < 1e-2);
}

TEST_CASE("empirical averages of zero-mean and quadratic functionals") {
    const auto p = log_rational_cosine({0.13, 0.37});
    auto identity = [](std::span<const double> q) { return Eigen::Vector2d(q[0], q[1]); };
    const Eigen::Vector2d mean = empirical_average(identity, p, 1e4, 0.1);
    CHECK(mean.cwiseAbs().maxCoeff() < 1e-2);

    Eigen::Matrix2d M;
    M << 1.0, -0.7, 0.4, 2.0;
    auto cubic = [&M](std::span<const double> q) {
        Eigen::Map<const Eigen::Vector2d> v(q.data());
        return Eigen::Vector2d(v * (v.transpose() * M * v));
    };
    const Eigen::Vector2d third = empirical_average(cubic, p, 1e4, 0.05);
    CHECK(third.cwiseAbs().maxCoeff() < 1e-2);

    const ProbingSignal one({{1.0}}, {std::log(2.0)}, {0.0});
    const double sq = empirical_average([](std::span<const double> q) { return q[0] * q[0]; }, one, 1e4, 0.1);
    CHECK(sq == doctest::Approx(0.5).epsilon(2e-2));

    CHECK_THROWS_AS(empirical_average([](std::span<const double>) { return 1.0; }, one, 1.0, 2.0), Error);
}

TEST_CASE("running probe average decays like 1/T") {
    const auto p = log_rational_cosine({0.13, 0.37});
    for (double T : {1e2, 1e3, 1e4}) {
        auto identity = [](std::span<const double> q) { return Eigen::Vector2d(q[0], q[1]); };
        CHECK(T * empirical_average(identity, p, T, 0.01).norm() < 5.0);
    }
}

TEST_CASE("probing signal rejects malformed construction") {
    CHECK_THROWS_AS(ProbingSignal({{1.0}}, {1.0, 2.0}, {0.0}), Error);
    CHECK_THROWS_AS(ProbingSignal({{1.0, 0.0}, {2.0, 0.0}}, {1.0, 2.0}, {0.0, 0.0}), Error);
    CHECK_THROWS_AS(ProbingSignal({}, {}, {}), Error);
}
