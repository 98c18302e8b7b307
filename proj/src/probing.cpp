#include "qsa/probing.hpp"

#include <algorithm>
#include <cstdlib>
#include <limits>
#include <map>
#include <numbers>
#include <numeric>
#include <string>

namespace qsa {

std::vector<std::pair<std::int64_t, int>> prime_factorization(std::int64_t n) {
    if (n < 1) {
        throw Error("prime_factorization requires n >= 1, got " + std::to_string(n));
    }
    std::vector<std::pair<std::int64_t, int>> factors;
    for (std::int64_t p = 2; p <= n / p; p += (p == 2 ? 1 : 2)) {
        int e = 0;
        while (n % p == 0) {
            n /= p;
            ++e;
        }
        if (e > 0) {
            factors.emplace_back(p, e);
        }
    }
    if (n > 1) {
        factors.emplace_back(n, 1);
    }
    return factors;
}

std::size_t integer_rank(std::vector<std::vector<std::int64_t>> rows) {
    // Fraction-free elimination; each reduced row is divided by the gcd of its
    // entries so exponents stay small.
    if (rows.empty()) {
        return 0;
    }
    const std::size_t cols = rows.front().size();
    std::size_t rank = 0;
    for (std::size_t c = 0; c < cols && rank < rows.size(); ++c) {
        auto pivot = std::find_if(rows.begin() + static_cast<std::ptrdiff_t>(rank), rows.end(),
                                  [c](const auto& r) { return r[c] != 0; });
        if (pivot == rows.end()) {
            continue;
        }
        std::iter_swap(rows.begin() + static_cast<std::ptrdiff_t>(rank), pivot);
        const auto& prow = rows[rank];
        for (std::size_t r = rank + 1; r < rows.size(); ++r) {
            if (rows[r][c] == 0) {
                continue;
            }
            const std::int64_t a = prow[c];
            const std::int64_t b = rows[r][c];
            std::int64_t g = 0;
            for (std::size_t k = 0; k < cols; ++k) {
                std::int64_t lhs = 0;
                std::int64_t rhs = 0;
                std::int64_t v = 0;
                if (__builtin_mul_overflow(a, rows[r][k], &lhs) || __builtin_mul_overflow(b, prow[k], &rhs) ||
                    __builtin_sub_overflow(lhs, rhs, &v)) {
                    throw Error("integer_rank: overflow during elimination");
                }
                rows[r][k] = v;
                g = std::gcd(g, rows[r][k]);
            }
            if (g > 1) {
                for (auto& x : rows[r]) {
                    x /= g;
                }
            }
        }
        ++rank;
    }
    return rank;
}

FrequencySpec make_log_rational_frequencies(std::span<const std::pair<std::int64_t, std::int64_t>> pairs) {
    FrequencySpec spec;
    std::vector<std::map<std::int64_t, int>> exponents;
    std::map<std::int64_t, std::size_t> primes;
    for (const auto& [a, b] : pairs) {
        if (a < 1 || b < 1 || a <= b) {
            throw NonPositiveFrequency("log-rational pair (" + std::to_string(a) + ", " + std::to_string(b) +
                                       ") must satisfy a > b >= 1");
        }
        std::map<std::int64_t, int> e;
        for (auto [p, k] : prime_factorization(a)) {
            e[p] += k;
        }
        for (auto [p, k] : prime_factorization(b)) {
            e[p] -= k;
        }
        for (const auto& [p, k] : e) {
            if (k != 0) {
                primes.emplace(p, 0);
            }
        }
        exponents.push_back(std::move(e));
        spec.pairs.emplace_back(a, b);
        spec.omega.push_back(std::log(static_cast<double>(a) / static_cast<double>(b)));
    }
    std::size_t col = 0;
    for (auto& [p, idx] : primes) {
        idx = col++;
    }
    std::vector<std::vector<std::int64_t>> rows;
    for (const auto& e : exponents) {
        std::vector<std::int64_t> row(primes.size(), 0);
        for (const auto& [p, k] : e) {
            if (k != 0) {
                row[primes.at(p)] = k;
            }
        }
        rows.push_back(std::move(row));
    }
    if (integer_rank(rows) < pairs.size()) {
        throw DependentFrequencies("log-rational frequencies are linearly dependent over the rationals");
    }
    return spec;
}

ProbingSignal::ProbingSignal(std::vector<Vector> amplitudes, Vector omega, Vector phi_cycles, Waveform waveform)
    : v_(std::move(amplitudes)), omega_(std::move(omega)), phi_(std::move(phi_cycles)), waveform_(waveform) {
    if (v_.empty() || v_.size() != omega_.size() || v_.size() != phi_.size()) {
        throw DimensionMismatch("probing signal needs K >= 1 amplitudes, frequencies and phases");
    }
    dim_ = v_.front().size();
    if (dim_ == 0) {
        throw DimensionMismatch("probing signal amplitudes must be non-empty vectors");
    }
    Matrix span_check(static_cast<Eigen::Index>(dim_), static_cast<Eigen::Index>(v_.size()));
    for (std::size_t i = 0; i < v_.size(); ++i) {
        if (v_[i].size() != dim_) {
            throw DimensionMismatch("all probe amplitude vectors must share one dimension");
        }
        for (std::size_t j = 0; j < dim_; ++j) {
            span_check(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i)) = v_[i][j];
        }
    }
    if (static_cast<std::size_t>(Eigen::FullPivLU<Matrix>(span_check).rank()) < dim_) {
        throw Error("probe amplitude vectors do not span the probe space");
    }
}

ProbingSignal ProbingSignal::from_sine_radians(std::vector<Vector> amplitudes, const Vector& omega_radians,
                                               const Vector& phase_radians) {
    constexpr double two_pi = 2.0 * std::numbers::pi;
    if (omega_radians.size() != phase_radians.size()) {
        throw DimensionMismatch("one phase per frequency is required");
    }
    Vector omega(omega_radians.size());
    Vector phi(phase_radians.size());
    for (std::size_t i = 0; i < omega.size(); ++i) {
        omega[i] = omega_radians[i] / two_pi;
        phi[i] = phase_radians[i] / two_pi - 0.25;
    }
    return {std::move(amplitudes), std::move(omega), std::move(phi), Waveform::Cosine};
}

ProbingSignal ProbingSignal::axis_aligned(double amplitude, const Vector& omega, const Vector& phi_cycles,
                                          Waveform waveform) {
    std::vector<Vector> v(omega.size(), Vector(omega.size(), 0.0));
    for (std::size_t i = 0; i < omega.size(); ++i) {
        v[i][i] = amplitude;
    }
    return {std::move(v), omega, phi_cycles, waveform};
}

void ProbingSignal::eval(double t, std::span<double> out) const {
    constexpr double two_pi = 2.0 * std::numbers::pi;
    std::fill(out.begin(), out.end(), 0.0);
    for (std::size_t i = 0; i < omega_.size(); ++i) {
        const double arg = omega_[i] * t + phi_[i];
        const double w = waveform_ == Waveform::Cosine ? std::cos(two_pi * arg) : triangle_wave(arg);
        const auto& vi = v_[i];
        for (std::size_t j = 0; j < dim_; ++j) {
            out[j] += vi[j] * w;
        }
    }
}

Vector ProbingSignal::operator()(double t) const {
    Vector out(dim_);
    eval(t, out);
    return out;
}

double ProbingSignal::norm_bound() const {
    double total = 0.0;
    for (const auto& vi : v_) {
        double s = 0.0;
        for (double x : vi) {
            s += x * x;
        }
        total += std::sqrt(s);
    }
    return total;
}

double ProbingSignal::max_frequency() const {
    double m = 0.0;
    for (double w : omega_) {
        m = std::max(m, std::abs(w));
    }
    return m;
}

Vector eval_probe(const ProbingSignal& p, double t) { return p(t); }

Vector eval_probe_backward(const ProbingSignal& p, double t) { return p(-t); }

Matrix probe_covariance(const ProbingSignal& p) {
    if (p.waveform() != Waveform::Cosine) {
        throw UnsupportedWaveform("probe_covariance has a closed form only for cosine probes");
    }
    const auto d = static_cast<Eigen::Index>(p.dim());
    Matrix sigma = Matrix::Zero(d, d);
    for (const auto& vi : p.amplitudes()) {
        const Eigen::Map<const Eigen::VectorXd> v(vi.data(), d);
        sigma += 0.5 * v * v.transpose();
    }
    return sigma;
}

}  // namespace qsa
