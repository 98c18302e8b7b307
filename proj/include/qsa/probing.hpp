#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <type_traits>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "qsa/errors.hpp"

namespace qsa {

using Vector = std::vector<double>;
using Matrix = Eigen::MatrixXd;

/// Frequencies omega_i = log(a_i / b_i) built from integer pairs whose ratios
/// are multiplicatively independent, so the omega_i are linearly independent
/// over the rationals.
struct FrequencySpec {
    std::vector<std::pair<std::int64_t, std::int64_t>> pairs;
    Vector omega;
};

/// Validates the pairs exactly (prime factorization plus integer rank) and
/// returns the log-ratios. Throws NonPositiveFrequency when a_i <= b_i and
/// DependentFrequencies when the exponent matrix is rank deficient.
FrequencySpec make_log_rational_frequencies(std::span<const std::pair<std::int64_t, std::int64_t>> pairs);

/// Prime factorization by trial division: (prime, exponent) in increasing prime order.
std::vector<std::pair<std::int64_t, int>> prime_factorization(std::int64_t n);

/// Rank over the rationals of an integer matrix, computed without rounding.
std::size_t integer_rank(std::vector<std::vector<std::int64_t>> rows);

/// Unit-period triangle wave with range [-1, 1]; triangle_wave(0) = 0, triangle_wave(1/4) = 1.
inline double triangle_wave(double x) {
    const double shifted = x + 0.25;
    const double frac = shifted - std::floor(shifted);
    return 1.0 - 4.0 * std::abs(0.5 - frac);
}

enum class Waveform { Cosine, Triangle };

/// Deterministic probing signal
///
///     probe(t) = sum_i v_i * w(omega_i * t + phi_i)
///
/// with w(x) = cos(2 pi x) for Waveform::Cosine and w = triangle_wave for
/// Waveform::Triangle. Frequencies are in cycles per unit time and phases in
/// cycles. With v_i = e_i the triangle form gives one wave per component.
class ProbingSignal {
public:
    ProbingSignal(std::vector<Vector> amplitudes, Vector omega, Vector phi_cycles,
                  Waveform waveform = Waveform::Cosine);

    /// v_i * sin(omega_i t + phase_i) with omega in radians per unit time and
    /// phases in radians, re-expressed through sin(x) = cos(2 pi [x / 2 pi - 1/4]).
    static ProbingSignal from_sine_radians(std::vector<Vector> amplitudes, const Vector& omega_radians,
                                           const Vector& phase_radians);

    /// One sinusoid per coordinate: v_i = amplitude * e_i.
    static ProbingSignal axis_aligned(double amplitude, const Vector& omega, const Vector& phi_cycles,
                                      Waveform waveform = Waveform::Cosine);

    [[nodiscard]] std::size_t dim() const noexcept { return dim_; }
    [[nodiscard]] std::size_t size() const noexcept { return omega_.size(); }
    [[nodiscard]] const std::vector<Vector>& amplitudes() const noexcept { return v_; }
    [[nodiscard]] const Vector& omega() const noexcept { return omega_; }
    [[nodiscard]] const Vector& phases() const noexcept { return phi_; }
    [[nodiscard]] Waveform waveform() const noexcept { return waveform_; }

    void eval(double t, std::span<double> out) const;
    void eval_backward(double t, std::span<double> out) const { eval(-t, out); }

    [[nodiscard]] Vector operator()(double t) const;

    /// Sum of amplitude norms: a uniform bound on the Euclidean norm of the probe.
    [[nodiscard]] double norm_bound() const;

    /// Highest frequency in cycles per unit time.
    [[nodiscard]] double max_frequency() const;

private:
    std::size_t dim_ = 0;
    std::vector<Vector> v_;
    Vector omega_;
    Vector phi_;
    Waveform waveform_;
};

Vector eval_probe(const ProbingSignal& p, double t);
Vector eval_probe_backward(const ProbingSignal& p, double t);

/// Closed-form time average of probe * probe^T, (1/2) sum v_i v_i^T.
/// Throws UnsupportedWaveform for triangle probes.
Matrix probe_covariance(const ProbingSignal& p);

/// Left-endpoint Riemann average (1/N) sum_k g(probe(k dt)), N = floor(T / dt).
/// g maps a probe sample (std::span<const double>) to a double, an Eigen
/// vector or an Eigen matrix.
template <class G>
auto empirical_average(G&& g, const ProbingSignal& p, double T, double dt) {
    using Result = std::decay_t<std::invoke_result_t<G&, std::span<const double>>>;
    if (!(T > 0.0) || !(dt > 0.0) || dt > T) {
        throw Error("empirical_average requires T > 0 and 0 < dt <= T");
    }
    const auto n = static_cast<std::size_t>(std::floor(T / dt));
    Vector sample(p.dim());
    p.eval(0.0, sample);
    Result acc = g(std::span<const double>(sample));
    for (std::size_t k = 1; k < n; ++k) {
        p.eval(static_cast<double>(k) * dt, sample);
        acc += g(std::span<const double>(sample));
    }
    if constexpr (std::is_arithmetic_v<Result>) {
        return acc / static_cast<double>(n);
    } else {
        return Result(acc / static_cast<double>(n));
    }
}

}  // namespace qsa
