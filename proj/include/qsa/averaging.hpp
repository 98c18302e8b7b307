#pragma once

#include <iosfwd>
#include <span>
#include <vector>

#include "qsa/qsa_core.hpp"

namespace qsa {

/// Flat Polyak-Ruppert window [(1 - 1/kappa) T, T]; kappa > 1.
struct AveragingConfig {
    double kappa = 4.0;

    void validate() const;
};

enum class Channel { Raw, Pr, Fb };

const char* channel_name(Channel c);

/// Raw, PR-averaged and (optionally) forward-backward estimates on a shared grid.
/// All channels are row-major times.size() x dim.
struct EstimateSeries {
    std::vector<double> times;
    std::size_t dim = 0;
    std::vector<double> raw;
    std::vector<double> pr;
    std::vector<double> fb;

    [[nodiscard]] std::size_t size() const noexcept { return times.size(); }
    [[nodiscard]] bool has_fb() const noexcept { return !fb.empty(); }
    [[nodiscard]] std::span<const double> at(Channel c, std::size_t i) const;
    [[nodiscard]] std::span<const double> terminal(Channel c) const { return at(c, size() - 1); }
};

/// Running PR average at every grid time T > 0:
///
///     theta_pr(T) = kappa / T * integral_{(1-1/kappa) T}^{T} theta_t dt
///
/// using the trajectory's prefix integral; the window edge between grid
/// points integrates the linear interpolant exactly. theta_pr(0) = theta_0.
EstimateSeries pr_average(const Trajectory& traj, const AveragingConfig& cfg);

/// theta_fb = (pr_forward + pr_backward) / 2 pointwise. Throws GridMismatch.
EstimateSeries fb_combine(const EstimateSeries& forward, const EstimateSeries& backward);

/// PR bias constant kappa [1 - (1 - 1/kappa)^(1-rho)] / (1 - rho).
double c_kappa_rho(double kappa, double rho);

/// Keeps every stride-th row (row 0 always kept).
EstimateSeries decimate(const EstimateSeries& series, std::size_t stride);

/// CSV `t,raw_1..raw_d,pr_1..pr_d[,fb_1..fb_d]`.
void write_series_csv(std::ostream& os, const EstimateSeries& series);
EstimateSeries read_series_csv(std::istream& is);

}  // namespace qsa
