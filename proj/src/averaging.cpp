#include "qsa/averaging.hpp"

#include <istream>
#include <ostream>
#include <string>

#include "qsa/csv.hpp"

namespace qsa {

void AveragingConfig::validate() const {
    if (!(kappa > 1.0) || !std::isfinite(kappa)) {
        throw Error("kappa must be a finite value > 1");
    }
}

const char* channel_name(Channel c) {
    switch (c) {
        case Channel::Raw: return "raw";
        case Channel::Pr: return "pr";
        case Channel::Fb: return "fb";
    }
    return "?";
}

std::span<const double> EstimateSeries::at(Channel c, std::size_t i) const {
    const std::vector<double>* data = &raw;
    if (c == Channel::Pr) {
        data = &pr;
    } else if (c == Channel::Fb) {
        if (fb.empty()) {
            throw Error("series has no forward-backward channel");
        }
        data = &fb;
    }
    return {data->data() + i * dim, dim};
}

EstimateSeries pr_average(const Trajectory& traj, const AveragingConfig& cfg) {
    cfg.validate();
    if (traj.size() < 2 || traj.dim == 0) {
        throw EmptyTrajectory("PR averaging needs at least two samples");
    }
    const std::size_t n = traj.size();
    const std::size_t d = traj.dim;

    std::vector<double> prefix = traj.integral;
    if (prefix.empty()) {
        prefix.assign(n * d, 0.0);
        for (std::size_t k = 1; k < n; ++k) {
            const double h = traj.times[k] - traj.times[k - 1];
            for (std::size_t i = 0; i < d; ++i) {
                prefix[k * d + i] =
                    prefix[(k - 1) * d + i] + 0.5 * h * (traj.states[(k - 1) * d + i] + traj.states[k * d + i]);
            }
        }
    }

    EstimateSeries out;
    out.times = traj.times;
    out.dim = d;
    out.raw = traj.states;
    out.pr.resize(n * d);
    std::copy_n(traj.states.begin(), d, out.pr.begin());

    const double t0 = traj.times.front();
    const double h = traj.times[1] - traj.times[0];
    const double frac = 1.0 - 1.0 / cfg.kappa;
    for (std::size_t k = 1; k < n; ++k) {
        const double T = traj.times[k];
        const double left = t0 + frac * (T - t0);
        auto j = static_cast<std::size_t>(std::floor((left - t0) / h));
        j = std::min(j, k - 1);
        while (j > 0 && traj.times[j] > left) {
            --j;
        }
        while (j + 1 < k && traj.times[j + 1] <= left) {
            ++j;
        }
        const double s = (left - traj.times[j]) / (traj.times[j + 1] - traj.times[j]);
        const double width = traj.times[j + 1] - traj.times[j];
        const double span = T - left;
        for (std::size_t i = 0; i < d; ++i) {
            const double a = traj.states[j * d + i];
            const double b = traj.states[(j + 1) * d + i];
            const double edge = prefix[j * d + i] + s * width * (a + 0.5 * s * (b - a));
            out.pr[k * d + i] = (prefix[k * d + i] - edge) / span;
        }
    }
    return out;
}

EstimateSeries fb_combine(const EstimateSeries& forward, const EstimateSeries& backward) {
    if (forward.dim != backward.dim || forward.times != backward.times) {
        throw GridMismatch("forward and backward series must share dimension and time grid");
    }
    EstimateSeries out = forward;
    out.fb.resize(forward.pr.size());
    for (std::size_t i = 0; i < out.fb.size(); ++i) {
        out.fb[i] = 0.5 * (forward.pr[i] + backward.pr[i]);
    }
    return out;
}

double c_kappa_rho(double kappa, double rho) {
    return kappa * (1.0 - std::pow(1.0 - 1.0 / kappa, 1.0 - rho)) / (1.0 - rho);
}

EstimateSeries decimate(const EstimateSeries& series, std::size_t stride) {
    if (stride <= 1) {
        return series;
    }
    EstimateSeries out;
    out.dim = series.dim;
    const std::size_t d = series.dim;
    auto take = [&](const std::vector<double>& src, std::vector<double>& dst, std::size_t k) {
        if (!src.empty()) {
            dst.insert(dst.end(), src.begin() + static_cast<std::ptrdiff_t>(k * d),
                       src.begin() + static_cast<std::ptrdiff_t>((k + 1) * d));
        }
    };
    for (std::size_t k = 0; k < series.size(); k += stride) {
        out.times.push_back(series.times[k]);
        take(series.raw, out.raw, k);
        take(series.pr, out.pr, k);
        take(series.fb, out.fb, k);
    }
    return out;
}

void write_series_csv(std::ostream& os, const EstimateSeries& series) {
    std::vector<std::string> header{"t"};
    const std::size_t d = series.dim;
    for (const char* prefix : {"raw_", "pr_", "fb_"}) {
        if (std::string(prefix) == "fb_" && !series.has_fb()) {
            continue;
        }
        for (std::size_t i = 1; i <= d; ++i) {
            header.push_back(prefix + std::to_string(i));
        }
    }
    csv::write_header(os, header);
    std::vector<double> row;
    for (std::size_t k = 0; k < series.size(); ++k) {
        row.clear();
        row.push_back(series.times[k]);
        for (Channel c : {Channel::Raw, Channel::Pr, Channel::Fb}) {
            if (c == Channel::Fb && !series.has_fb()) {
                continue;
            }
            const auto v = series.at(c, k);
            row.insert(row.end(), v.begin(), v.end());
        }
        csv::write_row(os, row);
    }
}

EstimateSeries read_series_csv(std::istream& is) {
    const auto table = csv::read_numeric(is);
    if (table.header.empty() || table.header.front() != "t") {
        throw IoError("series CSV must start with column 't'");
    }
    std::size_t d = 0;
    while (d + 1 < table.header.size() && table.header[d + 1].rfind("raw_", 0) == 0) {
        ++d;
    }
    if (d == 0 || (table.header.size() != 1 + 2 * d && table.header.size() != 1 + 3 * d)) {
        throw IoError("series CSV header does not match t,raw_*,pr_*[,fb_*]");
    }
    const bool fb = table.header.size() == 1 + 3 * d;
    EstimateSeries out;
    out.dim = d;
    for (const auto& row : table.rows) {
        out.times.push_back(row[0]);
        out.raw.insert(out.raw.end(), row.begin() + 1, row.begin() + 1 + static_cast<std::ptrdiff_t>(d));
        out.pr.insert(out.pr.end(), row.begin() + 1 + static_cast<std::ptrdiff_t>(d),
                      row.begin() + 1 + static_cast<std::ptrdiff_t>(2 * d));
        if (fb) {
            out.fb.insert(out.fb.end(), row.begin() + 1 + static_cast<std::ptrdiff_t>(2 * d), row.end());
        }
    }
    return out;
}

}  // namespace qsa
