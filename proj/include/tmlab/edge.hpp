#pragma once

// Radial eigenvalue density n(rho) and the complementary-error-function edge:
// histogram accumulation over an ensemble of spectra, inflection-point edge
// location, erfc width fit and the integrated edge metrics.
//
// n(rho) is normalized so that its integral equals the dimension of the
// analyzed space (2^L in full space, the sector dimension in sector mode;
// the normalization target is recorded in the profile).

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "tmlab/spectral.hpp"

namespace tmlab {

struct EdgeProfile {
    std::vector<double> bin_centers;
    std::vector<double> density;   // ensemble mean, integral = normalization
    double bin_width = 0.0;
    double normalization = 0.0;    // integral target (space dimension)
    std::size_t n_spectra = 0;
    int smoothing_window = 7;      // recorded config: local quadratic fit span

    // fit outputs
    bool fit_ok = false;
    std::string fail_reason;
    double rho_e = 0.0;
    double w = 0.0;
    double fit_amplitude = 0.0;    // n(rho_e)
    double fit_residual = 0.0;     // RMS over flank / n(rho_e)
    int flank_lo = 0, flank_hi = 0;

    // edge metrics
    double n_beyond = 0.0;           // N = integral of n over rho >= rho_e
    double rho0_minus_rho_e = 0.0;   // ensemble mean of rho_0 - rho_e
};

namespace detail {

inline int freedman_diaconis_bins(std::vector<double> pooled) {
    std::sort(pooled.begin(), pooled.end());
    const std::size_t n = pooled.size();
    const double q1 = pooled[n / 4];
    const double q3 = pooled[(3 * n) / 4];
    const double iqr = q3 - q1;
    const double range = pooled.back() - pooled.front();
    if (iqr <= 0.0 || range <= 0.0) return 0;
    const double width = 2.0 * iqr / std::cbrt(double(n));
    const int bins = static_cast<int>(std::ceil(range / width));
    return std::clamp(bins, 8, 512);
}

}  // namespace detail

inline EdgeProfile radial_density(const std::vector<SpectrumResult>& ensemble, int bins = 0) {
    if (ensemble.empty()) throw std::invalid_argument("radial_density: empty ensemble");
    const std::size_t dim = ensemble.front().size();
    for (const auto& s : ensemble)
        if (s.size() != dim) throw std::invalid_argument("radial_density: inconsistent dimensions");

    std::vector<double> pooled;
    pooled.reserve(dim * ensemble.size());
    for (const auto& s : ensemble) pooled.insert(pooled.end(), s.rho.begin(), s.rho.end());

    auto [mn_it, mx_it] = std::minmax_element(pooled.begin(), pooled.end());
    double lo = *mn_it, hi = *mx_it;
    if (bins <= 0) bins = detail::freedman_diaconis_bins(pooled);
    if (bins <= 0 || hi - lo < 1e-12) {
        // degenerate support (e.g. unitary spectra): a few padded bins
        const double c = 0.5 * (lo + hi);
        lo = c - 1.5e-9;
        hi = c + 1.5e-9;
        bins = 3;
    }

    EdgeProfile p;
    p.n_spectra = ensemble.size();
    p.normalization = double(dim);
    p.bin_width = (hi - lo) / bins;
    p.bin_centers.resize(bins);
    p.density.assign(bins, 0.0);
    for (int i = 0; i < bins; ++i) p.bin_centers[i] = lo + (i + 0.5) * p.bin_width;
    for (double r : pooled) {
        int i = static_cast<int>((r - lo) / p.bin_width);
        i = std::clamp(i, 0, bins - 1);
        p.density[i] += 1.0;
    }
    for (double& d : p.density) d /= double(ensemble.size()) * p.bin_width;
    return p;
}

namespace detail {

// Local quadratic least-squares fit around each bin (window bins wide):
// returns smoothed values and curvatures 2a from n ~ a x^2 + b x + c.
inline void local_quadratic(const std::vector<double>& x, const std::vector<double>& y, int window,
                            std::vector<double>& smooth, std::vector<double>& curvature) {
    const int n = static_cast<int>(x.size());
    const int half = window / 2;
    smooth.resize(n);
    curvature.resize(n);
    for (int i = 0; i < n; ++i) {
        const int lo = std::max(0, i - half);
        const int hi = std::min(n - 1, i + half);
        const int m = hi - lo + 1;
        // normal equations for a quadratic in (x - x_i)
        double s0 = 0, s1 = 0, s2 = 0, s3 = 0, s4 = 0, t0 = 0, t1 = 0, t2 = 0;
        for (int j = lo; j <= hi; ++j) {
            const double dx = x[j] - x[i];
            const double dx2 = dx * dx;
            s0 += 1;
            s1 += dx;
            s2 += dx2;
            s3 += dx2 * dx;
            s4 += dx2 * dx2;
            t0 += y[j];
            t1 += y[j] * dx;
            t2 += y[j] * dx2;
        }
        if (m < 4) {
            smooth[i] = y[i];
            curvature[i] = 0.0;
            continue;
        }
        Eigen::Matrix3d a;
        a << s0, s1, s2, s1, s2, s3, s2, s3, s4;
        Eigen::Vector3d rhs(t0, t1, t2);
        Eigen::Vector3d coef = a.ldlt().solve(rhs);
        smooth[i] = coef[0];
        curvature[i] = 2.0 * coef[2];
    }
}

inline double erfc_ssr(const std::vector<double>& x, const std::vector<double>& y, int lo, int hi,
                       double amp, double rho_e, double w) {
    double ssr = 0.0;
    for (int i = lo; i <= hi; ++i) {
        const double fit = amp * std::erfc((x[i] - rho_e) / w);
        ssr += (y[i] - fit) * (y[i] - fit);
    }
    return ssr;
}

}  // namespace detail

// Locate the edge as the inflection point of the smoothed density on the
// outer flank, then fit the width of n(rho_e) erfc((rho - rho_e)/w) over the
// window from the outermost histogram peak to the last populated bin.
inline void fit_edge(EdgeProfile& p) {
    p.fit_ok = false;
    const int n = static_cast<int>(p.bin_centers.size());
    if (n < 8) {
        p.fail_reason = "too few bins for an edge fit";
        return;
    }
    std::vector<double> smooth, curv;
    detail::local_quadratic(p.bin_centers, p.density, p.smoothing_window, smooth, curv);

    const double top = *std::max_element(smooth.begin(), smooth.end());
    int peak = -1;
    for (int i = 1; i + 1 < n; ++i)
        if (smooth[i] >= smooth[i - 1] && smooth[i] >= smooth[i + 1] && smooth[i] >= 0.25 * top)
            peak = i;  // keep the rightmost qualifying peak
    if (peak < 0)      // monotone profiles: the flank starts at the maximum
        peak = static_cast<int>(std::max_element(smooth.begin(), smooth.end()) - smooth.begin());
    int last = n - 1;
    while (last > 0 && p.density[last] <= 0.0) --last;
    if (peak < 0 || last - peak < 4) {
        p.fail_reason = "no decreasing outer flank (erfc edge model not applicable)";
        return;
    }

    int cross = -1;
    for (int i = peak; i < last; ++i) {
        if (curv[i] <= 0.0 && curv[i + 1] > 0.0) {
            cross = i;
            break;
        }
    }
    if (cross < 0) {
        p.fail_reason = "no inflection point on the outer flank (erfc edge model not applicable)";
        return;
    }
    const double x0 = p.bin_centers[cross], x1 = p.bin_centers[cross + 1];
    const double c0 = curv[cross], c1 = curv[cross + 1];
    p.rho_e = (c1 != c0) ? x0 + (0.0 - c0) * (x1 - x0) / (c1 - c0) : x0;

    const double frac = (p.rho_e - x0) / (x1 - x0);
    p.fit_amplitude = smooth[cross] * (1.0 - frac) + smooth[cross + 1] * frac;
    if (p.fit_amplitude <= 0.0) {
        p.fail_reason = "non-positive density at the inflection point";
        return;
    }

    // golden-section search on ln w over the flank window
    const double span = p.bin_centers[last] - p.bin_centers[peak];
    double a = std::log(p.bin_width / 10.0);
    double b = std::log(4.0 * span);
    const double gr = 0.5 * (std::sqrt(5.0) - 1.0);
    double c = b - gr * (b - a), d = a + gr * (b - a);
    auto cost = [&](double lw) {
        return detail::erfc_ssr(p.bin_centers, p.density, peak, last, p.fit_amplitude, p.rho_e,
                                std::exp(lw));
    };
    double fc = cost(c), fd = cost(d);
    for (int it = 0; it < 200 && b - a > 1e-12; ++it) {
        if (fc < fd) {
            b = d;
            d = c;
            fd = fc;
            c = b - gr * (b - a);
            fc = cost(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + gr * (b - a);
            fd = cost(d);
        }
    }
    p.w = std::exp(0.5 * (a + b));
    p.flank_lo = peak;
    p.flank_hi = last;
    p.fit_residual = std::sqrt(cost(0.5 * (a + b)) / double(last - peak + 1)) / p.fit_amplitude;
    p.fit_ok = true;
}

// N = integral of n(rho) over rho >= rho_e (piecewise-constant histogram),
// and the ensemble mean of rho_0 - rho_e.
inline void edge_metrics(EdgeProfile& p, const std::vector<SpectrumResult>& ensemble) {
    if (!p.fit_ok) throw std::runtime_error("edge_metrics: edge fit unavailable: " + p.fail_reason);
    double integral = 0.0;
    for (std::size_t i = 0; i < p.bin_centers.size(); ++i) {
        const double left = p.bin_centers[i] - 0.5 * p.bin_width;
        const double right = p.bin_centers[i] + 0.5 * p.bin_width;
        if (right <= p.rho_e) continue;
        const double covered = std::min(right - p.rho_e, p.bin_width);
        integral += p.density[i] * covered;
    }
    p.n_beyond = integral;

    double acc = 0.0;
    for (const auto& s : ensemble) acc += s.rho[0] - p.rho_e;
    p.rho0_minus_rho_e = ensemble.empty() ? 0.0 : acc / double(ensemble.size());
}

}  // namespace tmlab
