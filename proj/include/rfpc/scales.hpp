#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

#include "config.hpp"
#include "errors.hpp"
#include "losses.hpp"

namespace rfpc {

struct ScaleResult {
    double value = 0.0;
    std::size_t n_used = 0;
    bool degenerate = false;  // set when the scale collapsed to zero
};

inline double median(Eigen::VectorXd x) {
    const auto n = x.size();
    if (n == 0) throw InsufficientDataError("median of empty vector");
    auto* b = x.data();
    std::nth_element(b, b + n / 2, b + n);
    const double hi = x[n / 2];
    if (n % 2 == 1) return hi;
    std::nth_element(b, b + n / 2 - 1, b + n / 2);
    return 0.5 * (hi + x[n / 2 - 1]);
}

/// Qn scale: d times the k-th order statistic of the n(n-1)/2 absolute
/// pairwise differences, with h = floor(n/2)+1 and k = h(h-1)/2 (roughly the
/// first quartile of the differences).  Plain O(n^2) enumeration.
inline ScaleResult qn_scale(const Eigen::VectorXd& x, double d = Tuning{}.qn_d) {
    const auto n = static_cast<std::size_t>(x.size());
    if (n < 2) throw InsufficientDataError("qn_scale needs n >= 2");
    static thread_local std::vector<double> diffs;
    diffs.clear();
    diffs.reserve(n * (n - 1) / 2);
    for (std::size_t i = 0; i + 1 < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) diffs.push_back(std::abs(x[i] - x[j]));
    const std::size_t h = n / 2 + 1;
    const std::size_t k = h * (h - 1) / 2;  // 1-based order statistic
    std::nth_element(diffs.begin(), diffs.begin() + (k - 1), diffs.end());
    const double v = d * diffs[k - 1];
    return {v, n, v == 0.0};
}

/// M-scale: the positive root of mean(rho0(r_i / sigma)) = b.  All-zero
/// residuals yield a flagged zero scale; too many zeros (no positive root)
/// raise NoRootError.
inline ScaleResult m_scale(const Eigen::VectorXd& r, const LossFunction& rho0, double b,
                           double rel_tol = 1e-10) {
    const auto n = r.size();
    if (n < 1) throw InsufficientDataError("m_scale of empty vector");
    double max_abs = 0.0, min_pos = std::numeric_limits<double>::infinity();
    Eigen::Index zeros = 0;
    for (Eigen::Index i = 0; i < n; ++i) {
        const double a = std::abs(r[i]);
        if (a == 0.0) {
            ++zeros;
        } else {
            max_abs = std::max(max_abs, a);
            min_pos = std::min(min_pos, a);
        }
    }
    if (zeros == n) return {0.0, static_cast<std::size_t>(n), true};
    const double frac_nonzero = static_cast<double>(n - zeros) / static_cast<double>(n);
    if (frac_nonzero * rho0.rho_sup() <= b)
        throw NoRootError("m_scale: too many exact zeros, no positive root");

    auto mean_rho = [&](double sigma) {
        double acc = 0.0;
        for (Eigen::Index i = 0; i < n; ++i) acc += rho0.rho(r[i] / sigma);
        return acc / static_cast<double>(n);
    };
    double lo = min_pos / 10.0, hi = 10.0 * max_abs;
    // mean_rho is nonincreasing in sigma; widen the bracket if needed.
    while (mean_rho(lo) < b && lo > 1e-300) lo /= 8.0;
    while (mean_rho(hi) > b) hi *= 8.0;

    double sigma = std::sqrt(lo * hi);
    for (int it = 0; it < 200; ++it) {
        const double g = mean_rho(sigma) - b;
        if (g > 0.0) lo = sigma; else hi = sigma;
        // Newton step on sigma, clipped to the bracket.
        double deriv = 0.0;
        for (Eigen::Index i = 0; i < n; ++i) {
            const double u = r[i] / sigma;
            deriv -= rho0.psi(u) * u;
        }
        deriv /= static_cast<double>(n) * sigma;
        double next = deriv != 0.0 ? sigma - g / deriv : 0.5 * (lo + hi);
        if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
        if (std::abs(next - sigma) <= rel_tol * sigma) {
            sigma = next;
            break;
        }
        sigma = next;
    }
    return {sigma, static_cast<std::size_t>(n), false};
}

/// Squared tau-scale: s^2 * mean(rho_tau(r_i/s)) / b_tau with s the 50%
/// breakdown M-scale.  A truncated second moment; Fisher-consistent for the
/// variance at the Gaussian with the pinned (tau_c, tau_b) pair.
inline double tau_scale_squared(const Eigen::VectorXd& r, const Tuning& tune = Tuning{}) {
    if (r.size() < 2) throw InsufficientDataError("tau_scale_squared needs n >= 2");
    const ScaleResult s = m_scale(r, tune.loss_s(), tune.mscale_b);
    if (s.degenerate || s.value == 0.0) return 0.0;
    const LossFunction rho_tau = tune.loss_tau();
    double acc = 0.0;
    for (Eigen::Index i = 0; i < r.size(); ++i) acc += rho_tau.rho(r[i] / s.value);
    acc /= static_cast<double>(r.size());
    return s.value * s.value * acc / tune.tau_b;
}

}  // namespace rfpc
