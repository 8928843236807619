#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <vector>

#include "config.hpp"
#include "funcspace.hpp"
#include "scales.hpp"

namespace rfpc {

struct LocationFit {
    Curve estimate;
    int iterations = 0;
    bool converged = false;
    double objective = 0.0;
    std::vector<double> objective_trace;
};

namespace detail {

inline VectorXd row_distances(const FunctionalSample& sample, const VectorXd& y) {
    const VectorXd& w = sample.grid->quad_weights();
    VectorXd d(sample.n());
    for (Eigen::Index i = 0; i < sample.n(); ++i) {
        const auto diff = (sample.rows.row(i).transpose() - y).array();
        d[i] = std::sqrt(std::max((w.array() * diff.square()).sum(), 0.0));
    }
    return d;
}

}  // namespace detail

/// Functional (spatial) median by Weiszfeld iteration, minimizing the sum of
/// L2 distances.  Iterates coinciding with a data curve are perturbation-
/// guarded by the epsilon floor.
inline LocationFit functional_median(const FunctionalSample& sample, double tol = 1e-8,
                                     int max_iter = 200) {
    const auto n = sample.n();
    VectorXd y = sample.rows.colwise().mean().transpose();

    LocationFit fit;
    double prev_obj = std::numeric_limits<double>::infinity();
    VectorXd d = detail::row_distances(sample, y);
    const double scale_hint = median(d);
    if (scale_hint == 0.0) {
        // All curves identical: the common curve is the median.
        fit.estimate = Curve(sample.grid, sample.rows.row(0).transpose());
        fit.iterations = 1;
        fit.converged = true;
        fit.objective = 0.0;
        return fit;
    }
    const double eps_floor = 1e-10 * scale_hint;

    for (int it = 0; it < max_iter; ++it) {
        double obj = d.sum();
        fit.objective_trace.push_back(obj);
        VectorXd w(n);
        for (Eigen::Index i = 0; i < n; ++i) w[i] = 1.0 / std::max(d[i], eps_floor);
        y = (sample.rows.transpose() * w) / w.sum();
        d = detail::row_distances(sample, y);
        fit.iterations = it + 1;
        if (std::abs(prev_obj - obj) <= tol * std::max(obj, 1e-300)) {
            // If the iterate sits on a data curve, accept only when the
            // subgradient condition ||sum of unit directions|| <= multiplicity
            // holds there; otherwise step off the anchor and keep going.
            Eigen::Index coincident = 0;
            VectorXd pull = VectorXd::Zero(y.size());
            for (Eigen::Index i = 0; i < n; ++i) {
                if (d[i] <= eps_floor) {
                    ++coincident;
                } else {
                    pull += (sample.rows.row(i).transpose() - y) / d[i];
                }
            }
            if (coincident > 0) {
                const double pull_norm = std::sqrt(std::max(
                    (sample.grid->quad_weights().array() * pull.array().square()).sum(), 0.0));
                if (pull_norm > static_cast<double>(coincident) + 1e-12) {
                    y += (scale_hint * 1e-6 / pull_norm) * pull;
                    d = detail::row_distances(sample, y);
                    prev_obj = d.sum();
                    continue;
                }
            }
            fit.converged = true;
            break;
        }
        prev_obj = obj;
    }
    fit.objective = d.sum();
    fit.estimate = Curve(sample.grid, y);
    return fit;
}

/// Functional M-estimator of location: IRWLS on rho(||X_i - y|| / s) with a
/// fixed preliminary dispersion s (median distance to the functional median)
/// and the median as starting point.
inline LocationFit functional_m_location(const FunctionalSample& sample,
                                         const LossFunction& loss = Tuning{}.loss_location(),
                                         double tol = Tuning{}.floc_tol,
                                         int max_iter = Tuning{}.floc_max_iter) {
    const auto n = sample.n();
    LocationFit start = functional_median(sample);
    VectorXd y = start.estimate.values;
    VectorXd d = detail::row_distances(sample, y);
    const double s = median(d);
    if (s == 0.0) return start;  // degenerate: at least half the curves equal the median

    const VectorXd& qw = sample.grid->quad_weights();
    LocationFit fit;
    bool done = false;
    for (int it = 0; it < max_iter && !done; ++it) {
        double obj = 0.0;
        for (Eigen::Index i = 0; i < n; ++i) obj += loss.rho(d[i] / s);
        fit.objective_trace.push_back(obj);

        VectorXd w(n);
        for (Eigen::Index i = 0; i < n; ++i) w[i] = loss.weight(d[i] / s);
        const double wsum = w.sum();
        if (wsum <= 0.0) break;  // everything rejected; keep current iterate
        VectorXd y_next = (sample.rows.transpose() * w) / wsum;

        const double step =
            std::sqrt(std::max((qw.array() * (y_next - y).array().square()).sum(), 0.0));
        const double ynorm = std::sqrt(std::max((qw.array() * y.array().square()).sum(), 0.0));
        y = y_next;
        d = detail::row_distances(sample, y);
        fit.iterations = it + 1;
        if (step <= tol * (1.0 + ynorm)) {
            fit.converged = true;
            done = true;
        }
    }
    double obj = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) obj += loss.rho(d[i] / s);
    fit.objective = obj;
    fit.objective_trace.push_back(obj);
    fit.estimate = Curve(sample.grid, y);
    return fit;
}

}  // namespace rfpc
