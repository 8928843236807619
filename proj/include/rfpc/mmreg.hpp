#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <vector>

#include "config.hpp"
#include "errors.hpp"
#include "rng.hpp"
#include "scales.hpp"

namespace rfpc {

using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Robust linear fit on a design whose first column is the intercept.
struct RegressionFit {
    double beta0 = 0.0;
    VectorXd beta1;            // slopes, length K
    double sigma = 0.0;        // residual M-scale
    VectorXd weights;          // final IRWLS weights, in [0, psi'(0)]
    bool converged = false;
    int iterations = 0;
    std::vector<double> objective_trace;

    VectorXd full_beta() const {
        VectorXd b(beta1.size() + 1);
        b[0] = beta0;
        b.tail(beta1.size()) = beta1;
        return b;
    }

    static RegressionFit from_full(const VectorXd& b) {
        RegressionFit f;
        f.beta0 = b[0];
        f.beta1 = b.tail(b.size() - 1);
        return f;
    }
};

namespace detail {

/// Weighted least squares via column-pivoted QR on the sqrt(W)-scaled
/// design.  Returns false when the weighted design is rank-deficient.
inline bool weighted_ls(const MatrixXd& design, const VectorXd& y, const VectorXd& w,
                        VectorXd& beta_out, double rank_tol = 1e-10) {
    const auto n = design.rows();
    const auto q = design.cols();
    MatrixXd a(n, q);
    VectorXd b(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const double s = std::sqrt(std::max(w[i], 0.0));
        a.row(i) = s * design.row(i);
        b[i] = s * y[i];
    }
    Eigen::ColPivHouseholderQR<MatrixXd> qr(a);
    qr.setThreshold(rank_tol);
    if (qr.rank() < q) return false;
    beta_out = qr.solve(b);
    return true;
}

inline VectorXd residuals(const MatrixXd& design, const VectorXd& y, const VectorXd& beta) {
    return y - design * beta;
}

/// One safeguarded Newton step for mean rho0(r/sigma) = b.
inline double scale_newton_step(const VectorXd& r, const LossFunction& rho0, double b,
                                double sigma) {
    const auto n = r.size();
    double g = 0.0, dg = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        const double u = r[i] / sigma;
        g += rho0.rho(u);
        dg -= rho0.psi(u) * u;
    }
    g = g / static_cast<double>(n) - b;
    dg /= static_cast<double>(n) * sigma;
    if (dg == 0.0) return sigma;
    double next = sigma - g / dg;
    if (!(next > 0.0) || !std::isfinite(next)) next = sigma * (g > 0.0 ? 2.0 : 0.5);
    return next;
}

}  // namespace detail

/// Residual of the MM estimating equation, max over coordinates of
/// |mean psi(r_i/sigma) x_i|.
inline double estimating_equation_residual(const MatrixXd& design, const VectorXd& y,
                                           const RegressionFit& fit, const LossFunction& rho1) {
    if (fit.sigma <= 0.0) return 0.0;
    const VectorXd r = detail::residuals(design, y, fit.full_beta());
    VectorXd acc = VectorXd::Zero(design.cols());
    for (Eigen::Index i = 0; i < design.rows(); ++i)
        acc += rho1.psi(r[i] / fit.sigma) * design.row(i).transpose();
    return (acc / static_cast<double>(design.rows())).cwiseAbs().maxCoeff();
}

/// S-estimator by the fast-S strategy: random elemental fits ranked by the
/// M-scale of their full residuals, the best few refined by IRWLS with a
/// simultaneous scale update.  sigma solves the M-scale equation at the
/// returned coefficients; an exact fit on more than half the rows collapses
/// the scale to zero (flagged by sigma == 0).
inline RegressionFit s_estimator(const MatrixXd& design, const VectorXd& y,
                                 const LossFunction& rho0, double b, int n_subsamples,
                                 std::uint64_t seed, const Tuning& tune = Tuning{},
                                 std::uint64_t stream = 0,
                                 const std::vector<VectorXd>& extra_candidates = {},
                                 const VectorXd* resid_sd = nullptr) {
    const auto n = design.rows();
    const auto q = design.cols();  // K+1 coefficients
    if (n < q + 2) throw InsufficientDataError("s_estimator needs n >= K+3");
    const Eigen::Index subset = std::min<Eigen::Index>(q + 1, n);  // K+2 rows

    // Residuals of a q-parameter fit are underdispersed.  With studentizing
    // factors (sqrt(1 - h_ii) of the unweighted hat matrix) the standardized
    // residuals have the nominal scale; otherwise shrink the right-hand side
    // of the scale equation by the average factor (1 - q/n), without which
    // the scale collapses once q approaches n/2.
    if (!resid_sd)
        b = std::max(b * (1.0 - static_cast<double>(q) / static_cast<double>(n)), 0.1 * b);

    CounterRng rng = CounterRng::stream(seed, stream, /*role=*/1);
    struct Candidate {
        VectorXd beta;
        double scale;
        bool zero_scale;
    };
    std::vector<Candidate> best;
    const int keep = std::max(1, tune.s_best_candidates);

    auto standardized = [&](VectorXd r) -> VectorXd {
        if (resid_sd)
            for (Eigen::Index i = 0; i < n; ++i) r[i] /= (*resid_sd)[i];
        return r;
    };
    auto scale_of = [&](const VectorXd& beta, bool& zero_flag) {
        const VectorXd r = standardized(detail::residuals(design, y, beta));
        try {
            const ScaleResult s = m_scale(r, rho0, b);
            zero_flag = s.degenerate;
            return s.value;
        } catch (const NoRootError&) {
            zero_flag = true;  // enough exact zeros: treat as a perfect fit
            return 0.0;
        }
    };

    auto consider = [&](VectorXd beta) {
        bool zf = false;
        const double sc = scale_of(beta, zf);
        best.push_back({std::move(beta), sc, zf});
        std::sort(best.begin(), best.end(),
                  [](const Candidate& a, const Candidate& bnd) { return a.scale < bnd.scale; });
        if (static_cast<int>(best.size()) > keep) best.pop_back();
    };

    long draws = 0;
    const long max_draws = 100L * n_subsamples;
    std::vector<Eigen::Index> idx(static_cast<std::size_t>(subset));
    for (int s = 0; s < n_subsamples; ++s) {
        VectorXd beta;
        bool ok = false;
        while (!ok) {
            if (++draws > max_draws)
                throw DegenerateError("s_estimator: could not find a non-singular subsample");
            // distinct random rows
            for (Eigen::Index k = 0; k < subset; ++k) {
                bool dup = true;
                while (dup) {
                    idx[static_cast<std::size_t>(k)] =
                        static_cast<Eigen::Index>(rng.next_below(static_cast<std::uint64_t>(n)));
                    dup = false;
                    for (Eigen::Index j = 0; j < k; ++j)
                        if (idx[static_cast<std::size_t>(j)] == idx[static_cast<std::size_t>(k)])
                            dup = true;
                }
            }
            MatrixXd xs(subset, q);
            VectorXd ys(subset);
            for (Eigen::Index k = 0; k < subset; ++k) {
                xs.row(k) = design.row(idx[static_cast<std::size_t>(k)]);
                ys[k] = y[idx[static_cast<std::size_t>(k)]];
            }
            ok = detail::weighted_ls(xs, ys, VectorXd::Ones(subset), beta);
        }
        consider(std::move(beta));
    }
    for (const VectorXd& cand : extra_candidates)
        if (cand.size() == q) consider(cand);

    // IRWLS refinement with simultaneous scale updates.
    Candidate champion = best.front();
    for (Candidate cand : best) {
        if (cand.zero_scale || cand.scale == 0.0) {
            if (cand.scale < champion.scale) champion = cand;
            continue;
        }
        VectorXd beta = cand.beta;
        double sigma = cand.scale;
        for (int it = 0; it < tune.s_refine_steps; ++it) {
            const VectorXd r = standardized(detail::residuals(design, y, beta));
            sigma = detail::scale_newton_step(r, rho0, b, sigma);
            VectorXd w(n);
            for (Eigen::Index i = 0; i < n; ++i) {
                w[i] = rho0.weight(r[i] / sigma);
                if (resid_sd) w[i] /= (*resid_sd)[i] * (*resid_sd)[i];
            }
            VectorXd beta_next;
            if (!detail::weighted_ls(design, y, w, beta_next)) break;
            const double step = (beta_next - beta).cwiseAbs().maxCoeff();
            beta = beta_next;
            if (step <= 1e-10 * (1.0 + beta.cwiseAbs().maxCoeff())) break;
        }
        bool zf = false;
        const double final_scale = scale_of(beta, zf);
        if (final_scale < champion.scale) champion = {beta, final_scale, zf};
    }

    RegressionFit fit = RegressionFit::from_full(champion.beta);
    fit.sigma = champion.scale;
    fit.converged = true;
    const VectorXd r = standardized(detail::residuals(design, y, champion.beta));
    fit.weights.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        fit.weights[i] = fit.sigma > 0.0 ? rho0.weight(r[i] / fit.sigma)
                                         : (r[i] == 0.0 ? rho0.weight(0.0) : 0.0);
        if (resid_sd) fit.weights[i] /= (*resid_sd)[i] * (*resid_sd)[i];
    }
    return fit;
}

/// MM stage: IRWLS on rho1 with the S-scale held fixed.  Falls back to the
/// initial fit (converged = false) if the weighted design turns singular.
inline RegressionFit mm_irwls(const MatrixXd& design, const VectorXd& y,
                              const RegressionFit& init, const LossFunction& rho1,
                              double tol = Tuning{}.mm_tol, int max_iter = Tuning{}.mm_max_iter,
                              const VectorXd* resid_sd = nullptr) {
    const auto n = design.rows();
    const double sigma = init.sigma;
    RegressionFit fit = init;
    fit.objective_trace.clear();

    auto standardized = [&](VectorXd r) -> VectorXd {
        if (resid_sd)
            for (Eigen::Index i = 0; i < n; ++i) r[i] /= (*resid_sd)[i];
        return r;
    };

    if (sigma <= 0.0) {
        // Exact fit: nothing to reweight.
        const VectorXd r = detail::residuals(design, y, init.full_beta());
        fit.weights.resize(n);
        for (Eigen::Index i = 0; i < n; ++i)
            fit.weights[i] = r[i] == 0.0 ? rho1.weight(0.0) : 0.0;
        fit.converged = true;
        fit.iterations = 0;
        return fit;
    }

    VectorXd beta = init.full_beta();
    auto objective = [&](const VectorXd& r) {
        double acc = 0.0;
        for (Eigen::Index i = 0; i < n; ++i) acc += rho1.rho(r[i] / sigma);
        return acc / static_cast<double>(n);
    };

    VectorXd r = standardized(detail::residuals(design, y, beta));
    fit.objective_trace.push_back(objective(r));
    int accepted = 0;
    bool converged = false;
    for (int it = 0; it < max_iter && !converged; ++it) {
        VectorXd w(n);
        for (Eigen::Index i = 0; i < n; ++i) {
            w[i] = rho1.weight(r[i] / sigma);
            if (resid_sd) w[i] /= (*resid_sd)[i] * (*resid_sd)[i];
        }
        VectorXd beta_next;
        if (!detail::weighted_ls(design, y, w, beta_next)) {
            RegressionFit fallback = init;
            fallback.converged = false;
            return fallback;
        }
        const VectorXd delta = (beta_next - beta).cwiseAbs();
        converged = true;
        for (Eigen::Index j = 0; j < beta.size(); ++j)
            if (delta[j] >= tol * (1.0 + std::abs(beta[j]))) converged = false;
        if (delta.maxCoeff() > 0.0 && !converged) ++accepted;
        beta = beta_next;
        r = standardized(detail::residuals(design, y, beta));
        fit.objective_trace.push_back(objective(r));
    }

    fit.beta0 = beta[0];
    fit.beta1 = beta.tail(beta.size() - 1);
    fit.sigma = sigma;
    fit.converged = converged;
    fit.iterations = accepted;
    fit.weights.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        fit.weights[i] = rho1.weight(r[i] / sigma);
        if (resid_sd) fit.weights[i] /= (*resid_sd)[i] * (*resid_sd)[i];
    }
    return fit;
}

/// Diagonal of the hat matrix H = X (X'WX)^{-1} X'W.
inline VectorXd hat_diagonals(const MatrixXd& design, const VectorXd& weights) {
    const auto n = design.rows();
    const auto q = design.cols();
    MatrixXd m = MatrixXd::Zero(q, q);
    for (Eigen::Index i = 0; i < n; ++i)
        m.noalias() += weights[i] * design.row(i).transpose() * design.row(i);
    Eigen::LDLT<MatrixXd> ldlt(m);
    if (ldlt.info() != Eigen::Success || !ldlt.isPositive())
        throw SingularError("hat_diagonals: X'WX is singular");
    // guard against semi-definite borderline cases
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(m);
    if (es.eigenvalues().minCoeff() <= 1e-12 * std::max(es.eigenvalues().maxCoeff(), 1e-300))
        throw SingularError("hat_diagonals: X'WX is singular");
    VectorXd h(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const VectorXd xi = design.row(i).transpose();
        h[i] = weights[i] * xi.dot(ldlt.solve(xi));
    }
    return h;
}

/// Ordinary least squares (classical baseline); weights set to one, sigma to
/// the usual unbiased residual standard deviation.
inline RegressionFit ols_fit(const MatrixXd& design, const VectorXd& y) {
    VectorXd beta;
    if (!detail::weighted_ls(design, y, VectorXd::Ones(design.rows()), beta))
        throw SingularError("ols_fit: singular design");
    RegressionFit fit = RegressionFit::from_full(beta);
    const VectorXd r = detail::residuals(design, y, beta);
    const auto dof = design.rows() - design.cols();
    fit.sigma = dof > 0 ? std::sqrt(r.squaredNorm() / static_cast<double>(dof)) : 0.0;
    fit.weights = VectorXd::Ones(design.rows());
    fit.converged = true;
    return fit;
}

}  // namespace rfpc
