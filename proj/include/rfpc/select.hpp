#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "flm.hpp"
#include "scales.hpp"

namespace rfpc {

/// First-order leave-one-out residuals u_i / (1 - h_ii) at the converged
/// weights.
inline VectorXd loo_residuals(const RegressionFit& fit, const MatrixXd& design,
                              const VectorXd& y) {
    const VectorXd u = y - design * fit.full_beta();
    const VectorXd h = hat_diagonals(design, fit.weights);
    VectorXd out(u.size());
    for (Eigen::Index i = 0; i < u.size(); ++i) {
        if (h[i] >= 1.0 - 1e-8)
            throw DegenerateError("loo_residuals: leverage ~ 1 at row " + std::to_string(i));
        out[i] = u[i] / (1.0 - h[i]);
    }
    return out;
}

namespace detail {

/// Leverages of the penalized smoother X (X'WX + lambda A+)^{-1} X'W with
/// A+ the penalty padded by a zero intercept row/column.
inline VectorXd penalized_hat_diagonals(const MatrixXd& design, const VectorXd& weights,
                                        const MatrixXd& a, double lambda) {
    const auto q = design.cols();
    MatrixXd m = MatrixXd::Zero(q, q);
    for (Eigen::Index i = 0; i < design.rows(); ++i)
        m.noalias() += weights[i] * design.row(i).transpose() * design.row(i);
    m.bottomRightCorner(q - 1, q - 1) += lambda * a;
    Eigen::LDLT<MatrixXd> ldlt(m);
    if (ldlt.info() != Eigen::Success)
        throw SingularError("penalized hat: singular system");
    VectorXd h(design.rows());
    for (Eigen::Index i = 0; i < design.rows(); ++i) {
        const VectorXd xi = design.row(i).transpose();
        h[i] = weights[i] * xi.dot(ldlt.solve(xi));
    }
    return h;
}

}  // namespace detail

enum class RemlWeighting { MMWeights, HardRejection };

struct RemlResult {
    double lambda = 0.0;
    bool penalty_null = false;  // A ~ 0: nothing to smooth
    double log_likelihood = 0.0;
};

/// Weighted REML estimate of the penalty weight via the mixed-model
/// reparametrization of the penalized criterion.  Observations enter the
/// likelihood with the MM weights (normalized to weight(0) = 1) or with 0/1
/// hard-rejection weights; sigma^2 is profiled out analytically.
inline RemlResult reml_lambda(const MatrixXd& design_scores, const VectorXd& y,
                              const PenaltyMatrix& a, const RegressionFit& mm_fit,
                              RemlWeighting mode, const LossFunction& rho1,
                              const Tuning& tune = Tuning{}) {
    const auto n = design_scores.rows();
    const auto K = design_scores.cols();

    Eigen::SelfAdjointEigenSolver<MatrixXd> es(a.a);
    if (es.info() != Eigen::Success) throw SingularError("reml_lambda: penalty eigensolve failed");
    // eigenvalues ascending; flip to descending
    VectorXd evals = es.eigenvalues().reverse();
    MatrixXd t = es.eigenvectors().rowwise().reverse();
    const double emax = std::max(evals.maxCoeff(), 0.0);
    Eigen::Index s = 0;
    while (s < K && evals[s] > 1e-10 * emax) ++s;
    if (s == 0) return {0.0, true, 0.0};

    // [Z F] = T Lambda1^{-1}; the first s columns carry the penalized part.
    MatrixXd zf = t;
    for (Eigen::Index j = 0; j < K; ++j)
        if (j < s) zf.col(j) /= std::sqrt(evals[j]);
    const MatrixXd zd = design_scores * zf.leftCols(s);
    MatrixXd fixed(n, 1 + (K - s));
    fixed.col(0).setOnes();
    if (K - s > 0) fixed.rightCols(K - s) = design_scores * zf.rightCols(K - s);

    // Per-observation weights.
    VectorXd w(n);
    if (mode == RemlWeighting::MMWeights) {
        const double w0 = rho1.weight(0.0);
        w = mm_fit.weights / w0;
    } else {
        const VectorXd u = y - VectorXd::Constant(n, mm_fit.beta0) -
                           design_scores * mm_fit.beta1;
        for (Eigen::Index i = 0; i < n; ++i)
            w[i] = (mm_fit.sigma > 0.0 && std::abs(u[i] / mm_fit.sigma) > rho1.c) ? 0.0 : 1.0;
    }

    std::vector<Eigen::Index> keep;
    for (Eigen::Index i = 0; i < n; ++i)
        if (w[i] > 1e-12) keep.push_back(i);
    const auto m = static_cast<Eigen::Index>(keep.size());
    const auto q = fixed.cols();
    if (m <= q + s) throw DegenerateError("reml_lambda: too few weighted observations");

    MatrixXd zs(m, s), ms(m, q);
    VectorXd ys(m);
    for (Eigen::Index r = 0; r < m; ++r) {
        const double sw = std::sqrt(w[keep[static_cast<std::size_t>(r)]]);
        zs.row(r) = sw * zd.row(keep[static_cast<std::size_t>(r)]);
        ms.row(r) = sw * fixed.row(keep[static_cast<std::size_t>(r)]);
        ys[r] = sw * y[keep[static_cast<std::size_t>(r)]];
    }
    const MatrixXd ztz = zs.transpose() * zs;

    // Restricted log-likelihood profile in lambda, via the Woodbury identity
    // for V = I + Z Z' / lambda.
    auto neg2_reml = [&](double lambda) {
        MatrixXd g = ztz;
        g.diagonal().array() += lambda;
        Eigen::LLT<MatrixXd> llt(g);
        if (llt.info() != Eigen::Success) return std::numeric_limits<double>::infinity();
        auto vinv = [&](const MatrixXd& x) -> MatrixXd {
            return x - zs * llt.solve(zs.transpose() * x);
        };
        const MatrixXd vim = vinv(ms);
        const MatrixXd viy = vinv(ys);
        const MatrixXd mtm = ms.transpose() * vim;
        Eigen::LLT<MatrixXd> mllt(mtm);
        if (mllt.info() != Eigen::Success) return std::numeric_limits<double>::infinity();
        const VectorXd delta = mllt.solve(ms.transpose() * viy);
        const VectorXd resid = ys - ms * delta;
        const double rss = resid.dot(vinv(resid).col(0));
        if (!(rss > 0.0)) return std::numeric_limits<double>::infinity();
        double logdet_v = -static_cast<double>(s) * std::log(lambda);
        for (Eigen::Index j = 0; j < s; ++j) logdet_v += 2.0 * std::log(llt.matrixL()(j, j));
        double logdet_m = 0.0;
        for (Eigen::Index j = 0; j < q; ++j) logdet_m += 2.0 * std::log(mllt.matrixL()(j, j));
        const double dof = static_cast<double>(m - q);
        return logdet_v + logdet_m + dof * std::log(rss / dof);
    };

    // Shrinkage of u transitions where lambda reaches the spectrum of Z'Z,
    // so the log grid is centered on its mean eigenvalue rather than on an
    // absolute window (the penalty scale varies by orders of magnitude with
    // the roughness of the eigenfunctions).
    const double scale0 = std::max(ztz.trace() / static_cast<double>(s), 1e-300);

    const int points = tune.lambda_grid_points;
    const double lmin = std::log(tune.lambda_grid_min * scale0),
                 lmax = std::log(tune.lambda_grid_max * scale0);
    int best_idx = 0;
    double best_val = std::numeric_limits<double>::infinity();
    std::vector<double> logs(static_cast<std::size_t>(points));
    for (int i = 0; i < points; ++i) {
        const double ll = lmin + (lmax - lmin) * i / (points - 1);
        logs[static_cast<std::size_t>(i)] = ll;
        const double v = neg2_reml(std::exp(ll));
        if (v < best_val) {
            best_val = v;
            best_idx = i;
        }
    }
    double lo = logs[static_cast<std::size_t>(std::max(0, best_idx - 1))];
    double hi = logs[static_cast<std::size_t>(std::min(points - 1, best_idx + 1))];
    const double gr = 0.5 * (std::sqrt(5.0) - 1.0);
    double x1 = hi - gr * (hi - lo), x2 = lo + gr * (hi - lo);
    double f1 = neg2_reml(std::exp(x1)), f2 = neg2_reml(std::exp(x2));
    for (int it = 0; it < 40; ++it) {
        if (f1 > f2) {
            lo = x1; x1 = x2; f1 = f2;
            x2 = lo + gr * (hi - lo); f2 = neg2_reml(std::exp(x2));
        } else {
            hi = x2; x2 = x1; f2 = f1;
            x1 = hi - gr * (hi - lo); f1 = neg2_reml(std::exp(x1));
        }
    }
    const double log_best = f1 < f2 ? x1 : x2;
    const double val_best = std::min({f1, f2, best_val});
    const double lam = std::exp(std::min(log_best, lmax));
    return {lam, false, -0.5 * val_best};
}

enum class EstimatorKind { FPCR, RFPCR, RFPCPR };

inline const char* estimator_name(EstimatorKind kind) {
    switch (kind) {
        case EstimatorKind::FPCR: return "fpcr";
        case EstimatorKind::RFPCR: return "rfpcr";
        default: return "rfpcpr";
    }
}

struct SelectionReport {
    std::vector<int> k_candidates;
    std::vector<double> tau2_by_k;
    std::vector<double> lambda_by_k;
    std::vector<std::string> failures;  // one message per skipped K
    int chosen_k = 0;
    double chosen_lambda = 0.0;
};

namespace detail {

struct SelectionRun {
    SelectionReport report;
    std::vector<std::pair<int, CoefficientEstimate>> fits;  // (K, fitted estimate)
};

/// Selection plus the per-K fits.  Robust pipelines: for each K fit RFPCR
/// (warm-started from the previous K, which keeps fast-S stable when K
/// approaches n/2) or RFPCPR with its REML lambda, and score it by the
/// squared tau-scale of the first-order leave-one-out residuals.  Classical
/// FPCR: smallest K explaining 99% of the (quadrature-weighted) sample
/// variance; the report column carries the unexplained-variance fraction
/// clamped at 0.01 so the chosen K is its smallest minimizer.
inline SelectionRun select_and_fit(const FitBasis& basis, const VectorXd& y, EstimatorKind kind,
                                   const Tuning& tune, std::uint64_t stream,
                                   RemlWeighting reml_mode) {
    const int k_max = basis.es.K();
    SelectionRun run;
    SelectionReport& report = run.report;

    if (kind == EstimatorKind::FPCR) {
        const double total_var = basis.total_variance;
        double running = 0.0;
        for (int k = 1; k <= k_max; ++k) {
            try {
                running += basis.es.dispersions[k - 1];
                const double unexplained =
                    total_var > 0.0 ? std::max(1.0 - running / total_var, 0.0) : 0.0;
                const double crit = std::max(unexplained, 0.01);
                CoefficientEstimate est = classical_fpcr_from_basis(basis, y, k);
                report.k_candidates.push_back(k);
                report.tau2_by_k.push_back(crit);
                report.lambda_by_k.push_back(0.0);
                run.fits.emplace_back(k, std::move(est));
            } catch (const Error& e) {
                report.failures.push_back("K=" + std::to_string(k) + ": " + e.what());
            }
        }
    } else {
        std::optional<PenaltyMatrix> full_penalty;
        if (kind == EstimatorKind::RFPCPR) full_penalty = penalty_matrix(basis.es);
        std::vector<VectorXd> warm;
        for (int k = 1; k <= k_max; ++k) {
            try {
                const MatrixXd design = basis.design.leftCols(k + 1);
                double lambda = 0.0;
                CoefficientEstimate est = rfpcr_from_basis(basis, y, k, tune, stream, warm);
                {
                    VectorXd wbeta(k + 2);  // warm start for K+1: append zero slope
                    wbeta.head(k + 1) = est.regression.full_beta();
                    wbeta[k + 1] = 0.0;
                    warm.assign(1, std::move(wbeta));
                }
                VectorXd loo;
                if (kind == EstimatorKind::RFPCPR) {
                    PenaltyMatrix a{full_penalty->a.topLeftCorner(k, k)};
                    RemlResult rr = reml_lambda(design.rightCols(k), y, a, est.regression,
                                                reml_mode, tune.loss_mm(), tune);
                    lambda = rr.lambda;
                    const VectorXd tr = penalized_transform(design.rightCols(k),
                                                            est.regression.weights,
                                                            est.regression.beta1, a, lambda);
                    VectorXd beta_full(k + 1);
                    beta_full[0] = est.regression.beta0;
                    beta_full.tail(k) = tr;
                    const VectorXd u = y - design * beta_full;
                    const VectorXd h = detail::penalized_hat_diagonals(
                        design, est.regression.weights, a.a, lambda);
                    loo.resize(u.size());
                    for (Eigen::Index i = 0; i < u.size(); ++i) {
                        if (h[i] >= 1.0 - 1e-8)
                            throw DegenerateError("select_k: leverage ~ 1 at row " +
                                                  std::to_string(i));
                        loo[i] = u[i] / (1.0 - h[i]);
                    }
                    run.fits.emplace_back(k, assemble(basis, k, est.regression, tr, lambda));
                } else {
                    loo = loo_residuals(est.regression, design, y);
                    run.fits.emplace_back(k, std::move(est));
                }
                report.k_candidates.push_back(k);
                report.tau2_by_k.push_back(tau_scale_squared(loo, tune));
                report.lambda_by_k.push_back(lambda);
            } catch (const Error& e) {
                report.failures.push_back("K=" + std::to_string(k) + ": " + e.what());
            }
        }
    }
    if (report.k_candidates.empty())
        throw DegenerateError("select_k: every candidate K failed");

    std::size_t best = 0;
    for (std::size_t i = 1; i < report.tau2_by_k.size(); ++i)
        if (report.tau2_by_k[i] < report.tau2_by_k[best] - 1e-12) best = i;
    report.chosen_k = report.k_candidates[best];
    report.chosen_lambda = report.lambda_by_k[best];
    return run;
}

}  // namespace detail

inline SelectionReport select_k_from_basis(const FitBasis& basis, const VectorXd& y,
                                           EstimatorKind kind, const Tuning& tune = Tuning{},
                                           std::uint64_t stream = 0,
                                           RemlWeighting reml_mode = RemlWeighting::MMWeights) {
    return detail::select_and_fit(basis, y, kind, tune, stream, reml_mode).report;
}

inline SelectionReport select_k(const FunctionalSample& sample, const VectorXd& y, int k_max,
                                EstimatorKind kind, const Tuning& tune = Tuning{},
                                std::uint64_t stream = 0,
                                RemlWeighting reml_mode = RemlWeighting::MMWeights) {
    if (k_max > sample.n() - 4) throw InsufficientDataError("select_k: k_max must be <= n-4");
    FitBasis basis = kind == EstimatorKind::FPCR ? classical_basis(sample, k_max, tune, stream)
                                                 : robust_basis(sample, k_max, tune, stream);
    return select_k_from_basis(basis, y, kind, tune, stream, reml_mode);
}

struct AutoFitResult {
    CoefficientEstimate estimate;
    SelectionReport report;
    bool selection_ran = false;
};

/// One-stop fit: K (and lambda for the penalized estimator) chosen
/// automatically unless given.  k = 0 requests selection; lambda < 0
/// requests REML.
inline AutoFitResult fit_auto(const FunctionalSample& sample, const VectorXd& y,
                              EstimatorKind kind, int k, double lambda, int k_max,
                              const Tuning& tune = Tuning{}, std::uint64_t stream = 0,
                              RemlWeighting reml_mode = RemlWeighting::MMWeights) {
    AutoFitResult out;
    k_max = std::min<int>(k_max, static_cast<int>(sample.n()) - 4);
    const int extract = k > 0 ? k : k_max;
    FitBasis basis = kind == EstimatorKind::FPCR ? classical_basis(sample, extract, tune, stream)
                                                 : robust_basis(sample, extract, tune, stream);
    if (k <= 0) {
        detail::SelectionRun run = detail::select_and_fit(basis, y, kind, tune, stream, reml_mode);
        out.report = run.report;
        out.selection_ran = true;
        k = out.report.chosen_k;
        for (auto& [kk, fit] : run.fits) {
            if (kk == k) {
                if (kind == EstimatorKind::RFPCPR && lambda >= 0.0 && lambda != fit.lambda)
                    break;  // explicit lambda overrides the selected one
                out.estimate = std::move(fit);
                return out;
            }
        }
        if (kind == EstimatorKind::RFPCPR && lambda < 0.0) lambda = out.report.chosen_lambda;
    }
    if (basis.es.K() < k) k = basis.es.K();
    switch (kind) {
        case EstimatorKind::FPCR:
            out.estimate = classical_fpcr_from_basis(basis, y, k);
            break;
        case EstimatorKind::RFPCR:
            out.estimate = rfpcr_from_basis(basis, y, k, tune, stream);
            break;
        case EstimatorKind::RFPCPR: {
            if (lambda < 0.0) {
                CoefficientEstimate base = rfpcr_from_basis(basis, y, k, tune, stream);
                const PenaltyMatrix a = penalty_matrix(base.eigensystem);
                RemlResult rr = reml_lambda(basis.design.block(0, 1, basis.design.rows(), k), y,
                                            a, base.regression, reml_mode, tune.loss_mm(), tune);
                lambda = rr.lambda;
            }
            out.estimate = rfpcpr_from_basis(basis, y, k, lambda, tune, stream);
            break;
        }
    }
    return out;
}

}  // namespace rfpc
