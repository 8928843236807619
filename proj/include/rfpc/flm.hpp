#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <utility>
#include <vector>

#include "config.hpp"
#include "errors.hpp"
#include "funcspace.hpp"
#include "location.hpp"
#include "mmreg.hpp"
#include "ppfpca.hpp"

namespace rfpc {

/// A fitted coefficient function together with everything needed to audit or
/// reuse the fit.
struct CoefficientEstimate {
    Curve beta_fn;
    double alpha = 0.0;
    VectorXd scores;          // coefficients on the eigenfunctions
    int K = 0;
    double lambda = 0.0;      // 0 for the unpenalized fit
    EigenSystem eigensystem;  // the K directions actually used
    double sigma = 0.0;
    Curve location;
    RegressionFit regression;
};

struct PenaltyMatrix {
    MatrixXd a;  // K x K, symmetric PSD
};

/// Location + eigensystem + score design, computed once and reusable for
/// several K (directions are nested by construction).
struct FitBasis {
    Curve location;
    EigenSystem es;
    MatrixXd design;          // n x (K_max + 1), ones column first
    double total_variance = 0.0;  // quadrature-weighted trace of the sample covariance
};

namespace detail {

inline double weighted_variance_trace(const FunctionalSample& sample, const Curve& location) {
    const VectorXd& qw = sample.grid->quad_weights();
    const MatrixXd centered = sample.rows.rowwise() - location.values.transpose();
    double acc = 0.0;
    for (Eigen::Index k = 0; k < sample.p(); ++k)
        acc += qw[k] * centered.col(k).squaredNorm();
    return acc / static_cast<double>(sample.n() - 1);
}

}  // namespace detail

inline FitBasis robust_basis(const FunctionalSample& sample, int k_max,
                             const Tuning& tune = Tuning{}, std::uint64_t stream = 0) {
    FitBasis basis;
    basis.location = functional_m_location(sample, tune.loss_location(), tune.floc_tol,
                                           tune.floc_max_iter).estimate;
    basis.es = pp_components(sample, basis.location, k_max, ScaleKind::Qn, tune, stream);
    basis.design = score_matrix(sample, basis.location, basis.es);
    basis.total_variance = detail::weighted_variance_trace(sample, basis.location);
    return basis;
}

inline FitBasis classical_basis(const FunctionalSample& sample, int k_max,
                                const Tuning& tune = Tuning{}, std::uint64_t stream = 0) {
    FitBasis basis;
    basis.location = Curve(sample.grid, sample.rows.colwise().mean().transpose());
    basis.es = pp_components(sample, basis.location, k_max, ScaleKind::SD, tune, stream);
    basis.design = score_matrix(sample, basis.location, basis.es);
    basis.total_variance = detail::weighted_variance_trace(sample, basis.location);
    return basis;
}

/// Intercept of the functional model recovered from the regression intercept:
/// alpha = beta0 - sum_j beta_1j <v_j, mu>.
inline double intercept_alpha(const RegressionFit& fit, const Curve& location,
                              const EigenSystem& es) {
    double acc = fit.beta0;
    for (int j = 0; j < es.K() && j < fit.beta1.size(); ++j)
        acc -= fit.beta1[j] * inner_product(es.directions[static_cast<std::size_t>(j)], location);
    return acc;
}

namespace detail {

inline EigenSystem truncate(const EigenSystem& es, int K) {
    EigenSystem out;
    out.scale_kind = es.scale_kind;
    out.rank_exhausted = es.rank_exhausted;
    out.directions.assign(es.directions.begin(), es.directions.begin() + K);
    out.dispersions = es.dispersions.head(K);
    return out;
}

inline Curve combine(const EigenSystem& es, const VectorXd& scores) {
    VectorXd v = VectorXd::Zero(es.directions.front().grid->size());
    for (int j = 0; j < es.K(); ++j) v += scores[j] * es.directions[static_cast<std::size_t>(j)].values;
    return Curve(es.directions.front().grid, std::move(v));
}

inline CoefficientEstimate assemble(const FitBasis& basis, int K, const RegressionFit& reg,
                                    const VectorXd& scores, double lambda) {
    CoefficientEstimate est;
    est.K = K;
    est.eigensystem = truncate(basis.es, K);
    est.scores = scores;
    est.beta_fn = combine(est.eigensystem, scores);
    est.lambda = lambda;
    est.sigma = reg.sigma;
    est.location = basis.location;
    est.regression = reg;
    RegressionFit scored = reg;
    scored.beta1 = scores;
    est.alpha = intercept_alpha(scored, basis.location, est.eigensystem);
    return est;
}

}  // namespace detail

/// Robust functional principal component regression on a precomputed basis:
/// fast-S then MM on the first K score columns.  Extra fast-S candidates
/// (e.g. the warm start from a lower-dimensional fit) stabilize large K.
inline CoefficientEstimate rfpcr_from_basis(const FitBasis& basis, const VectorXd& y, int K,
                                            const Tuning& tune = Tuning{},
                                            std::uint64_t stream = 0,
                                            const std::vector<VectorXd>& warm_starts = {}) {
    if (K > basis.es.K()) throw RankExhaustedError("rfpcr: K exceeds extracted components");
    const MatrixXd design = basis.design.leftCols(K + 1);

    // Leverage-studentized residuals keep the scale consistent and the
    // weights homogeneous when K is a sizable fraction of n, and unmask
    // high-leverage outliers.
    VectorXd resid_sd;
    const VectorXd* sd_ptr = nullptr;
    if (tune.studentize_residuals) {
        const VectorXd h = hat_diagonals(design, VectorXd::Ones(design.rows()));
        resid_sd.resize(h.size());
        for (Eigen::Index i = 0; i < h.size(); ++i)
            resid_sd[i] = std::sqrt(1.0 - std::min(h[i], 0.95));
        sd_ptr = &resid_sd;
    }
    RegressionFit s_fit = s_estimator(design, y, tune.loss_s(), tune.mscale_b, tune.s_subsamples,
                                      tune.seed, tune, stream, warm_starts, sd_ptr);
    RegressionFit mm =
        mm_irwls(design, y, s_fit, tune.loss_mm(), tune.mm_tol, tune.mm_max_iter, sd_ptr);
    return detail::assemble(basis, K, mm, mm.beta1, 0.0);
}

inline CoefficientEstimate rfpcr_fit(const FunctionalSample& sample, const VectorXd& y, int K,
                                     const Tuning& tune = Tuning{}, std::uint64_t stream = 0) {
    if (K > sample.n() - 3) throw InsufficientDataError("rfpcr: K must be <= n-3");
    return rfpcr_from_basis(robust_basis(sample, K, tune, stream), y, K, tune, stream);
}

/// Matrix of integrated products of second derivatives of the eigenfunctions.
inline PenaltyMatrix penalty_matrix(const EigenSystem& es) {
    const int K = es.K();
    std::vector<Curve> dd;
    dd.reserve(static_cast<std::size_t>(K));
    for (int j = 0; j < K; ++j) dd.push_back(second_derivative(es.directions[static_cast<std::size_t>(j)]));
    MatrixXd a(K, K);
    for (int i = 0; i < K; ++i)
        for (int j = i; j < K; ++j)
            a(i, j) = a(j, i) = inner_product(dd[static_cast<std::size_t>(i)], dd[static_cast<std::size_t>(j)]);
    a = 0.5 * (a + a.transpose()).eval();
    return {std::move(a)};
}

/// Ridge-style shrinkage of the MM slopes toward smooth coefficient
/// functions: (X'WX + lambda A)^{-1} X'WX beta1.  lambda = 0 returns the
/// slopes untouched.
inline VectorXd penalized_transform(const MatrixXd& design_scores, const VectorXd& weights,
                                    const VectorXd& mm_slopes, const PenaltyMatrix& a,
                                    double lambda) {
    if (lambda == 0.0) return mm_slopes;
    const auto K = design_scores.cols();
    if (a.a.rows() != K || mm_slopes.size() != K)
        throw Error("penalized_transform: dimension mismatch");
    MatrixXd m = MatrixXd::Zero(K, K);
    for (Eigen::Index i = 0; i < design_scores.rows(); ++i)
        m.noalias() += weights[i] * design_scores.row(i).transpose() * design_scores.row(i);
    const MatrixXd lhs = m + lambda * a.a;
    Eigen::ColPivHouseholderQR<MatrixXd> qr(lhs);
    qr.setThreshold(1e-12);
    if (qr.rank() < K)
        throw SingularError("penalized_transform: X'WX + lambda A has rank " +
                            std::to_string(qr.rank()) + " < " + std::to_string(K));
    return qr.solve(m * mm_slopes);
}

/// RFPCPR with a given penalty weight: the RFPCR pipeline followed by the
/// score transform; the regression intercept is kept, the functional
/// intercept is recomputed from the transformed scores.
inline CoefficientEstimate rfpcpr_from_basis(const FitBasis& basis, const VectorXd& y, int K,
                                             double lambda, const Tuning& tune = Tuning{},
                                             std::uint64_t stream = 0,
                                             const std::vector<VectorXd>& warm_starts = {}) {
    CoefficientEstimate est = rfpcr_from_basis(basis, y, K, tune, stream, warm_starts);
    const PenaltyMatrix a = penalty_matrix(est.eigensystem);
    const VectorXd tr = penalized_transform(basis.design.block(0, 1, basis.design.rows(), K),
                                            est.regression.weights, est.regression.beta1, a,
                                            lambda);
    CoefficientEstimate out = detail::assemble(basis, K, est.regression, tr, lambda);
    return out;
}

inline CoefficientEstimate rfpcpr_fit(const FunctionalSample& sample, const VectorXd& y, int K,
                                      double lambda, const Tuning& tune = Tuning{},
                                      std::uint64_t stream = 0) {
    if (K > sample.n() - 3) throw InsufficientDataError("rfpcpr: K must be <= n-3");
    return rfpcpr_from_basis(robust_basis(sample, K, tune, stream), y, K, lambda, tune, stream);
}

/// Classical baseline: pointwise mean, SD-scale projection pursuit
/// (covariance eigenfunctions) and ordinary least squares on the scores.
inline CoefficientEstimate classical_fpcr_from_basis(const FitBasis& basis, const VectorXd& y,
                                                     int K) {
    if (K > basis.es.K()) throw RankExhaustedError("fpcr: K exceeds extracted components");
    const MatrixXd design = basis.design.leftCols(K + 1);
    RegressionFit fit = ols_fit(design, y);
    return detail::assemble(basis, K, fit, fit.beta1, 0.0);
}

inline CoefficientEstimate classical_fpcr_fit(const FunctionalSample& sample, const VectorXd& y,
                                              int K, const Tuning& tune = Tuning{},
                                              std::uint64_t stream = 0) {
    if (K > sample.n() - 2) throw InsufficientDataError("fpcr: K must be <= n-2");
    return classical_fpcr_from_basis(classical_basis(sample, K, tune, stream), y, K);
}

/// Predicted conditional means alpha + <X_i, beta> on new curves.
inline VectorXd predict(const CoefficientEstimate& estimate, const FunctionalSample& newcurves) {
    VectorXd out = inner_products(newcurves, estimate.beta_fn);
    out.array() += estimate.alpha;
    return out;
}

}  // namespace rfpc
