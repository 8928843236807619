#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <vector>

#include "config.hpp"
#include "funcspace.hpp"
#include "gauss.hpp"
#include "losses.hpp"
#include "ppfpca.hpp"

namespace rfpc {

/// Finite-dimensional configuration for influence-function evaluation.
struct IFSetting {
    VectorXd eigenvalues;               // strictly decreasing, positive
    std::vector<Curve> eigenfunctions;  // orthonormal
    VectorXd beta_scores;               // model coefficients on the eigenfunctions
    double beta0 = 0.0;
    double sigma = 1.0;
    LossFunction loss = LossFunction::tukey(Tuning{}.tukey_c1);
    double qn_d = Tuning{}.qn_d;

    int K() const { return static_cast<int>(eigenfunctions.size()); }
};

/// IF of the Q scale functional at the standard normal:
/// d * (1/4 - F(x + 1/d) + F(x - 1/d)) / \int f(y + 1/d) f(y) dy.
inline double if_q_gaussian(double x, double d = Tuning{}.qn_d) {
    static thread_local double cached_d = 0.0;
    static thread_local double cached_denom = 0.0;
    if (cached_d != d) {
        const double shift = 1.0 / d;
        cached_denom = integrate_legendre(
            [&](double y) { return normal_pdf(y + shift) * normal_pdf(y); }, -12.0 - shift, 12.0,
            128);
        cached_d = d;
    }
    const double shift = 1.0 / d;
    return d * (0.25 - normal_cdf(x + shift) + normal_cdf(x - shift)) / cached_denom;
}

inline double if_q_gaussian_prime(double x, double d = Tuning{}.qn_d, double h = 1e-4) {
    return (if_q_gaussian(x + h, d) - if_q_gaussian(x - h, d)) / (2.0 * h);
}

/// IF of MM regression at the finite-dimensional model: with x = (1, x0),
/// (sigma/d) psi(r/sigma) (E xx')^{-1} x and E xx' = diag(1, lambda_1..K).
inline VectorXd if_mm(const VectorXd& score_x, double y, const IFSetting& setting) {
    const int K = setting.K();
    const double r = y - setting.beta0 - score_x.tail(K).dot(setting.beta_scores);
    const double d = gaussian_psi_prime_expectation(setting.loss);
    VectorXd out(K + 1);
    const double f = setting.sigma / d * setting.loss.psi(r / setting.sigma);
    out[0] = f * score_x[0];
    for (int j = 0; j < K; ++j) out[j + 1] = f * score_x[j + 1] / setting.eigenvalues[j];
    return out;
}

namespace detail {

/// Derivative of the scale IF used inside the eigenfunction IF: numeric for
/// the Q functional, the exact x for the classical SD scale
/// (IF(x, SD, Phi) = (x^2 - 1)/2).
inline double scale_if_prime(double z, bool classical, double qn_d) {
    return classical ? z : if_q_gaussian_prime(z, qn_d);
}

inline Curve if_pp_eigenfunction_impl(const Curve& x, int k, const IFSetting& setting,
                                      bool classical) {
    const int K = setting.K();
    if (k < 0 || k >= K) throw Error("if_pp_eigenfunction: component out of range");
    VectorXd scores(K);
    for (int j = 0; j < K; ++j) scores[j] = inner_product(x, setting.eigenfunctions[static_cast<std::size_t>(j)]);
    VectorXd out = VectorXd::Zero(x.grid->size());
    const VectorXd& lam = setting.eigenvalues;
    for (int j = 0; j < k; ++j) {
        const double coef = std::sqrt(lam[j]) / (lam[k] - lam[j]) *
                            detail::scale_if_prime(scores[j] / std::sqrt(lam[j]), classical,
                                                   setting.qn_d) *
                            scores[k];
        out += coef * setting.eigenfunctions[static_cast<std::size_t>(j)].values;
    }
    for (int j = k + 1; j < K; ++j) {
        const double coef = std::sqrt(lam[k]) / (lam[k] - lam[j]) *
                            detail::scale_if_prime(scores[k] / std::sqrt(lam[k]), classical,
                                                   setting.qn_d) *
                            scores[j];
        out += coef * setting.eigenfunctions[static_cast<std::size_t>(j)].values;
    }
    return Curve(x.grid, std::move(out));
}

inline double composite_if_norm(const Curve& x, double y, const IFSetting& setting,
                                bool classical) {
    const int K = setting.K();
    VectorXd score_x(K + 1);
    score_x[0] = 1.0;
    for (int j = 0; j < K; ++j)
        score_x[j + 1] = inner_product(x, setting.eigenfunctions[static_cast<std::size_t>(j)]);

    VectorXd reg_if(K + 1);
    if (classical) {
        // least squares: psi(u) = u, d = 1
        const double r = y - setting.beta0 - score_x.tail(K).dot(setting.beta_scores);
        reg_if[0] = r;
        for (int j = 0; j < K; ++j) reg_if[j + 1] = r * score_x[j + 1] / setting.eigenvalues[j];
    } else {
        reg_if = if_mm(score_x, y, setting);
    }

    VectorXd curve = VectorXd::Zero(x.grid->size());
    for (int j = 0; j < K; ++j)
        curve += reg_if[j + 1] * setting.eigenfunctions[static_cast<std::size_t>(j)].values;
    for (int j = 0; j < K; ++j)
        curve += setting.beta_scores[j] *
                 detail::if_pp_eigenfunction_impl(x, j, setting, classical).values;
    return norm(Curve(x.grid, std::move(curve)));
}

}  // namespace detail

/// IF of the k-th projection-pursuit eigenfunction (0-based k), truncated at
/// the K components of the setting; lies in span{v_j, j != k}.
inline Curve if_pp_eigenfunction(const Curve& x, int k, const IFSetting& setting) {
    return detail::if_pp_eigenfunction_impl(x, k, setting, false);
}

/// L2 norm of the composite IF of the robust estimator:
/// sum_j IF(beta_1j) v_j + sum_j beta_1j IF(v_j).
inline double if_rfpcr_norm(const Curve& x, double y, const IFSetting& setting) {
    return detail::composite_if_norm(x, y, setting, false);
}

/// Same composite for the classical estimator: identity psi in the
/// regression part and the SD-scale IF inside the eigenfunction part.
inline double if_classical_norm(const Curve& x, double y, const IFSetting& setting) {
    return detail::composite_if_norm(x, y, setting, true);
}

struct IFSurfaceRow {
    double free_score;
    double y;
    double norm_robust;
    double norm_classical;
};

/// Surface of IF norms over (free score, y) with the other score fixed; the
/// two-component configuration of the IF comparison plots.
inline std::vector<IFSurfaceRow> if_surface(const IFSetting& setting, int fixed_index,
                                            double fixed_value, double score_min,
                                            double score_max, int score_points, double y_min,
                                            double y_max, int y_points) {
    if (setting.K() != 2) throw Error("if_surface expects a two-component setting");
    if (fixed_index < 0 || fixed_index > 1) throw Error("if_surface: fixed_index must be 0 or 1");
    const int free_index = 1 - fixed_index;
    const GridPtr grid = setting.eigenfunctions[0].grid;
    std::vector<IFSurfaceRow> rows;
    rows.reserve(static_cast<std::size_t>(score_points) * static_cast<std::size_t>(y_points));
    for (int i = 0; i < score_points; ++i) {
        const double s = score_min + (score_max - score_min) * i / (score_points - 1);
        VectorXd values = fixed_value * setting.eigenfunctions[static_cast<std::size_t>(fixed_index)].values +
                          s * setting.eigenfunctions[static_cast<std::size_t>(free_index)].values;
        Curve x(grid, std::move(values));
        for (int j = 0; j < y_points; ++j) {
            const double y = y_min + (y_max - y_min) * j / (y_points - 1);
            rows.push_back({s, y, if_rfpcr_norm(x, y, setting), if_classical_norm(x, y, setting)});
        }
    }
    return rows;
}

/// The two-component Wiener-eigenfunction setting used for the IF surface
/// plots: lambda_i = pi^{-2} (i - 1/2)^{-2}, v_i = sqrt(2) sin((i-1/2) pi t).
inline IFSetting figure_setting(int p = 201, double beta0 = 0.0, double sigma = 1.0) {
    IFSetting s;
    GridPtr grid = Grid::uniform(p);
    s.eigenvalues.resize(2);
    s.eigenfunctions.clear();
    for (int i = 1; i <= 2; ++i) {
        const double freq = (i - 0.5) * M_PI;
        s.eigenvalues[i - 1] = 1.0 / (freq * freq);
        s.eigenfunctions.push_back(
            Curve::from_function(grid, [freq](double t) { return M_SQRT2 * std::sin(freq * t); }));
    }
    // Model coefficients: projections of the wiggly simulation coefficient
    // function onto the two eigenfunctions.
    Curve beta = Curve::from_function(
        grid, [](double t) { return std::log(1.5 * t * t + 10.0) + std::cos(4.0 * M_PI * t); });
    s.beta_scores.resize(2);
    for (int j = 0; j < 2; ++j)
        s.beta_scores[j] = inner_product(beta, s.eigenfunctions[static_cast<std::size_t>(j)]);
    s.beta0 = beta0;
    s.sigma = sigma;
    return s;
}

}  // namespace rfpc
