#pragma once

#include <Eigen/Dense>
#include <atomic>
#include <cmath>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "config.hpp"
#include "errors.hpp"
#include "funcspace.hpp"
#include "rng.hpp"
#include "select.hpp"

namespace rfpc {

inline double sample_sd(const VectorXd& x) {
    const double m = x.mean();
    return std::sqrt((x.array() - m).square().sum() / static_cast<double>(x.size() - 1));
}

struct SimConfig {
    int model = 1;  // 1 or 2
    int n = 60;
    int p = 100;
    double nsr = 0.05;
    double eps = 0.0;        // contamination fraction
    double gamma = 1.7;      // response distortion of contaminated rows
    double rho_corr = 0.7;   // model 1 lag-1 correlation
    int replications = 100;
    std::uint64_t seed = 0;
    std::vector<EstimatorKind> estimators = {EstimatorKind::FPCR, EstimatorKind::RFPCR,
                                             EstimatorKind::RFPCPR};
    int k_max = 30;
    // Response conventions.  Defaults follow the reference tables: the clean
    // signal is the raw matrix product y0 = X beta and sigma = nsr * SD(y0).
    // The alternatives (quadrature signal, sigma^2 = nsr * Var(y0)) are kept
    // switchable for sensitivity runs.
    bool quadrature_signal = false;
    bool nsr_scales_sd = true;
    int threads = 0;  // 0: hardware concurrency
    Tuning tuning;
};

struct SimCell {
    double pred_err = 0.0;
    double est_err = 0.0;
    int chosen_k = 0;
    double chosen_lambda = 0.0;
    bool failed = false;
    std::string error;
};

struct SimResult {
    SimConfig config;
    std::vector<std::string> estimator_names;
    std::vector<std::vector<SimCell>> cells;  // [estimator][replication]
    std::vector<double> pred_mean, pred_median, est_mean, est_median;
    std::vector<int> failures;
};

namespace detail {

// RNG stream roles within one replication.
inline constexpr std::uint64_t kRoleCurves = 10;
inline constexpr std::uint64_t kRoleNoise = 11;

inline MatrixXd model1_cholesky(int p, double rho_corr) {
    MatrixXd sigma(p, p);
    const double a = 1.0 / rho_corr - 1.0;
    for (int i = 0; i < p; ++i)
        for (int j = 0; j < p; ++j) {
            const double d = static_cast<double>(i - j);
            sigma(i, j) = 1.0 / (1.0 + a * d * d);
        }
    Eigen::LLT<MatrixXd> llt(sigma);
    if (llt.info() != Eigen::Success) {
        sigma.diagonal().array() += 1e-10;
        llt.compute(sigma);
        if (llt.info() != Eigen::Success)
            throw DegenerateError("model 1 covariance is not positive definite");
    }
    return llt.matrixL();
}

inline MatrixXd model2_basis(int p, const VectorXd& t, int terms = 50) {
    MatrixXd b(terms, p);
    for (int k = 1; k <= terms; ++k) {
        const double freq = (k - 0.5) * M_PI;
        const double amp = M_SQRT2 / freq;  // sqrt(lambda_k) * sqrt(2)
        for (int j = 0; j < p; ++j) b(k - 1, j) = amp * std::sin(freq * t[j]);
    }
    return b;
}

}  // namespace detail

/// Model 1: sinusoid mean with increasing amplitude, noise proportional to
/// sqrt(|mu|) and persistent lag correlations; beta(t) = sqrt(t).
inline std::pair<FunctionalSample, Curve> gen_model1(int n, int p, double rho_corr,
                                                     CounterRng& rng,
                                                     const MatrixXd* chol = nullptr) {
    if (p < 4) throw InsufficientDataError("gen_model1 needs p >= 4");
    GridPtr grid = Grid::over_unit(p);
    const VectorXd& t = grid->points();
    MatrixXd l;
    if (!chol) {
        l = detail::model1_cholesky(p, rho_corr);
        chol = &l;
    }
    MatrixXd z(n, p);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < p; ++j) z(i, j) = rng.next_normal();
    const MatrixXd u = z * chol->transpose();

    MatrixXd rows(n, p);
    for (int j = 0; j < p; ++j) {
        const double mu = std::sin(6.0 * M_PI * t[j]) * (t[j] + 1.0);
        const double s = 0.9 * std::sqrt(std::abs(mu));
        for (int i = 0; i < n; ++i) rows(i, j) = mu + s * u(i, j);
    }
    Curve beta = Curve::from_function(grid, [](double x) { return std::sqrt(x); });
    return {FunctionalSample(grid, std::move(rows)), std::move(beta)};
}

/// Model 2: truncated Wiener expansion (50 terms) with a wiggly coefficient
/// function log(1.5 t^2 + 10) + cos(4 pi t).
inline std::pair<FunctionalSample, Curve> gen_model2(int n, int p, CounterRng& rng,
                                                     const MatrixXd* basis = nullptr) {
    if (p < 4) throw InsufficientDataError("gen_model2 needs p >= 4");
    GridPtr grid = Grid::over_unit(p);
    MatrixXd b;
    if (!basis) {
        b = detail::model2_basis(p, grid->points());
        basis = &b;
    }
    const int terms = static_cast<int>(basis->rows());
    MatrixXd z(n, terms);
    for (int i = 0; i < n; ++i)
        for (int k = 0; k < terms; ++k) z(i, k) = rng.next_normal();
    MatrixXd rows = z * (*basis);
    Curve beta = Curve::from_function(
        grid, [](double x) { return std::log(1.5 * x * x + 10.0) + std::cos(4.0 * M_PI * x); });
    return {FunctionalSample(grid, std::move(rows)), std::move(beta)};
}

/// Clean signal y0 = X beta (raw matrix product by default, quadrature
/// integral when requested) plus Gaussian noise scaled to the requested
/// noise-to-signal ratio: sigma = nsr * SD(y0), or sigma^2 = nsr * Var(y0)
/// under the variance reading.
inline std::pair<VectorXd, VectorXd> make_response(const FunctionalSample& sample,
                                                   const Curve& beta, double nsr,
                                                   CounterRng& rng, bool nsr_scales_sd = true,
                                                   bool quadrature_signal = false) {
    require_same_grid(*sample.grid, *beta.grid);
    VectorXd y0 = quadrature_signal ? inner_products(sample, beta)
                                    : VectorXd(sample.rows * beta.values);
    const double sd0 = sample_sd(y0);
    if (sd0 == 0.0) throw DegenerateError("make_response: clean signal is constant");
    const double sigma = nsr_scales_sd ? nsr * sd0 : std::sqrt(nsr) * sd0;
    VectorXd y(y0.size());
    for (Eigen::Index i = 0; i < y0.size(); ++i) y[i] = y0[i] + sigma * rng.next_normal();
    return {std::move(y), std::move(y0)};
}

/// Bad-leverage contamination: the first floor(n*eps) curves are doubled and
/// their responses replaced by 2*gamma*y0.
inline std::pair<FunctionalSample, VectorXd> contaminate(const FunctionalSample& sample,
                                                         const VectorXd& y, const VectorXd& y0,
                                                         double eps, double gamma) {
    const auto m = static_cast<Eigen::Index>(std::floor(sample.n() * eps));
    if (m == 0) return {sample, y};
    MatrixXd rows = sample.rows;
    VectorXd yc = y;
    for (Eigen::Index i = 0; i < m; ++i) {
        rows.row(i) *= 2.0;
        yc[i] = 2.0 * gamma * y0[i];
    }
    return {FunctionalSample(sample.grid, std::move(rows)), std::move(yc)};
}

/// Mean-squared prediction error on the clean data and the grid-mean squared
/// coefficient error.  Under the raw signal convention the estimation
/// criterion compares the applied-coefficient vector (quadrature weights
/// times the fitted curve, i.e. the coefficients the functional actually
/// applies to the rows of X) against beta(t_j); under the quadrature
/// convention the fitted curve estimates beta directly.
inline std::pair<double, double> evaluate(const CoefficientEstimate& estimate,
                                          const FunctionalSample& clean_sample,
                                          const VectorXd& y0, const Curve& beta_true,
                                          bool quadrature_signal = false) {
    require_same_grid(*clean_sample.grid, *beta_true.grid);
    const VectorXd yhat = predict(estimate, clean_sample);
    const double pred = (y0 - yhat).squaredNorm() / static_cast<double>(y0.size());
    VectorXd applied = estimate.beta_fn.values;
    if (!quadrature_signal)
        applied = (clean_sample.grid->quad_weights().array() * applied.array()).matrix();
    const double est = (applied - beta_true.values).squaredNorm() /
                       static_cast<double>(beta_true.values.size());
    return {pred, est};
}

/// Full replication study: generate, contaminate, fit every configured
/// estimator with its selection pipeline, evaluate against the clean data.
/// Replications run on independent RNG streams, so the result is identical
/// for a given config regardless of the thread count.
inline SimResult run_study(const SimConfig& config) {
    SimResult result;
    result.config = config;
    Tuning tune = config.tuning;
    tune.seed = config.seed;

    const auto n_est = config.estimators.size();
    result.estimator_names.reserve(n_est);
    for (EstimatorKind k : config.estimators) result.estimator_names.push_back(estimator_name(k));
    result.cells.assign(n_est, std::vector<SimCell>(static_cast<std::size_t>(config.replications)));

    MatrixXd shared;  // Cholesky factor or sine basis, reused across replications
    GridPtr grid = Grid::over_unit(config.p);
    if (config.model == 1)
        shared = detail::model1_cholesky(config.p, config.rho_corr);
    else
        shared = detail::model2_basis(config.p, grid->points());

    auto run_one = [&](int rep) {
        CounterRng curve_rng = CounterRng::stream(config.seed, static_cast<std::uint64_t>(rep),
                                                  detail::kRoleCurves);
        CounterRng noise_rng = CounterRng::stream(config.seed, static_cast<std::uint64_t>(rep),
                                                  detail::kRoleNoise);
        auto [sample, beta] = config.model == 1
                                  ? gen_model1(config.n, config.p, config.rho_corr, curve_rng,
                                               &shared)
                                  : gen_model2(config.n, config.p, curve_rng, &shared);
        auto [y, y0] = make_response(sample, beta, config.nsr, noise_rng, config.nsr_scales_sd,
                                     config.quadrature_signal);
        auto [sample_c, y_c] = contaminate(sample, y, y0, config.eps, config.gamma);

        for (std::size_t e = 0; e < n_est; ++e) {
            SimCell& cell = result.cells[e][static_cast<std::size_t>(rep)];
            try {
                const std::uint64_t stream =
                    static_cast<std::uint64_t>(rep) * 64 + static_cast<std::uint64_t>(e);
                AutoFitResult fit = fit_auto(sample_c, y_c, config.estimators[e], /*k=*/0,
                                             /*lambda=*/-1.0, config.k_max, tune, stream);
                auto [pred, est] = evaluate(fit.estimate, sample, y0, beta,
                                            config.quadrature_signal);
                cell.pred_err = pred;
                cell.est_err = est;
                cell.chosen_k = fit.estimate.K;
                cell.chosen_lambda = fit.estimate.lambda;
            } catch (const std::exception& ex) {
                cell.failed = true;
                cell.error = ex.what();
            }
        }
    };

    int hw = config.threads > 0 ? config.threads
                                : static_cast<int>(std::thread::hardware_concurrency());
    hw = std::max(1, std::min(hw, config.replications));
    if (hw == 1) {
        for (int rep = 0; rep < config.replications; ++rep) run_one(rep);
    } else {
        std::atomic<int> next{0};
        std::vector<std::thread> pool;
        pool.reserve(static_cast<std::size_t>(hw));
        for (int t = 0; t < hw; ++t)
            pool.emplace_back([&] {
                for (int rep = next.fetch_add(1); rep < config.replications;
                     rep = next.fetch_add(1))
                    run_one(rep);
            });
        for (auto& th : pool) th.join();
    }

    for (std::size_t e = 0; e < n_est; ++e) {
        std::vector<double> preds, ests;
        int failed = 0;
        for (const SimCell& c : result.cells[e]) {
            if (c.failed) {
                ++failed;
                continue;
            }
            preds.push_back(c.pred_err);
            ests.push_back(c.est_err);
        }
        result.failures.push_back(failed);
        if (preds.empty()) {
            result.pred_mean.push_back(std::numeric_limits<double>::quiet_NaN());
            result.pred_median.push_back(std::numeric_limits<double>::quiet_NaN());
            result.est_mean.push_back(std::numeric_limits<double>::quiet_NaN());
            result.est_median.push_back(std::numeric_limits<double>::quiet_NaN());
            continue;
        }
        Eigen::Map<VectorXd> pv(preds.data(), static_cast<Eigen::Index>(preds.size()));
        Eigen::Map<VectorXd> ev(ests.data(), static_cast<Eigen::Index>(ests.size()));
        result.pred_mean.push_back(pv.mean());
        result.est_mean.push_back(ev.mean());
        result.pred_median.push_back(median(pv));
        result.est_median.push_back(median(ev));
    }
    return result;
}

}  // namespace rfpc
