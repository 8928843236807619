#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "config.hpp"
#include "errors.hpp"
#include "funcspace.hpp"
#include "rng.hpp"
#include "scales.hpp"

namespace rfpc {

enum class ScaleKind { Qn, SD };

/// Ordered robust eigenfunctions with squared-scale dispersions.
struct EigenSystem {
    std::vector<Curve> directions;
    VectorXd dispersions;
    ScaleKind scale_kind = ScaleKind::Qn;
    bool rank_exhausted = false;  // fewer components extractable than requested

    int K() const { return static_cast<int>(directions.size()); }
};

inline double scale_value(const VectorXd& scores, ScaleKind kind, const Tuning& tune) {
    if (kind == ScaleKind::Qn) return qn_scale(scores, tune.qn_d).value;
    const double m = scores.mean();
    const double ss = (scores.array() - m).square().sum();
    return std::sqrt(ss / static_cast<double>(scores.size() - 1));
}

namespace detail {

inline void deflate_rows(MatrixXd& rows, const VectorXd& qw, const VectorXd& v) {
    const VectorXd scores = rows * (qw.array() * v.array()).matrix();
    rows.noalias() -= scores * v.transpose();
}

inline double l2_norm(const VectorXd& qw, const VectorXd& v) {
    return std::sqrt(std::max((qw.array() * v.array().square()).sum(), 0.0));
}

inline void apply_sign_convention(VectorXd& v) {
    double s = v.sum();
    if (s == 0.0) {
        for (Eigen::Index k = 0; k < v.size(); ++k) {
            if (v[k] != 0.0) {
                s = v[k];
                break;
            }
        }
    }
    if (s < 0.0) v = -v;
}

}  // namespace detail

/// One projection-pursuit direction: the unit-norm curve, orthogonal to all
/// constraints, maximizing the chosen scale of the projected sample.  Search:
/// Croux/Ruiz-Gazen data candidates followed by rounds of two-direction
/// rotations v(theta) = cos(theta) v + sin(theta) w refined by golden-section
/// search, with one score-weighted "power" partner per round.
inline Curve pp_direction(const FunctionalSample& sample_centered, ScaleKind kind,
                          const std::vector<Curve>& constraints, const Tuning& tune = Tuning{},
                          std::uint64_t stream = 0) {
    const VectorXd& qw = sample_centered.grid->quad_weights();
    const auto n = sample_centered.n();
    MatrixXd rows = sample_centered.rows;
    for (const Curve& c : constraints) {
        require_same_grid(*sample_centered.grid, *c.grid);
        detail::deflate_rows(rows, qw, c.values);
    }

    double max_norm = 0.0;
    VectorXd row_norms(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        row_norms[i] = detail::l2_norm(qw, rows.row(i).transpose());
        max_norm = std::max(max_norm, row_norms[i]);
    }
    if (max_norm <= 0.0) throw RankExhaustedError("pp_direction: all candidates are zero");

    auto objective = [&](const VectorXd& scores) { return scale_value(scores, kind, tune); };
    auto scores_of = [&](const VectorXd& v) -> VectorXd {
        return rows * (qw.array() * v.array()).matrix();
    };

    // Candidate sweep.
    VectorXd best_v;
    VectorXd best_scores;
    double best_obj = -1.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        if (row_norms[i] <= 1e-12 * max_norm) continue;
        VectorXd v = rows.row(i).transpose() / row_norms[i];
        VectorXd s = scores_of(v);
        const double obj = objective(s);
        if (obj > best_obj) {
            best_obj = obj;
            best_v = std::move(v);
            best_scores = std::move(s);
        }
    }
    if (best_obj < 0.0) throw RankExhaustedError("pp_direction: no usable candidate");

    CounterRng rng = CounterRng::stream(tune.seed, stream, /*role=*/2);

    auto orthical = [&](VectorXd w) -> VectorXd {
        // remove the components along best_v (constraints are already out of `rows`)
        const double a = (qw.array() * w.array() * best_v.array()).sum();
        w -= a * best_v;
        const double nr = detail::l2_norm(qw, w);
        if (nr <= 1e-10 * max_norm) return VectorXd();
        return w / nr;
    };

    auto try_partner = [&](const VectorXd& w) {
        if (w.size() == 0) return;
        const VectorXd sw = scores_of(w);
        auto obj_theta = [&](double th) {
            const double c = std::cos(th), s = std::sin(th);
            return objective(c * best_scores + s * sw);
        };
        // Coarse scan, then golden-section around the best cell.
        const int cells = 8;
        double th_best = 0.0, f_best = best_obj;
        for (int k = 0; k < cells; ++k) {
            const double th = -M_PI_2 + M_PI * (k + 0.5) / cells;
            const double f = obj_theta(th);
            if (f > f_best) {
                f_best = f;
                th_best = th;
            }
        }
        const double gr = 0.5 * (std::sqrt(5.0) - 1.0);
        double a = th_best - M_PI / cells, b = th_best + M_PI / cells;
        double x1 = b - gr * (b - a), x2 = a + gr * (b - a);
        double f1 = obj_theta(x1), f2 = obj_theta(x2);
        for (int it = 0; it < 14; ++it) {
            if (f1 < f2) {
                a = x1; x1 = x2; f1 = f2;
                x2 = a + gr * (b - a); f2 = obj_theta(x2);
            } else {
                b = x2; x2 = x1; f2 = f1;
                x1 = b - gr * (b - a); f1 = obj_theta(x1);
            }
        }
        const double th = f1 > f2 ? x1 : x2;
        const double f = std::max(f1, f2);
        if (std::max(f, f_best) > best_obj) {
            const double th_use = f > f_best ? th : th_best;
            const double c = std::cos(th_use), s = std::sin(th_use);
            best_v = c * best_v + s * w;
            best_v /= detail::l2_norm(qw, best_v);
            best_scores = scores_of(best_v);
            best_obj = objective(best_scores);
        }
    };

    for (int round = 0; round < tune.pp_refine_rounds; ++round) {
        // Score-weighted power direction: exact gradient direction for the SD
        // objective, a bounded-weight analogue for Qn.
        {
            VectorXd eta(n);
            if (kind == ScaleKind::SD) {
                eta = best_scores;
            } else {
                const double s0 = std::max(best_obj, 1e-300);
                const LossFunction damp = tune.loss_mm();
                for (Eigen::Index i = 0; i < n; ++i)
                    eta[i] = damp.weight(best_scores[i] / (2.0 * s0)) * best_scores[i];
            }
            try_partner(orthical(rows.transpose() * eta));
        }
        for (int t = 0; t < tune.pp_rotation_partners; ++t) {
            const Eigen::Index i = static_cast<Eigen::Index>(rng.next_below(n));
            if (row_norms[i] <= 1e-12 * max_norm) continue;
            try_partner(orthical(rows.row(i).transpose()));
        }
    }

    // Final hygiene: re-orthogonalize against the constraints and normalize.
    for (const Curve& c : constraints) {
        const double a = (qw.array() * best_v.array() * c.values.array()).sum();
        best_v -= a * c.values;
    }
    best_v /= detail::l2_norm(qw, best_v);
    detail::apply_sign_convention(best_v);
    return Curve(sample_centered.grid, best_v);
}

/// Sequential extraction of K projection-pursuit components with explicit
/// deflation of the data after each accepted direction.
inline EigenSystem pp_components(const FunctionalSample& sample, const Curve& location, int K,
                                 ScaleKind kind, const Tuning& tune = Tuning{},
                                 std::uint64_t stream = 0) {
    if (K < 1) throw Error("pp_components: K must be >= 1");
    if (K > std::min<Eigen::Index>(sample.n() - 1, sample.p()))
        throw Error("pp_components: K exceeds min(n-1, p)");
    FunctionalSample centered = center_sample(sample, location);
    FunctionalSample working = centered;
    const VectorXd& qw = sample.grid->quad_weights();

    EigenSystem es;
    es.scale_kind = kind;
    std::vector<double> disp;
    for (int j = 0; j < K; ++j) {
        Curve v;
        try {
            v = pp_direction(working, kind, es.directions, tune,
                             stream * 1024 + static_cast<std::uint64_t>(j));
        } catch (const RankExhaustedError&) {
            es.rank_exhausted = true;
            break;
        }
        const VectorXd scores = inner_products(centered, v);
        disp.push_back(std::pow(scale_value(scores, kind, tune), 2));
        es.directions.push_back(v);
        detail::deflate_rows(working.rows, qw, v.values);
    }
    if (es.directions.empty()) throw RankExhaustedError("pp_components: no component extractable");

    // Enforce nonincreasing dispersions (heuristic search can mis-order).
    std::vector<std::size_t> order(disp.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return disp[a] > disp[b]; });
    EigenSystem sorted;
    sorted.scale_kind = kind;
    sorted.rank_exhausted = es.rank_exhausted;
    sorted.dispersions.resize(static_cast<Eigen::Index>(disp.size()));
    for (std::size_t r = 0; r < order.size(); ++r) {
        sorted.directions.push_back(es.directions[order[r]]);
        sorted.dispersions[static_cast<Eigen::Index>(r)] = disp[order[r]];
    }
    return sorted;
}

/// n x (K+1) design: a column of ones, then the centered scores on each
/// eigenfunction.
inline MatrixXd score_matrix(const FunctionalSample& sample, const Curve& location,
                             const EigenSystem& es) {
    require_same_grid(*sample.grid, *location.grid);
    const auto n = sample.n();
    const int K = es.K();
    MatrixXd design(n, K + 1);
    design.col(0).setOnes();
    FunctionalSample centered = center_sample(sample, location);
    for (int j = 0; j < K; ++j) design.col(j + 1) = inner_products(centered, es.directions[j]);
    return design;
}

}  // namespace rfpc
