#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <memory>
#include <utility>

#include "errors.hpp"

namespace rfpc {

using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Common abscissa for discretized functions on [0,1] with trapezoidal
/// quadrature weights.  Shared (immutable) between curves of one analysis.
class Grid {
public:
    explicit Grid(VectorXd points) : points_(std::move(points)) {
        const auto p = points_.size();
        if (p < 4) throw InsufficientDataError("grid needs at least 4 points");
        if (points_[0] < 0.0 || points_[p - 1] > 1.0)
            throw Error("grid points must lie in [0,1]");
        for (Eigen::Index k = 1; k < p; ++k)
            if (!(points_[k] > points_[k - 1]))
                throw Error("grid points must be strictly increasing");
        weights_ = VectorXd::Zero(p);
        for (Eigen::Index k = 0; k + 1 < p; ++k) {
            const double h = points_[k + 1] - points_[k];
            weights_[k] += 0.5 * h;
            weights_[k + 1] += 0.5 * h;
        }
    }

    static std::shared_ptr<const Grid> uniform(Eigen::Index p, double a = 0.0, double b = 1.0) {
        return std::make_shared<const Grid>(VectorXd::LinSpaced(p, a, b));
    }

    /// Grid at t_j = j/p, j = 1..p.
    static std::shared_ptr<const Grid> over_unit(Eigen::Index p) {
        VectorXd t(p);
        for (Eigen::Index j = 0; j < p; ++j) t[j] = static_cast<double>(j + 1) / static_cast<double>(p);
        return std::make_shared<const Grid>(t);
    }

    Eigen::Index size() const { return points_.size(); }
    const VectorXd& points() const { return points_; }
    const VectorXd& quad_weights() const { return weights_; }

    bool same_as(const Grid& other) const {
        return this == &other || points_ == other.points_;
    }

private:
    VectorXd points_;
    VectorXd weights_;
};

using GridPtr = std::shared_ptr<const Grid>;

/// One discretized function; values[k] = f(grid.points()[k]).
struct Curve {
    GridPtr grid;
    VectorXd values;

    Curve() = default;
    Curve(GridPtr g, VectorXd v) : grid(std::move(g)), values(std::move(v)) {
        if (!grid || values.size() != grid->size())
            throw Error("curve length does not match its grid");
        if (!values.allFinite()) throw Error("curve has non-finite values");
    }

    template <class F>
    static Curve from_function(const GridPtr& g, F&& f) {
        VectorXd v(g->size());
        for (Eigen::Index k = 0; k < g->size(); ++k) v[k] = f(g->points()[k]);
        return Curve(g, std::move(v));
    }

    static Curve zero(const GridPtr& g) { return Curve(g, VectorXd::Zero(g->size())); }
};

inline void require_same_grid(const Grid& a, const Grid& b) {
    if (!a.same_as(b)) throw GridMismatchError("curves live on different grids");
}

/// n discretized functions on one shared grid, stored row-wise.
struct FunctionalSample {
    GridPtr grid;
    MatrixXd rows;  // n x p

    FunctionalSample() = default;
    FunctionalSample(GridPtr g, MatrixXd r) : grid(std::move(g)), rows(std::move(r)) {
        if (!grid || rows.cols() != grid->size())
            throw Error("sample width does not match its grid");
        if (rows.rows() < 1) throw InsufficientDataError("sample is empty");
    }

    Eigen::Index n() const { return rows.rows(); }
    Eigen::Index p() const { return rows.cols(); }
    Curve row(Eigen::Index i) const { return Curve(grid, rows.row(i).transpose()); }
};

inline double inner_product(const Curve& f, const Curve& g) {
    require_same_grid(*f.grid, *g.grid);
    return (f.grid->quad_weights().array() * f.values.array() * g.values.array()).sum();
}

inline double norm(const Curve& f) {
    const double sq = (f.grid->quad_weights().array() * f.values.array().square()).sum();
    return std::sqrt(std::max(sq, 0.0));
}

/// Scores <row_i, g> for all rows at once.
inline VectorXd inner_products(const FunctionalSample& sample, const Curve& g) {
    require_same_grid(*sample.grid, *g.grid);
    return sample.rows * (sample.grid->quad_weights().array() * g.values.array()).matrix();
}

inline FunctionalSample center_sample(const FunctionalSample& sample, const Curve& location) {
    require_same_grid(*sample.grid, *location.grid);
    MatrixXd centered = sample.rows.rowwise() - location.values.transpose();
    return FunctionalSample(sample.grid, std::move(centered));
}

/// Second derivative of the natural cubic spline interpolant, evaluated at
/// the grid points.  Exact away from the boundary layer for cubics; linear
/// curves map to the zero curve.
inline Curve second_derivative(const Curve& f) {
    const auto p = f.grid->size();
    if (p < 4) throw InsufficientDataError("second_derivative needs p >= 4");
    const VectorXd& t = f.grid->points();
    const VectorXd& y = f.values;

    // Tridiagonal system for interior spline moments, natural BCs M_0=M_{p-1}=0.
    const Eigen::Index m = p - 2;
    VectorXd diag(m), sub(m), sup(m), rhs(m);
    for (Eigen::Index i = 0; i < m; ++i) {
        const double h0 = t[i + 1] - t[i];
        const double h1 = t[i + 2] - t[i + 1];
        sub[i] = h0 / 6.0;
        diag[i] = (h0 + h1) / 3.0;
        sup[i] = h1 / 6.0;
        rhs[i] = (y[i + 2] - y[i + 1]) / h1 - (y[i + 1] - y[i]) / h0;
    }
    // Thomas algorithm.
    for (Eigen::Index i = 1; i < m; ++i) {
        const double w = sub[i] / diag[i - 1];
        diag[i] -= w * sup[i - 1];
        rhs[i] -= w * rhs[i - 1];
    }
    VectorXd moments = VectorXd::Zero(p);
    moments[p - 2] = rhs[m - 1] / diag[m - 1];
    for (Eigen::Index i = m - 2; i >= 0; --i)
        moments[i + 1] = (rhs[i] - sup[i] * moments[i + 2]) / diag[i];
    return Curve(f.grid, std::move(moments));
}

}  // namespace rfpc
