#pragma once

#include <cmath>
#include <limits>
#include <string>

#include "errors.hpp"
#include "gauss.hpp"

namespace rfpc {

enum class LossFamily { Huber, TukeyBisquare };

/// A rho family member with tuning constant c: supplies rho, psi = rho',
/// psi' and the IRWLS weight psi(x)/x (continuously extended at 0).
/// Tukey's bisquare is normalized so that sup rho = 1.
struct LossFunction {
    LossFamily family;
    double c;

    static LossFunction huber(double k) { return {LossFamily::Huber, k}; }
    static LossFunction tukey(double c) { return {LossFamily::TukeyBisquare, c}; }

    double rho(double x) const {
        const double a = std::abs(x);
        if (family == LossFamily::Huber) {
            return a <= c ? 0.5 * x * x : c * (a - 0.5 * c);
        }
        if (a >= c) return 1.0;
        const double u = 1.0 - (x / c) * (x / c);
        return 1.0 - u * u * u;
    }

    double psi(double x) const {
        if (family == LossFamily::Huber) {
            if (x > c) return c;
            if (x < -c) return -c;
            return x;
        }
        if (std::abs(x) >= c) return 0.0;
        const double u = 1.0 - (x / c) * (x / c);
        return 6.0 * x / (c * c) * u * u;
    }

    double psi_prime(double x) const {
        if (family == LossFamily::Huber) return std::abs(x) <= c ? 1.0 : 0.0;
        if (std::abs(x) >= c) return 0.0;
        const double s = (x / c) * (x / c);
        const double u = 1.0 - s;
        return 6.0 / (c * c) * u * (u - 4.0 * s);
    }

    /// psi(x)/x, extended to psi'(0) at x = 0.
    double weight(double x) const {
        if (x == 0.0) return family == LossFamily::Huber ? 1.0 : 6.0 / (c * c);
        if (family == LossFamily::Huber) {
            const double a = std::abs(x);
            return a <= c ? 1.0 : c / a;
        }
        if (std::abs(x) >= c) return 0.0;
        const double u = 1.0 - (x / c) * (x / c);
        return 6.0 / (c * c) * u * u;
    }

    double rho_sup() const {
        return family == LossFamily::Huber ? std::numeric_limits<double>::infinity() : 1.0;
    }
};

// Gaussian expectations of rho, psi^2 and psi'.  The integrands are smooth
// only inside [-c, c], so integrate there with Gauss-Legendre and add the
// analytic tail (rho and psi are explicit beyond c for both families).

inline double gaussian_rho_expectation(const LossFunction& loss) {
    const double core =
        2.0 * integrate_legendre([&](double z) { return loss.rho(z) * normal_pdf(z); }, 0.0, loss.c);
    const double tail_mass = 1.0 - normal_cdf(loss.c);
    if (loss.family == LossFamily::TukeyBisquare) return core + 2.0 * tail_mass;
    // Huber tail: 2 * int_c^inf c (z - c/2) phi(z) dz
    return core + 2.0 * loss.c * normal_pdf(loss.c) - loss.c * loss.c * tail_mass;
}

inline double gaussian_psi_sq_expectation(const LossFunction& loss) {
    const double core = 2.0 * integrate_legendre(
                            [&](double z) {
                                const double p = loss.psi(z);
                                return p * p * normal_pdf(z);
                            },
                            0.0, loss.c);
    if (loss.family == LossFamily::TukeyBisquare) return core;
    return core + 2.0 * loss.c * loss.c * (1.0 - normal_cdf(loss.c));
}

inline double gaussian_psi_prime_expectation(const LossFunction& loss) {
    return 2.0 * integrate_legendre([&](double z) { return loss.psi_prime(z) * normal_pdf(z); },
                                    0.0, loss.c);
}

/// Gaussian asymptotic efficiency E[psi'(Z)]^2 / E[psi(Z)^2] of the location
/// M-estimator with this loss, relative to the sample mean.
inline double gaussian_efficiency(const LossFunction& loss) {
    const double num = gaussian_psi_prime_expectation(loss);
    return num * num / gaussian_psi_sq_expectation(loss);
}

namespace detail {

template <class F>
double bisect_increasing(F&& f, double lo, double hi, double tol) {
    double flo = f(lo), fhi = f(hi);
    if (flo > 0.0 || fhi < 0.0) throw NoRootError("target outside attainable range");
    for (int it = 0; it < 200 && hi - lo > tol; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (f(mid) < 0.0) lo = mid; else hi = mid;
    }
    return 0.5 * (lo + hi);
}

}  // namespace detail

/// Tuning constant c with Gaussian efficiency equal to target (in (0,1)).
/// Efficiency is increasing in c for both families.
inline double tune_for_efficiency(LossFamily family, double target) {
    if (!(target > 0.0 && target < 1.0)) throw NoRootError("efficiency target must be in (0,1)");
    auto eff = [&](double c) {
        return gaussian_efficiency(LossFunction{family, c}) - target;
    };
    return detail::bisect_increasing(eff, 1e-3, 60.0, 1e-8);
}

/// Tukey constant c with E_Phi[rho_c(Z)] = b, so the M-scale with this rho
/// and right-hand side b is consistent at the Gaussian.  E rho is decreasing
/// in c.
inline double tune_for_breakdown(double b) {
    if (!(b > 0.0 && b < 1.0)) throw NoRootError("breakdown constant must be in (0,1)");
    auto g = [&](double c) {
        return b - gaussian_rho_expectation(LossFunction::tukey(c));
    };
    return detail::bisect_increasing(g, 1e-3, 60.0, 1e-8);
}

}  // namespace rfpc
