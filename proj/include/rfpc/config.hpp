#pragma once

#include <cstdint>

#include "losses.hpp"

namespace rfpc {

/// All tuning constants used anywhere in the library, in one place.  The
/// derived defaults (breakdown / efficiency constants, Gaussian consistency
/// factors) are pinned values; `tools/rfpc_calibrate` recomputes them from
/// the root-finders so drift is detectable.
struct Tuning {
    // Loss constants.
    double huber_k_location = 1.345;   // functional M-location
    double tukey_c0 = 1.547645;        // S stage / M-scale, E_Phi rho = 0.5
    double tukey_c1 = 4.685065;        // MM stage, 95% Gaussian efficiency
    double mscale_b = 0.5;             // 50% breakdown

    // Scale constants.
    double qn_d = 2.219144;            // Qn Gaussian consistency factor
    double tau_c = 3.136909;           // tau-scale rho, 80% efficiency
    double tau_b = 0.227597;           // E_Phi rho_{tau_c}, Fisher consistency

    // Fast-S.
    int s_subsamples = 500;
    int s_best_candidates = 5;
    int s_refine_steps = 50;

    // MM IRWLS.
    double mm_tol = 1e-9;
    int mm_max_iter = 500;

    // Functional location.
    double floc_tol = 1e-8;
    int floc_max_iter = 200;

    // Projection-pursuit search.
    int pp_refine_rounds = 2;
    int pp_rotation_partners = 50;

    // Leverage-studentize residuals inside the regression pipeline (scale
    // equation and IRWLS weights); keeps the robust fit efficient when K is
    // a sizable fraction of n.
    bool studentize_residuals = true;

    // Smoothing-parameter selection.
    double lambda_grid_min = 1e-8;
    double lambda_grid_max = 1e8;
    int lambda_grid_points = 81;

    std::uint64_t seed = 0;

    LossFunction loss_location() const { return LossFunction::huber(huber_k_location); }
    LossFunction loss_s() const { return LossFunction::tukey(tukey_c0); }
    LossFunction loss_mm() const { return LossFunction::tukey(tukey_c1); }
    LossFunction loss_tau() const { return LossFunction::tukey(tau_c); }
};

}  // namespace rfpc
