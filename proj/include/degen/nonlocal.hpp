#pragma once

#include "degen/hum.hpp"

#include <limits>
#include <string>
#include <vector>

namespace degen {

struct KernelVerdict {
    std::string name;
    bool passed = true;
    double value = 0.0;
    bool infinite = false;
    /// Grid sup of a tabulated kernel: only a lower bound for the true sup.
    bool lower_bound = false;
    std::string detail;
};

struct KernelReport {
    std::vector<KernelVerdict> verdicts;

    bool all_passed() const;
    const KernelVerdict* find(const std::string& name) const;
};

/// Well-posedness ("wellposed") and decay ("decay_c0" or "decay_c1") verdicts for K.
KernelReport check_kernel_hypotheses(const KernelSpec& K, const WeightParams& params,
                                     const DegenerateCoefficient& coef, const SpatialGrid& grid,
                                     const TimeGrid& tgrid);

struct FixedPointRecord {
    int iteration = 0;
    /// ‖e^{-sΦ̃} ȳ_k‖ in the natural space-time norm.
    double weighted_norm = 0.0;
    /// ‖e^{-sΦ̃}(ȳ_k − ȳ_{k-1})‖; NaN on the first iteration.
    double change = std::numeric_limits<double>::quiet_NaN();
    double relative_change = std::numeric_limits<double>::quiet_NaN();
    /// change_k / change_{k-1}; NaN until two changes exist.
    double contraction = std::numeric_limits<double>::quiet_NaN();
    double control_norm = 0.0;
    /// ‖y(T)‖/‖y0‖ of the local re-solve with the frozen source.
    double final_ratio = 0.0;
    int cg_iterations = 0;
    double cg_residual = 0.0;
};

struct FixedPointTrace {
    std::vector<FixedPointRecord> records;
    bool converged = false;
    /// Radius of the monitored E_{s,M} ball.
    double M_bound = 0.0;
    bool inside_ball = true;

    int iterations() const { return static_cast<int>(records.size()); }
};

struct FixedPointOptions {
    double fp_tol = 1e-6;
    int max_fp = 30;
    /// M_bound = ball_factor × the first iterate's weighted norm.
    double ball_factor = 4.0;
    HumOptions hum;
};

struct NonlocalResult {
    /// u, y and final_ratio come from the forward solve of the full nonlocal system.
    ControlResult control;
    FixedPointTrace trace;
    KernelReport kernel;
    bool hypotheses_passed = true;

    /// Two-phase only.
    double t0 = std::numeric_limits<double>::quiet_NaN();
    double gradient_norm_y0 = std::numeric_limits<double>::quiet_NaN();
    double gradient_norm_t0 = std::numeric_limits<double>::quiet_NaN();
    /// Shortcut only: the null control of the local problem.
    Field v_local;
};

NonlocalResult fixed_point_control(const Profile& y0, const ControlProblem& problem,
                                   const FixedPointOptions& opts = {});

struct TwoPhaseOptions {
    /// t0 = start + t0_fraction·(T − start), snapped to the time grid.
    double t0_fraction = 0.25;
    FixedPointOptions fp;
};

NonlocalResult two_phase_control(const Profile& y0, const ControlProblem& problem, const TwoPhaseOptions& opts = {});

/// Largest |K(t_k, x_i, τ_j)| over grid points with x_i or τ_j outside ω.
double kernel_leak_outside(const KernelSpec& K, const ControlRegion& region, const SpatialGrid& grid,
                           const TimeGrid& tgrid);

/// Throws std::invalid_argument when K is not supported in ω×ω (leak above support_tol relative to max |K|).
NonlocalResult supported_kernel_shortcut(const Profile& y0, const ControlProblem& problem,
                                         const HumOptions& opts = {}, double support_tol = 1e-14);

}  // namespace degen
