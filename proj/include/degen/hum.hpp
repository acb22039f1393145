#pragma once

#include "degen/pde.hpp"
#include "degen/weights.hpp"

#include <Eigen/Sparse>

#include <limits>
#include <vector>

namespace degen {

/// Everything the controllability solvers need about one problem on one horizon.
struct ControlProblem {
    DegenerateCoefficient coef;
    ControlRegion region;
    SpatialGrid grid;
    TimeGrid tgrid;
    WeightParams params;
    KernelSpec kernel;

    Form form() const { return coef.form; }
    Branch branch() const { return branch_of(coef.form); }
};

/// Precomputed discrete κ: operator, masses and clamped weights.
struct HumSystem {
    Form form = Form::NonDivergence;
    SpatialGrid grid;
    TimeGrid tgrid;
    DiscreteOperator op;
    WeightSet weights;
    Eigen::VectorXd mask;
    Eigen::VectorXd time_weights;
    /// e^{2sΦ̃} on time midpoints.
    Field E_mid;
    /// log(s³ν³e^{2sΦ̃}) on time levels, unclamped; -inf where ν is infinite.
    Field log_W;
    /// s³ν³e^{2sΦ̃} materialized with clamping and masked to ω.
    Field W;
};

HumSystem make_hum_system(const ControlProblem& problem);
HumSystem make_hum_system(const WeightSet& weights, const DegenerateCoefficient& coef, const ControlRegion& region);

/// Discrete L*v = −((v^{n+1} − v^n)/Δt + A(v^{n+1} + v^n)/2) on time midpoints.
Field apply_lstar(const Field& v, const HumSystem& sys);

/// Euclidean representative K v of κ(v, ·) over the unknown nodes of every time level.
Field apply_kappa(const Field& v, const HumSystem& sys);
Field kappa_diagonal(const HumSystem& sys);
/// κ as a sparse matrix over unknowns ordered level-major, unknown nodes ascending.
Eigen::SparseMatrix<double> assemble_kappa(const HumSystem& sys);
double kappa_form(const Field& v, const Field& w, const HumSystem& sys);

/// Euclidean representative of ℓ(·).
Field assemble_ell(const Field& f, const Profile& y0, const HumSystem& sys);

enum class Preconditioner { None, Jacobi, Factorized };

struct CgOptions {
    double tol = 1e-8;
    int max_iter = 5000;
    /// Factorized starts from a direct solve of the unsquared least-squares system, then runs Jacobi PCG.
    Preconditioner preconditioner = Preconditioner::Factorized;
    /// Stop after this many iterations without a new smallest residual.
    int stall_iterations = 200;
    bool record_history = false;
};

/// v is the iterate with the smallest relative residual seen.
struct DualSolution {
    Field v;
    int iterations = 0;
    double residual = 0.0;
    bool converged = true;
    std::vector<double> residual_history;
    /// Iterates, kept only when record_history is set.
    std::vector<Field> iterates;
};

DualSolution solve_dual(const Field& f, const Profile& y0, const HumSystem& sys, const CgOptions& opts = {});

struct ExtractedControl {
    Field u;
    /// ȳ on time midpoints.
    Field y_mid;
    /// ȳ on time levels: y0 at t = start, midpoint averages inside, 0 at t = T.
    Field y_pred;
};

ExtractedControl extract_control(const Field& vbar, const Profile& y0, const HumSystem& sys);

enum class TimeLayout { Levels, Midpoints };

double evaluate_J(const Field& y, const Field& u, const HumSystem& sys, TimeLayout layout);

struct HumOptions {
    CgOptions cg;
    /// Stepper of the independent forward re-solve.
    Stepper verify_stepper = Stepper::CrankNicolson;
    /// Also re-solve with the other stepper and report its final ratio.
    bool cross_check = false;
    /// Reject f when log ‖f e^{-sφ̃}‖² exceeds this.
    double max_log_weighted_source = 300.0;
};

struct ControlResult {
    Field u;
    Field y;
    Field y_pred;
    Field y_mid;
    Field v;
    double final_ratio = 0.0;
    double reference_norm = 0.0;
    /// final ratio of the re-solve with the other stepper; NaN unless requested.
    double cross_check_ratio = std::numeric_limits<double>::quiet_NaN();
    double J = 0.0;
    int cg_iterations = 0;
    double cg_residual = 0.0;
    bool cg_converged = true;
    double estimate_lhs = 0.0;
    double log_estimate_rhs = 0.0;
    double log_weighted_source = 0.0;
    double discrepancy = 0.0;
};

/// log ‖f e^{-sφ̃}‖² in the branch's pairing (φ̃_div on the divergence branch); -inf for f = 0.
double log_weighted_source_norm(const Field& f, const HumSystem& sys);
/// log of the right side of the main estimate with constant 1.
double log_estimate_rhs(const Field& f, const Profile& y0, const HumSystem& sys);

/// ‖y(T)‖ over ‖y0‖, or over max_k ‖y^k‖ when y0 = 0.
double final_ratio(const Field& y, const Profile& y0, const DiscreteOperator& op, double* reference = nullptr);

/// Relative L²(Q) distance between two level fields in the natural norm.
double relative_distance(const Field& a, const Field& b, const DiscreteOperator& op, const TimeGrid& tgrid);

ControlResult null_control_nonhom(const Profile& y0, const Field& f, const HumSystem& sys,
                                  const HumOptions& opts = {});
ControlResult null_control_nonhom(const Profile& y0, const Field& f, const ControlProblem& problem,
                                  const HumOptions& opts = {});

}  // namespace degen
