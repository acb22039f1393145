#pragma once

#include "degen/linalg.hpp"
#include "degen/model.hpp"

namespace degen {

enum class Stepper { ImplicitEuler, CrankNicolson };

std::string to_string(Stepper stepper);
Stepper stepper_from_string(const std::string& name);

struct DiscreteOperator {
    Form form = Form::NonDivergence;
    /// Rows of pinned (Dirichlet) nodes are zero.
    Tridiagonal<double> A;
    int first = 1;
    int last = 0;
    /// Diagonal mass making A self-adjoint: w_i/a_i (non-div) or w_i (div); zero at pinned nodes.
    Eigen::VectorXd mass;
    /// 1 on unknown nodes, 0 on pinned nodes.
    Eigen::VectorXd active;

    int size() const { return static_cast<int>(A.size()); }
};

DiscreteOperator assemble_operator(const DegenerateCoefficient& coef, const SpatialGrid& grid, Form form);

struct SolverOptions {
    Stepper stepper = Stepper::ImplicitEuler;
    /// Fixed-point sweeps for the implicit nonlocal end-kick of the staggered Crank–Nicolson step.
    int kernel_sweeps = 50;
    double kernel_tol = 1e-15;
};

/// y_t = A y + f + 1_ω u − ∫K y dτ with y(0) = y0. Empty f or u mean zero.
Field solve_forward(const Profile& y0, const Field& f, const Field& u, const KernelSpec& K,
                    const DiscreteOperator& op, const SpatialGrid& grid, const TimeGrid& tgrid,
                    const Eigen::VectorXd& control_mask, const SolverOptions& opts = {});

/// −v_t − A v + ∫K(t,τ,x) v(t,τ) dτ = g with v(T) = vT. Empty g means zero.
Field solve_adjoint(const Profile& vT, const Field& g, const KernelSpec& K, const DiscreteOperator& op,
                    const SpatialGrid& grid, const TimeGrid& tgrid, const SolverOptions& opts = {});

/// ‖y‖² in the operator's mass (the form's natural norm).
double mass_norm_sq(const Profile& y, const DiscreteOperator& op);
/// ∫ y_x² by cellwise differences.
double gradient_norm_sq(const Profile& y, const SpatialGrid& grid);
/// Σ_k τ_k ‖y^k‖² with trapezoid weights in time.
double space_time_norm_sq(const Field& y, const DiscreteOperator& op, const TimeGrid& tgrid);

struct GalerkinBasis {
    /// Column k is the k-th mode as a full nodal profile.
    Eigen::MatrixXd modes;
    Eigen::VectorXd eigenvalues;
    Eigen::VectorXd mass;
};

GalerkinBasis galerkin_eigenbasis(const DegenerateCoefficient& coef, const SpatialGrid& grid, int m);

Field solve_galerkin(const Profile& y0, const Field& f, const Field& u, const KernelSpec& K,
                     const GalerkinBasis& basis, const SpatialGrid& grid, const TimeGrid& tgrid,
                     const Eigen::VectorXd& control_mask);

}  // namespace degen
