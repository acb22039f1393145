#include "degen/pde.hpp"

#include <cmath>
#include <stdexcept>

namespace degen {

std::string to_string(Stepper stepper)
{
    return stepper == Stepper::ImplicitEuler ? "euler" : "cn";
}

Stepper stepper_from_string(const std::string& name)
{
    if (name == "euler") return Stepper::ImplicitEuler;
    if (name == "cn") return Stepper::CrankNicolson;
    throw std::invalid_argument("unknown stepper '" + name + "' (expected euler or cn)");
}

DiscreteOperator assemble_operator(const DegenerateCoefficient& coef, const SpatialGrid& grid, Form form)
{
    if (form != coef.form) throw std::invalid_argument("coefficient form does not match the requested operator");
    const int n = grid.n, N = grid.size();
    DiscreteOperator op;
    op.form = form;
    op.A = Tridiagonal<double>(N);
    op.first = form == Form::DivergenceSD ? 0 : 1;
    op.last = n - 1;
    const Eigen::VectorXd w = grid.trapezoid_weights();
    op.mass = Eigen::VectorXd::Zero(N);
    op.active = Eigen::VectorXd::Zero(N);

    for (int i = op.first; i <= op.last; ++i) {
        op.active[i] = 1.0;
        if (form == Form::NonDivergence) {
            const double ai = coef(grid.x[i]);
            const double hl = grid.h[i - 1], hr = grid.h[i];
            const double scale = 2.0 * ai / (hl + hr);
            op.A.lower[i] = scale / hl;
            op.A.upper[i] = scale / hr;
            op.A.diag[i] = -(op.A.lower[i] + op.A.upper[i]);
            op.mass[i] = w[i] / ai;
        } else {
            const double hr = grid.h[i];
            const double fr = coef(grid.x[i] + 0.5 * hr) / hr;
            double fl = 0.0;
            if (i > 0) fl = coef(grid.x[i] - 0.5 * grid.h[i - 1]) / grid.h[i - 1];
            op.A.lower[i] = fl / w[i];
            op.A.upper[i] = fr / w[i];
            op.A.diag[i] = -(fl + fr) / w[i];
            op.mass[i] = w[i];
        }
        if (!std::isfinite(op.A.diag[i]) || !std::isfinite(op.mass[i]))
            throw std::domain_error("non-finite operator entry at node " + std::to_string(i));
    }
    return op;
}

namespace {

bool has_rows(const Field& f, int rows)
{
    if (f.size() == 0) return false;
    if (f.rows() != rows) throw std::invalid_argument("field has the wrong number of time levels");
    return true;
}

// Source h^k = f^k + 1_ω u^k restricted to unknown nodes.
Profile source_at(int k, const Field& f, const Field& u, bool hf, bool hu, const Eigen::VectorXd& mask,
                  const DiscreteOperator& op)
{
    Profile h = Profile::Zero(op.size());
    if (hf) h += f.row(k).transpose();
    if (hu) h += mask.cwiseProduct(u.row(k).transpose());
    return h.cwiseProduct(op.active);
}

}  // namespace

Field solve_forward(const Profile& y0, const Field& f, const Field& u, const KernelSpec& K,
                    const DiscreteOperator& op, const SpatialGrid& grid, const TimeGrid& tgrid,
                    const Eigen::VectorXd& control_mask, const SolverOptions& opts)
{
    const int N = op.size(), M = tgrid.levels();
    if (y0.size() != N) throw std::invalid_argument("initial profile does not match the grid");
    const bool hf = has_rows(f, M), hu = has_rows(u, M);
    const bool kernel = !K.is_zero();
    const double dt = tgrid.dt();
    Field y(M, N);
    y.row(0) = y0.cwiseProduct(op.active).transpose();
    if (!y.row(0).allFinite()) throw std::domain_error("non-finite initial profile");

    auto nonlocal = [&](int k, const Profile& state) {
        return kernel ? Profile(apply_nonlocal(K, state, tgrid.time(k), grid).cwiseProduct(op.active))
                      : Profile(Profile::Zero(N));
    };

    if (opts.stepper == Stepper::ImplicitEuler) {
        const ShiftedSolver<double> solver(op.A, -dt);
        for (int k = 0; k < tgrid.m; ++k) {
            const Profile yk = y.row(k).transpose();
            Profile rhs = yk + dt * (source_at(k + 1, f, u, hf, hu, control_mask, op) - nonlocal(k, yk));
            y.row(k + 1) = solver.solve(rhs.cwiseProduct(op.active)).transpose();
        }
    } else {
        const ShiftedSolver<double> solver(op.A, -0.5 * dt);
        Profile g = source_at(0, f, u, hf, hu, control_mask, op) - nonlocal(0, y.row(0).transpose());
        for (int k = 0; k < tgrid.m; ++k) {
            const Profile z = solver.solve((y.row(k).transpose() + 0.5 * dt * g).cwiseProduct(op.active));
            const Profile base = z + 0.5 * dt * op.A.apply(z);
            const Profile h1 = source_at(k + 1, f, u, hf, hu, control_mask, op);
            Profile next = base + 0.5 * dt * (h1 - nonlocal(k, y.row(k).transpose()));
            if (kernel) {
                for (int sweep = 0; sweep < opts.kernel_sweeps; ++sweep) {
                    const Profile updated = base + 0.5 * dt * (h1 - nonlocal(k + 1, next));
                    const double change = (updated - next).norm();
                    next = updated;
                    if (change <= opts.kernel_tol * std::max(next.norm(), 1e-300)) break;
                }
            }
            g = h1 - nonlocal(k + 1, next);
            y.row(k + 1) = next.cwiseProduct(op.active).transpose();
        }
    }
    if (!y.allFinite()) throw std::domain_error("forward solve produced non-finite values");
    return y;
}

Field solve_adjoint(const Profile& vT, const Field& g, const KernelSpec& K, const DiscreteOperator& op,
                    const SpatialGrid& grid, const TimeGrid& tgrid, const SolverOptions& opts)
{
    const int N = op.size(), M = tgrid.levels();
    if (vT.size() != N) throw std::invalid_argument("terminal profile does not match the grid");
    const bool hg = has_rows(g, M);
    const bool kernel = !K.is_zero();
    const double dt = tgrid.dt();
    Field v(M, N);
    v.row(tgrid.m) = vT.cwiseProduct(op.active).transpose();

    auto source = [&](int k) {
        return hg ? Profile(g.row(k).transpose().cwiseProduct(op.active)) : Profile(Profile::Zero(N));
    };
    auto nonlocal = [&](int k, const Profile& state) {
        return kernel ? Profile(apply_nonlocal(K, state, tgrid.time(k), grid, true).cwiseProduct(op.active))
                      : Profile(Profile::Zero(N));
    };

    if (opts.stepper == Stepper::ImplicitEuler) {
        const ShiftedSolver<double> solver(op.A, -dt);
        for (int k = tgrid.m - 1; k >= 0; --k) {
            const Profile vk1 = v.row(k + 1).transpose();
            const Profile rhs = vk1 + dt * (source(k) - nonlocal(k + 1, vk1));
            v.row(k) = solver.solve(rhs.cwiseProduct(op.active)).transpose();
        }
    } else {
        const ShiftedSolver<double> solver(op.A, -0.5 * dt);
        Profile G = source(tgrid.m) - nonlocal(tgrid.m, v.row(tgrid.m).transpose());
        for (int k = tgrid.m - 1; k >= 0; --k) {
            const Profile z = solver.solve((v.row(k + 1).transpose() + 0.5 * dt * G).cwiseProduct(op.active));
            const Profile base = z + 0.5 * dt * op.A.apply(z);
            const Profile gk = source(k);
            Profile next = base + 0.5 * dt * (gk - nonlocal(k + 1, v.row(k + 1).transpose()));
            if (kernel) {
                for (int sweep = 0; sweep < opts.kernel_sweeps; ++sweep) {
                    const Profile updated = base + 0.5 * dt * (gk - nonlocal(k, next));
                    const double change = (updated - next).norm();
                    next = updated;
                    if (change <= opts.kernel_tol * std::max(next.norm(), 1e-300)) break;
                }
            }
            G = gk - nonlocal(k, next);
            v.row(k) = next.cwiseProduct(op.active).transpose();
        }
    }
    if (!v.allFinite()) throw std::domain_error("adjoint solve produced non-finite values");
    return v;
}

double mass_norm_sq(const Profile& y, const DiscreteOperator& op)
{
    return y.cwiseAbs2().dot(op.mass);
}

double gradient_norm_sq(const Profile& y, const SpatialGrid& grid)
{
    double acc = 0.0;
    for (int i = 0; i < grid.n; ++i) {
        const double d = y[i + 1] - y[i];
        acc += d * d / grid.h[i];
    }
    return acc;
}

double space_time_norm_sq(const Field& y, const DiscreteOperator& op, const TimeGrid& tgrid)
{
    const Eigen::VectorXd tw = tgrid.trapezoid_weights();
    double acc = 0.0;
    for (int k = 0; k < y.rows(); ++k) acc += tw[k] * mass_norm_sq(y.row(k).transpose(), op);
    return acc;
}

GalerkinBasis galerkin_eigenbasis(const DegenerateCoefficient& coef, const SpatialGrid& grid, int m)
{
    if (coef.form != Form::NonDivergence) throw std::invalid_argument("Galerkin basis is built for the non-divergence form");
    const int n = grid.n, I = n - 1;
    if (m < 1 || m > I) throw std::invalid_argument("mode count must lie in [1, n-1]");
    const Eigen::VectorXd w = grid.trapezoid_weights();
    Eigen::MatrixXd S = Eigen::MatrixXd::Zero(I, I);
    Eigen::MatrixXd Mm = Eigen::MatrixXd::Zero(I, I);
    for (int r = 0; r < I; ++r) {
        const int i = r + 1;
        S(r, r) = 1.0 / grid.h[i - 1] + 1.0 / grid.h[i];
        if (r > 0) S(r, r - 1) = -1.0 / grid.h[i - 1];
        if (r + 1 < I) S(r, r + 1) = -1.0 / grid.h[i];
        Mm(r, r) = w[i] / coef(grid.x[i]);
    }
    Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> solver(S, Mm);
    if (solver.info() != Eigen::Success) throw std::runtime_error("generalized eigen-solver did not converge");

    GalerkinBasis basis;
    basis.eigenvalues = solver.eigenvalues().head(m);
    basis.modes = Eigen::MatrixXd::Zero(n + 1, m);
    basis.modes.block(1, 0, I, m) = solver.eigenvectors().leftCols(m);
    for (int k = 0; k < m; ++k) {
        int idx;
        basis.modes.col(k).cwiseAbs().maxCoeff(&idx);
        if (basis.modes(idx, k) < 0.0) basis.modes.col(k) *= -1.0;
    }
    basis.mass = Eigen::VectorXd::Zero(n + 1);
    for (int i = 1; i < n; ++i) basis.mass[i] = Mm(i - 1, i - 1);
    return basis;
}

Field solve_galerkin(const Profile& y0, const Field& f, const Field& u, const KernelSpec& K,
                     const GalerkinBasis& basis, const SpatialGrid& grid, const TimeGrid& tgrid,
                     const Eigen::VectorXd& control_mask)
{
    const int N = grid.size(), M = tgrid.levels();
    const bool hf = has_rows(f, M), hu = has_rows(u, M);
    const bool kernel = !K.is_zero();
    const double dt = tgrid.dt();
    const Eigen::MatrixXd proj = basis.modes.transpose() * basis.mass.asDiagonal();

    Eigen::VectorXd alpha = proj * y0;
    Field y(M, N);
    y.row(0) = (basis.modes * alpha).transpose();
    const Eigen::ArrayXd denom = 1.0 + dt * basis.eigenvalues.array();
    for (int k = 0; k < tgrid.m; ++k) {
        Profile h = Profile::Zero(N);
        if (hf) h += f.row(k + 1).transpose();
        if (hu) h += control_mask.cwiseProduct(u.row(k + 1).transpose());
        if (kernel) h -= apply_nonlocal(K, y.row(k).transpose(), tgrid.time(k), grid);
        alpha = ((alpha + dt * proj * h).array() / denom).matrix();
        y.row(k + 1) = (basis.modes * alpha).transpose();
    }
    return y;
}

}  // namespace degen
