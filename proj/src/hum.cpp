#include "degen/hum.hpp"

#include <Eigen/SparseLU>

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace degen {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

bool present(const Field& f)
{
    return f.size() != 0;
}

double dot(const Field& a, const Field& b)
{
    return a.cwiseProduct(b).sum();
}

// Running log Σ exp(l_j) without overflow.
struct LogSum {
    double max = -kInf;
    double acc = 0.0;

    void add(double l)
    {
        if (l == -kInf) return;
        if (l == kInf) {
            max = kInf;
            return;
        }
        if (max == kInf) return;
        if (l <= max) {
            acc += std::exp(l - max);
        } else {
            acc = acc * std::exp(max - l) + 1.0;
            max = l;
        }
    }
    double value() const
    {
        if (max == -kInf || max == kInf) return max;
        return max + std::log(acc);
    }
};

}  // namespace

HumSystem make_hum_system(const WeightSet& weights, const DegenerateCoefficient& coef, const ControlRegion& region)
{
    HumSystem sys;
    sys.form = coef.form;
    sys.grid = weights.grid;
    sys.tgrid = weights.tgrid;
    sys.weights = weights;
    sys.op = assemble_operator(coef, sys.grid, coef.form);
    sys.mask = region.mask(sys.grid).cwiseProduct(sys.op.active);
    sys.time_weights = sys.tgrid.trapezoid_weights();

    const int M = sys.tgrid.levels(), N = sys.grid.size();
    const double s = weights.params.s;
    sys.E_mid = weights.log_e2sPhi_tilde_mid.array().exp().matrix();
    sys.log_W.resize(M, N);
    sys.W = Field::Zero(M, N);
    for (int k = 0; k < M; ++k) {
        const double nu = weights.nu[k];
        for (int i = 0; i < N; ++i) {
            if (!std::isfinite(nu)) {
                sys.log_W(k, i) = -kInf;
                continue;
            }
            sys.log_W(k, i) = 3.0 * std::log(s * nu) + 2.0 * s * nu * weights.Psi[i];
            sys.W(k, i) = sys.mask[i] * std::exp(clamp_log(sys.log_W(k, i)));
        }
    }
    return sys;
}

HumSystem make_hum_system(const ControlProblem& problem)
{
    const WeightSet w = assemble_weights(problem.params, problem.coef, problem.region, problem.grid, problem.tgrid);
    return make_hum_system(w, problem.coef, problem.region);
}

Field apply_lstar(const Field& v, const HumSystem& sys)
{
    const int m = sys.tgrid.m, N = sys.grid.size();
    const double dt = sys.tgrid.dt();
    Field z(m, N);
    for (int n = 0; n < m; ++n) {
        const Profile a = v.row(n).transpose(), b = v.row(n + 1).transpose();
        const Profile Lz = -((b - a) / dt + 0.5 * sys.op.A.apply(b + a));
        z.row(n) = Lz.cwiseProduct(sys.op.active).transpose();
    }
    return z;
}

Field apply_kappa(const Field& v, const HumSystem& sys)
{
    const int m = sys.tgrid.m, M = sys.tgrid.levels(), N = sys.grid.size();
    const double dt = sys.tgrid.dt();
    const Field z = apply_lstar(v, sys);
    Field out = Field::Zero(M, N);
    for (int n = 0; n < m; ++n) {
        const Profile q = (dt * sys.op.mass.cwiseProduct(sys.E_mid.row(n).transpose())).cwiseProduct(z.row(n).transpose());
        const Profile Atq = 0.5 * sys.op.A.apply_transpose(q);
        out.row(n + 1) -= (q / dt + Atq).transpose();
        out.row(n) += (q / dt - Atq).transpose();
    }
    for (int k = 0; k < M; ++k) {
        out.row(k) += (sys.time_weights[k] * sys.op.mass.cwiseProduct(sys.W.row(k).transpose()))
                          .cwiseProduct(v.row(k).transpose())
                          .transpose();
        out.row(k) = out.row(k).cwiseProduct(sys.op.active.transpose());
    }
    return out;
}

Field kappa_diagonal(const HumSystem& sys)
{
    const int m = sys.tgrid.m, M = sys.tgrid.levels(), N = sys.grid.size();
    const double dt = sys.tgrid.dt();
    const auto& A = sys.op.A;
    Field diag = Field::Zero(M, N);
    for (int n = 0; n < m; ++n) {
        for (int p = sys.op.first; p <= sys.op.last; ++p) {
            auto D = [&](int i) { return dt * sys.op.mass[i] * sys.E_mid(n, i); };
            double side = 0.0;
            if (p > 0) side += D(p - 1) * std::pow(0.5 * A.upper[p - 1], 2);
            if (p + 1 < N) side += D(p + 1) * std::pow(0.5 * A.lower[p + 1], 2);
            const double cb = 1.0 / dt + 0.5 * A.diag[p];
            const double ca = 1.0 / dt - 0.5 * A.diag[p];
            diag(n + 1, p) += D(p) * cb * cb + side;
            diag(n, p) += D(p) * ca * ca + side;
        }
    }
    for (int k = 0; k < M; ++k)
        for (int p = sys.op.first; p <= sys.op.last; ++p)
            diag(k, p) += sys.time_weights[k] * sys.op.mass[p] * sys.W(k, p);
    return diag;
}

Eigen::SparseMatrix<double> assemble_kappa(const HumSystem& sys)
{
    const int m = sys.tgrid.m, M = sys.tgrid.levels();
    const int first = sys.op.first, last = sys.op.last, Na = last - first + 1;
    const double dt = sys.tgrid.dt();
    const auto& A = sys.op.A;
    auto idx = [&](int k, int i) { return k * Na + (i - first); };

    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(static_cast<std::size_t>(m) * Na * 36 + static_cast<std::size_t>(M) * Na);
    std::vector<std::pair<int, double>> row;
    for (int n = 0; n < m; ++n) {
        for (int r = first; r <= last; ++r) {
            const double D = dt * sys.op.mass[r] * sys.E_mid(n, r);
            row.clear();
            for (int c = std::max(first, r - 1); c <= std::min(last, r + 1); ++c) {
                const double a_rc = c == r ? A.diag[r] : (c < r ? A.lower[r] : A.upper[r]);
                const double delta = c == r ? 1.0 / dt : 0.0;
                row.emplace_back(idx(n + 1, c), -(delta + 0.5 * a_rc));
                row.emplace_back(idx(n, c), delta - 0.5 * a_rc);
            }
            for (const auto& [i1, c1] : row)
                for (const auto& [i2, c2] : row) trip.emplace_back(i1, i2, D * c1 * c2);
        }
    }
    for (int k = 0; k < M; ++k)
        for (int p = first; p <= last; ++p)
            trip.emplace_back(idx(k, p), idx(k, p), sys.time_weights[k] * sys.op.mass[p] * sys.W(k, p));
    Eigen::SparseMatrix<double> K(M * Na, M * Na);
    K.setFromTriplets(trip.begin(), trip.end());
    return K;
}

double kappa_form(const Field& v, const Field& w, const HumSystem& sys)
{
    return dot(apply_kappa(v, sys), w);
}

Field assemble_ell(const Field& f, const Profile& y0, const HumSystem& sys)
{
    const int M = sys.tgrid.levels(), N = sys.grid.size();
    Field b = Field::Zero(M, N);
    if (present(f)) {
        for (int k = 0; k < M; ++k)
            b.row(k) = (sys.time_weights[k] * sys.op.mass.cwiseProduct(f.row(k).transpose())).transpose();
    }
    b.row(0) += sys.op.mass.cwiseProduct(y0).transpose();
    for (int k = 0; k < M; ++k) b.row(k) = b.row(k).cwiseProduct(sys.op.active.transpose());
    return b;
}

namespace {

Eigen::VectorXd flatten(const Field& F, const DiscreteOperator& op)
{
    const int Na = op.last - op.first + 1;
    Eigen::VectorXd x(F.rows() * Na);
    for (int k = 0; k < F.rows(); ++k) x.segment(k * Na, Na) = F.row(k).segment(op.first, Na).transpose();
    return x;
}

Field unflatten(const Eigen::VectorXd& x, int rows, int cols, const DiscreteOperator& op)
{
    const int Na = op.last - op.first + 1;
    Field F = Field::Zero(rows, cols);
    for (int k = 0; k < rows; ++k) F.row(k).segment(op.first, Na) = x.segment(k * Na, Na).transpose();
    return F;
}

// Solves κ v = b through the unsquared least-squares system
//   [ I      B S      ] [r]   [  0  ]
//   [ S Bᵀ  −S D_W S  ] [w] = [ −S b ],   v = S w,
// where B stacks the weighted L* rows and S is the Jacobi scaling of κ.
// Returns false when the factorization fails.
bool augmented_solve(const HumSystem& sys, const Field& rhs, Field& v)
{
    const int m = sys.tgrid.m, M = sys.tgrid.levels();
    const int first = sys.op.first, last = sys.op.last, Na = last - first + 1;
    const double dt = sys.tgrid.dt();
    const auto& A = sys.op.A;
    const int nr = m * Na, nv = M * Na;

    const Eigen::VectorXd scale = flatten(kappa_diagonal(sys), sys.op).cwiseSqrt().cwiseInverse();
    if (!scale.allFinite()) return false;
    auto col = [&](int k, int i) { return k * Na + (i - first); };

    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(static_cast<std::size_t>(nr) * 13 + nv);
    for (int n = 0; n < m; ++n) {
        for (int r = first; r <= last; ++r) {
            const int row = n * Na + (r - first);
            const double D = std::sqrt(dt * sys.op.mass[r] * sys.E_mid(n, r));
            trip.emplace_back(row, row, 1.0);
            for (int c = std::max(first, r - 1); c <= std::min(last, r + 1); ++c) {
                const double a_rc = c == r ? A.diag[r] : (c < r ? A.lower[r] : A.upper[r]);
                const double delta = c == r ? 1.0 / dt : 0.0;
                const int jn = col(n + 1, c), jo = col(n, c);
                const double pn = -D * (delta + 0.5 * a_rc) * scale[jn];
                const double po = D * (delta - 0.5 * a_rc) * scale[jo];
                trip.emplace_back(row, nr + jn, pn);
                trip.emplace_back(nr + jn, row, pn);
                trip.emplace_back(row, nr + jo, po);
                trip.emplace_back(nr + jo, row, po);
            }
        }
    }
    for (int k = 0; k < M; ++k)
        for (int p = first; p <= last; ++p) {
            const int j = col(k, p);
            const double w = sys.time_weights[k] * sys.op.mass[p] * sys.W(k, p);
            if (w > 0.0) trip.emplace_back(nr + j, nr + j, -w * scale[j] * scale[j]);
        }
    Eigen::SparseMatrix<double> K(nr + nv, nr + nv);
    K.setFromTriplets(trip.begin(), trip.end());
    K.makeCompressed();

    Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
    lu.analyzePattern(K);
    lu.factorize(K);
    if (lu.info() != Eigen::Success) return false;
    Eigen::VectorXd b = Eigen::VectorXd::Zero(nr + nv);
    b.tail(nv) = -scale.cwiseProduct(flatten(rhs, sys.op));
    const Eigen::VectorXd sol = lu.solve(b);
    if (lu.info() != Eigen::Success || !sol.allFinite()) return false;
    v = unflatten(scale.cwiseProduct(sol.tail(nv)), M, sys.grid.size(), sys.op);
    return v.allFinite();
}

}  // namespace

DualSolution solve_dual(const Field& f, const Profile& y0, const HumSystem& sys, const CgOptions& opts)
{
    const int M = sys.tgrid.levels(), N = sys.grid.size();
    DualSolution out;
    out.v = Field::Zero(M, N);
    const Field b = assemble_ell(f, y0, sys);
    const double bnorm = b.norm();
    if (bnorm == 0.0) return out;

    Field inv_diag = Field::Zero(M, N);
    if (opts.preconditioner == Preconditioner::None) {
        for (int k = 0; k < M; ++k) inv_diag.row(k) = sys.op.active.transpose();
    } else {
        const Field d = kappa_diagonal(sys);
        for (int k = 0; k < M; ++k)
            for (int i = 0; i < N; ++i) inv_diag(k, i) = d(k, i) > 0.0 ? 1.0 / d(k, i) : 0.0;
    }

    Field v = Field::Zero(M, N);
    Field r = b;
    int it = 0;
    if (opts.preconditioner == Preconditioner::Factorized) {
        Field direct;
        if (augmented_solve(sys, b, direct)) {
            const Field r_direct = b - apply_kappa(direct, sys);
            if (r_direct.allFinite()) {
                v = direct;
                r = r_direct;
                it = 1;
            }
        }
    }
    out.iterations = it;
    out.residual = r.norm() / bnorm;
    out.v = v;
    if (opts.record_history) {
        out.residual_history.push_back(out.residual);
        out.iterates.push_back(v);
    }
    out.converged = out.residual <= opts.tol;

    Field z = inv_diag.cwiseProduct(r);
    Field p = z;
    double rz = dot(r, z);
    int best_it = it;
    while (!out.converged && it < opts.max_iter && it - best_it < opts.stall_iterations) {
        const Field Kp = apply_kappa(p, sys);
        const double pKp = dot(p, Kp);
        if (!(pKp > 0.0)) break;
        const double alpha = rz / pKp;
        v += alpha * p;
        r -= alpha * Kp;
        ++it;
        const double res = r.norm() / bnorm;
        if (!std::isfinite(res)) break;
        if (opts.record_history) {
            out.residual_history.push_back(res);
            out.iterates.push_back(v);
        }
        if (res < out.residual) {
            out.residual = res;
            out.v = v;
            out.iterations = it;
            best_it = it;
            out.converged = res <= opts.tol;
        }
        z = inv_diag.cwiseProduct(r);
        const double rz_new = dot(r, z);
        p = z + (rz_new / rz) * p;
        rz = rz_new;
    }
    return out;
}

ExtractedControl extract_control(const Field& vbar, const Profile& y0, const HumSystem& sys)
{
    const int m = sys.tgrid.m, M = sys.tgrid.levels(), N = sys.grid.size();
    ExtractedControl out;
    out.u = -sys.W.cwiseProduct(vbar);
    out.y_mid = sys.E_mid.cwiseProduct(apply_lstar(vbar, sys));
    out.y_pred = Field::Zero(M, N);
    out.y_pred.row(0) = y0.cwiseProduct(sys.op.active).transpose();
    for (int k = 1; k < m; ++k) out.y_pred.row(k) = 0.5 * (out.y_mid.row(k - 1) + out.y_mid.row(k));
    return out;
}

double evaluate_J(const Field& y, const Field& u, const HumSystem& sys, TimeLayout layout)
{
    const int M = sys.tgrid.levels(), N = sys.grid.size();
    const double dt = sys.tgrid.dt(), s = sys.weights.params.s;
    double J = 0.0;
    if (present(y)) {
        if (layout == TimeLayout::Midpoints) {
            for (int n = 0; n < sys.tgrid.m; ++n)
                for (int i = 0; i < N; ++i) {
                    if (y(n, i) == 0.0) continue;
                    const double lw = sys.weights.log_e2sPhi_tilde_mid(n, i);
                    J += dt * sys.op.mass[i] * y(n, i) * y(n, i) * std::exp(clamp_log(-lw));
                }
        } else {
            for (int k = 0; k < M; ++k)
                for (int i = 0; i < N; ++i) {
                    if (y(k, i) == 0.0) continue;
                    const double lw = 2.0 * s * sys.weights.nu[k] * sys.weights.Psi[i];
                    J += sys.time_weights[k] * sys.op.mass[i] * y(k, i) * y(k, i) * std::exp(clamp_log(-lw));
                }
        }
    }
    if (present(u)) {
        for (int k = 0; k < M; ++k)
            for (int i = 0; i < N; ++i) {
                if (u(k, i) == 0.0 || sys.mask[i] == 0.0) continue;
                J += sys.time_weights[k] * sys.op.mass[i] * u(k, i) * u(k, i) * std::exp(clamp_log(-sys.log_W(k, i)));
            }
    }
    return J;
}

namespace {

struct EstimateWeights {
    Eigen::VectorXd eta;
    double hat0 = 0.0;
    double check_star = 0.0;
};

EstimateWeights estimate_weights(const HumSystem& sys)
{
    const WeightSet& w = sys.weights;
    const WeightParams& p = w.params;
    EstimateWeights e;
    e.eta = w.eta();
    const double nu0 = w.nu_at(p.start);
    e.hat0 = nu0 * e.eta.maxCoeff();
    const double t_check = p.branch == Branch::NonDiv ? p.Tstar : p.start + 5.0 * p.horizon() / 8.0;
    e.check_star = w.nu_at(t_check) * e.eta.minCoeff();
    return e;
}

}  // namespace

double log_weighted_source_norm(const Field& f, const HumSystem& sys)
{
    if (!present(f)) return -kInf;
    const EstimateWeights e = estimate_weights(sys);
    const double s = sys.weights.params.s;
    LogSum acc;
    for (int k = 0; k < sys.tgrid.levels(); ++k) {
        const double nu = sys.weights.nu[k];
        for (int i = 0; i < sys.grid.size(); ++i) {
            const double fi = f(k, i);
            if (fi == 0.0 || sys.op.mass[i] == 0.0 || sys.time_weights[k] == 0.0) continue;
            const double expo = std::isfinite(nu) ? -2.0 * s * nu * e.eta[i] : kInf;
            acc.add(std::log(sys.time_weights[k] * sys.op.mass[i] * fi * fi) + expo);
        }
    }
    return acc.value();
}

double log_estimate_rhs(const Field& f, const Profile& y0, const HumSystem& sys)
{
    const EstimateWeights e = estimate_weights(sys);
    const double s = sys.weights.params.s;
    LogSum acc;
    acc.add(log_weighted_source_norm(f, sys));
    for (int i = 0; i < sys.grid.size(); ++i) {
        if (y0[i] == 0.0 || sys.op.mass[i] == 0.0) continue;
        acc.add(std::log(sys.op.mass[i] * y0[i] * y0[i]) - 2.0 * s * e.hat0);
    }
    const double inner = acc.value();
    if (inner == -kInf) return -kInf;
    return 2.0 * s * (e.hat0 - e.check_star) + inner;
}

double final_ratio(const Field& y, const Profile& y0, const DiscreteOperator& op, double* reference)
{
    double ref = std::sqrt(mass_norm_sq(y0, op));
    if (ref == 0.0) {
        for (int k = 0; k < y.rows(); ++k) ref = std::max(ref, std::sqrt(mass_norm_sq(y.row(k).transpose(), op)));
    }
    if (reference) *reference = ref;
    if (ref == 0.0) return 0.0;
    return std::sqrt(mass_norm_sq(y.row(y.rows() - 1).transpose(), op)) / ref;
}

double relative_distance(const Field& a, const Field& b, const DiscreteOperator& op, const TimeGrid& tgrid)
{
    const double den = space_time_norm_sq(b, op, tgrid);
    const double num = space_time_norm_sq(a - b, op, tgrid);
    if (den == 0.0) return num == 0.0 ? 0.0 : kInf;
    return std::sqrt(num / den);
}

ControlResult null_control_nonhom(const Profile& y0, const Field& f, const HumSystem& sys, const HumOptions& opts)
{
    const int M = sys.tgrid.levels(), N = sys.grid.size();
    if (y0.size() != N) throw std::invalid_argument("initial profile does not match the grid");
    if (present(f) && (f.rows() != M || f.cols() != N)) throw std::invalid_argument("source field has the wrong shape");
    const double scale = std::max(y0.cwiseAbs().maxCoeff(), 1e-300);
    for (int i = 0; i < N; ++i)
        if (sys.op.active[i] == 0.0 && std::abs(y0[i]) > 1e-12 * scale)
            throw std::invalid_argument("initial profile violates the boundary condition at node " + std::to_string(i));

    ControlResult res;
    res.log_weighted_source = log_weighted_source_norm(f, sys);
    if (res.log_weighted_source > opts.max_log_weighted_source) {
        std::ostringstream os;
        os << "source is not in the weighted space: log ||f exp(-s phi_tilde)||^2 = " << res.log_weighted_source
           << " exceeds " << opts.max_log_weighted_source;
        throw std::invalid_argument(os.str());
    }

    DualSolution dual = solve_dual(f, y0, sys, opts.cg);
    res.v = std::move(dual.v);
    res.cg_iterations = dual.iterations;
    res.cg_residual = dual.residual;
    res.cg_converged = dual.converged;

    ExtractedControl ext = extract_control(res.v, y0, sys);
    res.u = std::move(ext.u);
    res.y_mid = std::move(ext.y_mid);
    res.y_pred = std::move(ext.y_pred);

    SolverOptions so;
    so.stepper = opts.verify_stepper;
    res.y = solve_forward(y0, f, res.u, KernelSpec::zero(), sys.op, sys.grid, sys.tgrid, sys.mask, so);
    res.final_ratio = final_ratio(res.y, y0, sys.op, &res.reference_norm);
    if (opts.cross_check) {
        so.stepper = opts.verify_stepper == Stepper::ImplicitEuler ? Stepper::CrankNicolson : Stepper::ImplicitEuler;
        const Field y_alt = solve_forward(y0, f, res.u, KernelSpec::zero(), sys.op, sys.grid, sys.tgrid, sys.mask, so);
        res.cross_check_ratio = final_ratio(y_alt, y0, sys.op);
    }
    res.J = evaluate_J(res.y_mid, res.u, sys, TimeLayout::Midpoints);
    res.estimate_lhs = res.J;
    res.log_estimate_rhs = log_estimate_rhs(f, y0, sys);
    res.discrepancy = relative_distance(res.y_pred, res.y, sys.op, sys.tgrid);
    return res;
}

ControlResult null_control_nonhom(const Profile& y0, const Field& f, const ControlProblem& problem,
                                  const HumOptions& opts)
{
    return null_control_nonhom(y0, f, make_hum_system(problem), opts);
}

}  // namespace degen
