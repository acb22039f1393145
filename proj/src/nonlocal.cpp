#include "degen/nonlocal.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace degen {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

KernelVerdict verdict_from(const std::string& name, const KernelSup& sup, const std::string& what)
{
    KernelVerdict v;
    v.name = name;
    v.value = sup.value;
    v.infinite = sup.infinite;
    v.lower_bound = sup.lower_bound;
    v.passed = !sup.infinite && std::isfinite(sup.value);
    std::ostringstream os;
    os << what << (v.passed ? " finite" : " infinite");
    if (sup.lower_bound) os << " (grid sup, lower bound only)";
    v.detail = os.str();
    return v;
}

// −∫K(t_k, x, τ) y(t_k, τ) dτ on every time level.
Field nonlocal_source(const KernelSpec& K, const Field& y, const SpatialGrid& grid, const TimeGrid& tgrid)
{
    Field f(y.rows(), y.cols());
    for (int k = 0; k < y.rows(); ++k)
        f.row(k) = -apply_nonlocal(K, y.row(k).transpose(), tgrid.time(k), grid).transpose();
    return f;
}

double weighted_midpoint_norm(const Field& y_mid, const HumSystem& sys)
{
    return std::sqrt(evaluate_J(y_mid, Field(), sys, TimeLayout::Midpoints));
}

double control_norm(const Field& u, const HumSystem& sys)
{
    return std::sqrt(space_time_norm_sq(u, sys.op, sys.tgrid));
}

void verify_nonlocal(ControlResult& res, const Profile& y0, const KernelSpec& K, const HumSystem& sys,
                     const HumOptions& opts)
{
    SolverOptions so;
    so.stepper = opts.verify_stepper;
    res.y = solve_forward(y0, Field(), res.u, K, sys.op, sys.grid, sys.tgrid, sys.mask, so);
    res.final_ratio = final_ratio(res.y, y0, sys.op, &res.reference_norm);
    res.discrepancy = relative_distance(res.y_pred, res.y, sys.op, sys.tgrid);
}

}  // namespace

bool KernelReport::all_passed() const
{
    for (const auto& v : verdicts)
        if (!v.passed) return false;
    return true;
}

const KernelVerdict* KernelReport::find(const std::string& name) const
{
    for (const auto& v : verdicts)
        if (v.name == name) return &v;
    return nullptr;
}

KernelReport check_kernel_hypotheses(const KernelSpec& K, const WeightParams& params,
                                     const DegenerateCoefficient& coef, const SpatialGrid& grid,
                                     const TimeGrid& tgrid)
{
    KernelReport rep;
    const KernelNorm l2 = coef.form == Form::NonDivergence ? KernelNorm::SquaredInvA : KernelNorm::Squared;
    rep.verdicts.push_back(
        verdict_from("wellposed", kernel_weighted_sup(K, coef, grid, tgrid, 0.0, params.s, l2), "sup_t of int int K^2"));
    if (params.branch == Branch::NonDiv) {
        rep.verdicts.push_back(verdict_from("decay_c0",
                                            kernel_weighted_sup(K, coef, grid, tgrid, params.c0, params.s, l2),
                                            "sup_t of exp(c0 s/(T-t)^2) int int K^2/a"));
    } else {
        rep.verdicts.push_back(
            verdict_from("decay_c1", kernel_weighted_sup(K, coef, grid, tgrid, params.c1, params.s, KernelNorm::SupAbs),
                         "sup of exp(c1 s/(T-t)^2) |K|"));
    }
    return rep;
}

NonlocalResult fixed_point_control(const Profile& y0, const ControlProblem& problem, const FixedPointOptions& opts)
{
    NonlocalResult out;
    out.kernel = check_kernel_hypotheses(problem.kernel, problem.params, problem.coef, problem.grid, problem.tgrid);
    out.hypotheses_passed = out.kernel.all_passed();

    const HumSystem sys = make_hum_system(problem);
    const KernelSpec& K = problem.kernel;
    FixedPointTrace& trace = out.trace;

    SolverOptions so;
    so.stepper = opts.hum.verify_stepper;
    Field w = solve_forward(y0, Field(), Field(), K, sys.op, sys.grid, sys.tgrid, sys.mask, so);
    Field f = nonlocal_source(K, w, sys.grid, sys.tgrid);

    // The frozen sources are built here; admissibility is what the kernel verdicts report.
    HumOptions hum = opts.hum;
    hum.max_log_weighted_source = std::numeric_limits<double>::infinity();

    ControlResult res;
    Field y_mid_prev;
    double change_prev = kNaN;
    for (int it = 1; it <= opts.max_fp; ++it) {
        res = null_control_nonhom(y0, f, sys, hum);

        FixedPointRecord rec;
        rec.iteration = it;
        rec.weighted_norm = weighted_midpoint_norm(res.y_mid, sys);
        rec.control_norm = control_norm(res.u, sys);
        rec.final_ratio = res.final_ratio;
        rec.cg_iterations = res.cg_iterations;
        rec.cg_residual = res.cg_residual;
        if (it == 1) trace.M_bound = opts.ball_factor * rec.weighted_norm;
        if (it > 1) {
            rec.change = weighted_midpoint_norm(res.y_mid - y_mid_prev, sys);
            rec.relative_change = rec.weighted_norm > 0.0 ? rec.change / rec.weighted_norm : rec.change;
            if (std::isfinite(change_prev) && change_prev > 0.0) rec.contraction = rec.change / change_prev;
            change_prev = rec.change;
        }
        if (rec.weighted_norm > trace.M_bound) trace.inside_ball = false;
        if (!std::isfinite(rec.weighted_norm) || !(res.cg_residual < 1.0)) {
            trace.records.push_back(rec);
            break;
        }

        const Field f_next = nonlocal_source(K, res.y, sys.grid, sys.tgrid);
        const bool same_source = f_next == f;
        if (same_source && !(rec.change == rec.change)) {
            rec.change = 0.0;
            rec.relative_change = 0.0;
        }
        trace.records.push_back(rec);
        if (same_source || rec.relative_change <= opts.fp_tol) {
            trace.converged = true;
            break;
        }
        y_mid_prev = res.y_mid;
        f = f_next;
    }

    verify_nonlocal(res, y0, K, sys, opts.hum);
    out.control = std::move(res);
    return out;
}

NonlocalResult two_phase_control(const Profile& y0, const ControlProblem& problem, const TwoPhaseOptions& opts)
{
    const TimeGrid& tg = problem.tgrid;
    const int m1 = static_cast<int>(std::lround(opts.t0_fraction * tg.m));
    if (m1 < 1 || tg.m - m1 < 2) throw std::invalid_argument("t0 leaves no room for one of the two phases");
    const double t0 = tg.time(m1);
    const DiscreteOperator op = assemble_operator(problem.coef, problem.grid, problem.coef.form);
    const Eigen::VectorXd mask = problem.region.mask(problem.grid);

    SolverOptions phase1;
    phase1.stepper = Stepper::ImplicitEuler;
    const TimeGrid tg1 = TimeGrid::make(t0, m1, tg.start);
    const Field y1 = solve_forward(y0, Field(), Field(), problem.kernel, op, problem.grid, tg1, mask, phase1);
    const Profile y_t0 = y1.row(m1).transpose();

    ControlProblem second = problem;
    second.tgrid = TimeGrid::make(tg.T, tg.m - m1, t0);
    ParameterOverrides ov;
    ov.lambda = problem.params.lambda;
    ov.beta = problem.params.beta;
    ov.rho = problem.params.rho;
    ov.epsilon = problem.params.epsilon;
    if (problem.params.branch == Branch::Div) {
        ov.c = problem.params.c;
        ov.d = problem.params.d;
    }
    second.params = choose_parameters(problem.coef, problem.region, problem.grid, second.tgrid, problem.branch(), ov);

    NonlocalResult out = fixed_point_control(y_t0, second, opts.fp);
    out.t0 = t0;
    out.gradient_norm_y0 = std::sqrt(gradient_norm_sq(y0, problem.grid));
    out.gradient_norm_t0 = std::sqrt(gradient_norm_sq(y_t0, problem.grid));

    ControlResult& c = out.control;
    const int M = tg.levels(), N = problem.grid.size();
    auto concat = [&](const Field& first, const Field& rest) {
        if (rest.size() == 0) return Field();
        Field all = Field::Zero(M, N);
        if (first.size() != 0) all.topRows(m1 + 1) = first;
        all.bottomRows(rest.rows()) = rest;
        return all;
    };
    c.y = concat(y1, c.y);
    c.u = concat(Field(), c.u);
    c.y_pred = concat(y1, c.y_pred);
    c.final_ratio = final_ratio(c.y, y0, op, &c.reference_norm);
    return out;
}

double kernel_leak_outside(const KernelSpec& K, const ControlRegion& region, const SpatialGrid& grid,
                           const TimeGrid& tgrid)
{
    if (K.is_zero()) return 0.0;
    const Eigen::VectorXd in = region.mask(grid);
    double leak = 0.0;
    for (int k = 0; k < tgrid.levels(); ++k) {
        const Eigen::MatrixXd Km = K.matrix(tgrid.time(k), grid);
        for (int i = 0; i < Km.rows(); ++i)
            for (int j = 0; j < Km.cols(); ++j)
                if (in[i] == 0.0 || in[j] == 0.0) leak = std::max(leak, std::abs(Km(i, j)));
    }
    return leak;
}

NonlocalResult supported_kernel_shortcut(const Profile& y0, const ControlProblem& problem, const HumOptions& opts,
                                         double support_tol)
{
    const double leak = kernel_leak_outside(problem.kernel, problem.region, problem.grid, problem.tgrid);
    double peak = 0.0;
    for (int k = 0; k < problem.tgrid.levels() && !problem.kernel.is_zero(); ++k)
        peak = std::max(peak, problem.kernel.matrix(problem.tgrid.time(k), problem.grid).cwiseAbs().maxCoeff());
    if (leak > support_tol * peak) {
        std::ostringstream os;
        os << "kernel is not supported in omega x omega: |K| reaches " << leak << " outside";
        throw std::invalid_argument(os.str());
    }

    NonlocalResult out;
    out.kernel = check_kernel_hypotheses(problem.kernel, problem.params, problem.coef, problem.grid, problem.tgrid);
    out.hypotheses_passed = out.kernel.all_passed();
    out.trace.converged = true;

    const HumSystem sys = make_hum_system(problem);
    ControlResult res = null_control_nonhom(y0, Field(), sys, opts);
    out.v_local = res.u;
    const Field minus_Ky = nonlocal_source(problem.kernel, res.y, sys.grid, sys.tgrid);
    for (int k = 0; k < res.u.rows(); ++k)
        res.u.row(k) = (res.u.row(k) - minus_Ky.row(k)).cwiseProduct(sys.mask.transpose());
    verify_nonlocal(res, y0, problem.kernel, sys, opts);
    out.control = std::move(res);
    return out;
}

}  // namespace degen
