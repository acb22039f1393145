#include "degen/verify.hpp"

#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <sstream>
#include <stdexcept>

namespace degen {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kPi = std::numbers::pi;

// Coefficients of one ensemble member. Sources are Σ_j Σ_k c_jk cos(jπτ/L) sin(kπx).
struct MemberData {
    std::vector<double> profile;
    std::vector<std::vector<double>> source;
    std::vector<std::vector<double>> control;
};

std::vector<MemberData> draw_members(const EnsembleOptions& ens)
{
    if (ens.members < 1 || ens.modes < 1) throw std::invalid_argument("ensemble needs at least one member and one mode");
    std::mt19937_64 rng(ens.seed);
    std::normal_distribution<double> normal;
    constexpr int time_modes = 3;
    std::vector<MemberData> out(ens.members);
    for (auto& md : out) {
        md.profile.resize(ens.modes);
        for (int k = 0; k < ens.modes; ++k) md.profile[k] = normal(rng) / (k + 1);
        for (auto* series : {&md.source, &md.control}) {
            series->assign(time_modes, std::vector<double>(ens.modes));
            for (int j = 0; j < time_modes; ++j)
                for (int k = 0; k < ens.modes; ++k) (*series)[j][k] = ens.source_scale * normal(rng) / ((k + 1) * (j + 1));
        }
    }
    return out;
}

Profile sine_profile(const std::vector<double>& c, const SpatialGrid& grid)
{
    Profile y = Profile::Zero(grid.size());
    for (int i = 0; i <= grid.n; ++i)
        for (std::size_t k = 0; k < c.size(); ++k) y[i] += c[k] * std::sin((k + 1) * kPi * grid.x[i]);
    return y;
}

Field sine_field(const std::vector<std::vector<double>>& c, const SpatialGrid& grid, const TimeGrid& tgrid)
{
    Field f = Field::Zero(tgrid.levels(), grid.size());
    bool any = false;
    for (const auto& row : c)
        for (double v : row) any = any || v != 0.0;
    if (!any) return f;
    for (int k = 0; k < tgrid.levels(); ++k) {
        const double tau = (tgrid.time(k) - tgrid.start) / tgrid.length();
        for (std::size_t j = 0; j < c.size(); ++j)
            f.row(k) += std::cos(j * kPi * tau) * sine_profile(c[j], grid).transpose();
    }
    return f;
}

struct AdjointSample {
    Field g;
    Field v;
};

std::vector<AdjointSample> adjoint_ensemble(const ControlProblem& problem, const DiscreteOperator& op,
                                            const EnsembleOptions& ens)
{
    std::vector<AdjointSample> out;
    for (const auto& md : draw_members(ens)) {
        AdjointSample a;
        a.g = sine_field(md.source, problem.grid, problem.tgrid);
        a.v = solve_adjoint(sine_profile(md.profile, problem.grid), a.g, KernelSpec::zero(), op, problem.grid,
                            problem.tgrid);
        out.push_back(std::move(a));
    }
    return out;
}

// Quadrature pieces shared by the weighted integrals.
struct Quadrature {
    Eigen::VectorXd node;
    Eigen::VectorXd time;
    Eigen::VectorXd a;
    Eigen::VectorXd a_mid;
    Eigen::VectorXd x_mid;

    Quadrature(const DegenerateCoefficient& coef, const SpatialGrid& grid, const TimeGrid& tgrid)
        : node(grid.trapezoid_weights()), time(tgrid.trapezoid_weights()), a(coef.sample(grid)), a_mid(grid.n),
          x_mid(grid.n)
    {
        for (int j = 0; j < grid.n; ++j) {
            x_mid[j] = 0.5 * (grid.x[j] + grid.x[j + 1]);
            a_mid[j] = coef(x_mid[j]);
        }
    }
};

// c·e^{expo} with c·e^{-inf} = 0 even when c is infinite.
double weighted(double log_c, double expo)
{
    if (expo == -kInf || log_c == -kInf) return 0.0;
    return std::exp(log_c + expo);
}

// Σ_k τ_k Σ_i node_i F(k,i)² e^{lc_k + E(k,i)} over the nodes with keep_i != 0.
double nodal_integral(const Field& F, const Eigen::VectorXd& lc, const Field& E, const Eigen::VectorXd& node,
                      const Eigen::VectorXd& time, const Eigen::VectorXd& keep)
{
    double sum = 0.0;
    for (int k = 0; k < F.rows(); ++k) {
        double level = 0.0;
        for (int i = 0; i < F.cols(); ++i) {
            if (keep[i] == 0.0 || F(k, i) == 0.0) continue;
            level += node[i] * F(k, i) * F(k, i) * weighted(lc[k], E(k, i));
        }
        sum += time[k] * level;
    }
    return sum;
}

// Σ_k τ_k Σ_j h_j cell_j (Δ_j F/h_j)² e^{lc_k + Ē(k,j)} with Ē the cell average of E.
double gradient_integral(const Field& F, const Eigen::VectorXd& lc, const Field& E, const SpatialGrid& grid,
                         const Eigen::VectorXd& cell, const Eigen::VectorXd& time)
{
    double sum = 0.0;
    for (int k = 0; k < F.rows(); ++k) {
        double level = 0.0;
        for (int j = 0; j < grid.n; ++j) {
            if (cell[j] == 0.0) continue;
            const double d = (F(k, j + 1) - F(k, j)) / grid.h[j];
            if (d == 0.0) continue;
            const double e = E(k, j) == -kInf || E(k, j + 1) == -kInf ? -kInf : 0.5 * (E(k, j) + E(k, j + 1));
            level += grid.h[j] * cell[j] * d * d * weighted(lc[k], e);
        }
        sum += time[k] * level;
    }
    return sum;
}

Eigen::VectorXd log_power(const Eigen::VectorXd& theta, double s, int power)
{
    Eigen::VectorXd out(theta.size());
    for (int k = 0; k < theta.size(); ++k) out[k] = power * std::log(s * theta[k]);
    return out;
}

// Second-order one-sided derivative at the last node.
double right_trace(const Eigen::VectorXd& f, const SpatialGrid& grid)
{
    const int n = grid.n;
    const double h1 = grid.h[n - 1], h2 = grid.h[n - 2];
    const double c0 = (2.0 * h1 + h2) / (h1 * (h1 + h2));
    const double c1 = -(h1 + h2) / (h1 * h2);
    const double c2 = h1 / (h2 * (h1 + h2));
    return c0 * f[n] + c1 * f[n - 1] + c2 * f[n - 2];
}

double theta_of(double tau, double L)
{
    if (tau <= 0.0 || tau >= L) return kInf;
    const double q = tau * (L - tau);
    return 1.0 / (q * q);
}

double theta_dot(double tau, double L)
{
    const double q = tau * (L - tau);
    return -2.0 * (L - 2.0 * tau) / (q * q * q);
}

}  // namespace

ControlProblem refined(const ControlProblem& problem)
{
    ControlProblem out = problem;
    const SpatialGrid& g = problem.grid;
    SpatialGrid r;
    r.n = 2 * g.n;
    r.x.resize(r.n + 1);
    r.h.resize(r.n);
    for (int i = 0; i < g.n; ++i) {
        r.x[2 * i] = g.x[i];
        r.x[2 * i + 1] = 0.5 * (g.x[i] + g.x[i + 1]);
        r.h[2 * i] = r.x[2 * i + 1] - g.x[i];
        r.h[2 * i + 1] = g.x[i + 1] - r.x[2 * i + 1];
    }
    r.x[r.n] = g.x[g.n];
    out.grid = r;
    out.tgrid = TimeGrid::make(problem.tgrid.T, 2 * problem.tgrid.m, problem.tgrid.start);
    return out;
}

std::string grid_tag(const SpatialGrid& grid, const TimeGrid& tgrid)
{
    return "n=" + std::to_string(grid.n) + ",m=" + std::to_string(tgrid.m);
}

double hardy_ratio(const Profile& y, const DegenerateCoefficient& coef, const SpatialGrid& grid)
{
    const double scale = y.cwiseAbs().maxCoeff();
    if (scale == 0.0) return kNaN;
    if (std::abs(y[0]) > 1e-12 * scale || std::abs(y[grid.n]) > 1e-12 * scale)
        throw std::invalid_argument("Hardy sample must vanish at x = 0 and x = 1");
    const Eigen::VectorXd w = grid.trapezoid_weights();
    double num = 0.0;
    for (int i = 1; i < grid.n; ++i) num += w[i] * y[i] * y[i] / coef(grid.x[i]);
    return num / gradient_norm_sq(y, grid);
}

HardyReport check_hardy(const DegenerateCoefficient& coef, const SpatialGrid& grid, const std::vector<Profile>& samples,
                        int ensemble_size, std::uint64_t seed)
{
    HardyReport rep;
    for (const auto& y : samples) {
        if (y.size() != grid.size()) throw std::invalid_argument("Hardy sample does not match the grid");
        const double r = hardy_ratio(y, coef, grid);
        rep.sample_ratios.push_back(r);
        if (std::isnan(r)) {
            ++rep.skipped;
        } else if (!(rep.sample_max >= r)) {
            rep.sample_max = r;
        }
    }
    if (ensemble_size > 0) {
        EnsembleOptions ens;
        ens.members = ensemble_size;
        ens.seed = seed;
        ens.modes = 8;
        for (const auto& md : draw_members(ens)) {
            const double r = hardy_ratio(sine_profile(md.profile, grid), coef, grid);
            rep.ensemble_ratios.push_back(r);
            if (!std::isnan(r) && !(rep.ensemble_max >= r)) rep.ensemble_max = r;
        }
    }
    return rep;
}

ManufacturedSolution ManufacturedSolution::sine_bump(double T)
{
    ManufacturedSolution m;
    m.v = [T](double t, double x) { return std::sin(kPi * x) * t * t * (T - t) * (T - t); };
    m.v_t = [T](double t, double x) { return std::sin(kPi * x) * 2.0 * t * (T - t) * (T - 2.0 * t); };
    m.v_x = [T](double t, double x) { return kPi * std::cos(kPi * x) * t * t * (T - t) * (T - t); };
    m.v_xx = [T](double t, double x) { return -kPi * kPi * std::sin(kPi * x) * t * t * (T - t) * (T - t); };
    return m;
}

ManufacturedSolution ManufacturedSolution::zero()
{
    const auto z = [](double, double) { return 0.0; };
    return {z, z, z, z};
}

IdentityReport check_splitting_identity(const ManufacturedSolution& v, const ControlProblem& problem,
                                        const std::vector<std::pair<int, int>>& grids)
{
    if (problem.form() != Form::NonDivergence)
        throw std::invalid_argument("the splitting identity is implemented for the non-divergence form");
    if (grids.empty()) throw std::invalid_argument("splitting identity needs at least one grid");
    const WeightParams& prm = problem.params;
    const DegenerateCoefficient& coef = problem.coef;
    const double s = prm.s, lam = prm.lambda, L = prm.horizon();

    IdentityReport rep;
    for (const auto& [n, m] : grids) {
        const SpatialGrid grid = SpatialGrid::uniform(n);
        const TimeGrid tgrid = TimeGrid::make(prm.T, m, prm.start);
        const double h = 1.0 / n, dt = tgrid.dt();
        const Eigen::VectorXd psi = lam * (compute_p(coef, grid).p.array() - prm.beta * prm.p_norm).matrix();

        Eigen::VectorXd dpsi(n + 1), ddpsi(n + 1), a(n + 1);
        for (int i = 1; i <= n; ++i) {
            const double x = grid.x[i], ai = coef(x), da = coef.derivative(x), ex = std::exp(x * x);
            a[i] = ai;
            dpsi[i] = lam * x * ex / ai;
            ddpsi[i] = lam * ex * ((1.0 + 2.0 * x * x) / ai - x * da / (ai * ai));
        }

        Field W = Field::Zero(m + 1, n + 1);
        for (int k = 1; k < m; ++k) {
            const double t = tgrid.time(k), th = theta_of(t - prm.start, L);
            for (int i = 1; i < n; ++i) W(k, i) = std::exp(s * th * psi[i]) * v.v(t, grid.x[i]);
        }

        IdentityLevel lv;
        lv.n = n;
        lv.m = m;
        double bt = 0.0;
        for (int k = 1; k < m; ++k) {
            const double t = tgrid.time(k), tau = t - prm.start;
            const double th = theta_of(tau, L), thd = theta_dot(tau, L);
            for (int i = 1; i < n; ++i) {
                const double w = W(k, i);
                const double w_t = (W(k + 1, i) - W(k - 1, i)) / (2.0 * dt);
                const double w_x = (W(k, i + 1) - W(k, i - 1)) / (2.0 * h);
                const double w_xx = (W(k, i + 1) - 2.0 * w + W(k, i - 1)) / (h * h);
                const double phi_t = thd * psi[i], phi_x = th * dpsi[i], phi_xx = th * ddpsi[i];
                const double plus = a[i] * w_xx - s * phi_t * w + s * s * a[i] * phi_x * phi_x * w;
                const double minus = w_t - 2.0 * s * a[i] * phi_x * w_x - s * a[i] * phi_xx * w;
                const double g = v.v_t(t, grid.x[i]) + a[i] * v.v_xx(t, grid.x[i]);
                const double eg = std::exp(s * th * psi[i]) * g;
                const double q = dt * h / a[i];
                lv.norm_plus_sq += q * plus * plus;
                lv.norm_minus_sq += q * minus * minus;
                lv.cross += q * plus * minus;
                lv.value_right += q * eg * eg;
            }
            const double wx1 = right_trace(W.row(k).transpose(), grid);
            bt += dt * th * wx1 * wx1;
        }
        lv.boundary_term = -s * lam * std::exp(1.0) * bt;
        lv.value_left = lv.norm_plus_sq + lv.norm_minus_sq + 2.0 * lv.cross;
        lv.relative_residual = lv.value_right > 0.0 ? std::abs(lv.value_left - lv.value_right) / lv.value_right
                                                    : std::abs(lv.value_left);
        rep.levels.push_back(lv);
    }
    for (std::size_t i = 1; i < rep.levels.size(); ++i) {
        const double prev = rep.levels[i - 1].relative_residual, cur = rep.levels[i].relative_residual;
        rep.slopes.push_back(prev > 0.0 && cur > 0.0 ? std::log2(prev / cur) : kNaN);
        if (cur >= prev && prev > 0.0) rep.flagged = true;
    }
    const IdentityLevel& fine = rep.levels.back();
    rep.value_left = fine.value_left;
    rep.value_right = fine.value_right;
    rep.relative_residual = fine.relative_residual;
    return rep;
}

std::string to_string(CarlemanVariant variant)
{
    switch (variant) {
    case CarlemanVariant::Boundary: return "boundary";
    case CarlemanVariant::Local: return "local";
    case CarlemanVariant::ModifiedNonDiv: return "modified_nondiv";
    case CarlemanVariant::Div: return "div";
    case CarlemanVariant::ModifiedDiv: return "modified_div";
    }
    return "local";
}

CarlemanVariant carleman_variant_from_string(const std::string& name)
{
    for (auto v : {CarlemanVariant::Boundary, CarlemanVariant::Local, CarlemanVariant::ModifiedNonDiv,
                   CarlemanVariant::Div, CarlemanVariant::ModifiedDiv})
        if (to_string(v) == name) return v;
    throw std::invalid_argument("unknown Carleman variant '" + name + "'");
}

std::vector<double> s_sweep(double lo, double hi, int points)
{
    if (!(lo > 0.0) || !(hi >= lo) || points < 1) throw std::invalid_argument("s sweep needs 0 < lo <= hi and k >= 1");
    if (points == 1) return {lo};
    std::vector<double> out(points);
    for (int j = 0; j < points; ++j) out[j] = lo * std::pow(hi / lo, static_cast<double>(j) / (points - 1));
    out.back() = hi;
    return out;
}

CarlemanReport check_carleman(CarlemanVariant variant, const ControlProblem& problem, const CarlemanOptions& opts)
{
    const bool div_variant = variant == CarlemanVariant::Div || variant == CarlemanVariant::ModifiedDiv;
    if (div_variant != (problem.branch() == Branch::Div))
        throw std::invalid_argument("Carleman variant '" + to_string(variant) + "' does not match the form " +
                                    to_string(problem.form()));
    const SpatialGrid& grid = problem.grid;
    const TimeGrid& tgrid = problem.tgrid;
    const WeightSet w = assemble_weights(problem.params, problem.coef, problem.region, grid, tgrid);
    const DiscreteOperator op = assemble_operator(problem.coef, grid, problem.form());
    const Quadrature q(problem.coef, grid, tgrid);
    const int N = grid.size(), M = tgrid.levels();

    CarlemanReport rep;
    rep.variant = variant;
    rep.grid = grid_tag(grid, tgrid);
    const double s_mid = problem.params.s;
    rep.s_values = s_sweep(opts.s_lo > 0.0 ? opts.s_lo : 0.5 * s_mid, opts.s_hi > 0.0 ? opts.s_hi : 2.0 * s_mid,
                           opts.s_points);
    rep.note = "bounded over the finite s sweep [" + std::to_string(rep.s_values.front()) + ", " +
               std::to_string(rep.s_values.back()) + "] as a surrogate for all s >= s0";

    const auto members = adjoint_ensemble(problem, op, opts.ensemble);
    const Eigen::VectorXd all = Eigen::VectorXd::Ones(N);
    const Eigen::VectorXd in_omega = problem.region.mask(grid);
    const Eigen::VectorXd zero_t = Eigen::VectorXd::Zero(M);

    // Node weights: w_i/a_i, w_i (x_i/a_i)², w_i x_i²/a_i. Node 0 only meets v(0) = 0 or x² = 0.
    Eigen::VectorXd inv_a(N), x_over_a_sq(N), x2_over_a(N), plain = q.node;
    for (int i = 0; i < N; ++i) {
        const double x = grid.x[i];
        inv_a[i] = q.a[i] > 0.0 ? q.node[i] / q.a[i] : 0.0;
        x_over_a_sq[i] = q.a[i] > 0.0 ? q.node[i] * (x / q.a[i]) * (x / q.a[i]) : 0.0;
        x2_over_a[i] = q.a[i] > 0.0 ? q.node[i] * x * x / q.a[i] : 0.0;
    }
    const Eigen::VectorXd cell_one = Eigen::VectorXd::Ones(grid.n);

    const bool nondiv = !div_variant;
    const Eigen::VectorXd& src_w = nondiv ? inv_a : plain;
    const Field& phi = nondiv ? w.phi : w.phi_div;
    const Field& phi_tilde = nondiv ? w.phi_tilde : w.phi_tilde_div;
    const double hat0 = nondiv ? w.phi_hat[0] : w.phi_hat_div[0];
    const double check_t = nondiv ? w.nu_at(problem.params.Tstar) * w.psi.minCoeff()
                                  : w.nu_at(tgrid.start + 0.625 * tgrid.length()) * w.upsilon.minCoeff();

    for (double s : rep.s_values) {
        const Field E_phi = 2.0 * s * phi;
        const Field E_Phi = 2.0 * s * w.Phi;
        const Field E_phi_tilde = 2.0 * s * phi_tilde;
        const Field E_Phi_tilde = 2.0 * s * w.Phi_tilde;
        const Eigen::VectorXd l1 = log_power(w.theta, s, 1), l3 = log_power(w.theta, s, 3);
        const Eigen::VectorXd l3nu = log_power(w.nu, s, 3);

        for (std::size_t mi = 0; mi < members.size(); ++mi) {
            const Field& v = members[mi].v;
            const Field& g = members[mi].g;
            CarlemanRecord r;
            r.s = s;
            r.member = static_cast<int>(mi);
            switch (variant) {
            case CarlemanVariant::Boundary:
            case CarlemanVariant::Local: {
                r.gradient_term = gradient_integral(v, l1, E_phi, grid, cell_one, q.time);
                r.cubic_term = nodal_integral(v, l3, E_phi, x_over_a_sq, q.time, all);
                if (variant == CarlemanVariant::Boundary) {
                    r.source_term = nodal_integral(g, zero_t, E_phi, src_w, q.time, all);
                    double bt = 0.0;
                    for (int k = 0; k < M; ++k) {
                        const double vx = right_trace(v.row(k).transpose(), grid);
                        if (vx != 0.0) bt += q.time[k] * vx * vx * weighted(std::log(w.theta[k]), E_phi(k, grid.n));
                    }
                    r.boundary_term = 2.0 * s * grid.x[grid.n] * bt;
                } else {
                    r.source_term = nodal_integral(g, zero_t, E_Phi, src_w, q.time, all);
                    r.observation_term = nodal_integral(v, l3, E_Phi, inv_a, q.time, in_omega);
                }
                break;
            }
            case CarlemanVariant::Div: {
                const Eigen::VectorXd cell_a = q.a_mid;
                r.gradient_term = gradient_integral(v, l1, E_phi, grid, cell_a, q.time);
                r.cubic_term = nodal_integral(v, l3, E_phi, x2_over_a, q.time, all);
                r.source_term = nodal_integral(g, zero_t, E_Phi, plain, q.time, all);
                r.observation_term = nodal_integral(v, l3, E_Phi, plain, q.time, in_omega);
                break;
            }
            case CarlemanVariant::ModifiedNonDiv:
            case CarlemanVariant::ModifiedDiv: {
                const Eigen::VectorXd& mw = nondiv ? inv_a : plain;
                double init = 0.0;
                for (int i = 0; i < N; ++i)
                    if (v(0, i) != 0.0) init += mw[i] * v(0, i) * v(0, i);
                r.initial_term = std::exp(2.0 * s * hat0) * init;
                r.cubic_term = nodal_integral(v, zero_t, E_phi_tilde, mw, q.time, all);
                r.source_term = nodal_integral(g, zero_t, E_Phi_tilde, mw, q.time, all);
                r.observation_term = nodal_integral(v, l3nu, E_Phi_tilde, mw, q.time, in_omega);
                r.log_prefactor = 2.0 * s * (hat0 - check_t);
                break;
            }
            }
            r.lhs_total = r.gradient_term + r.cubic_term + r.initial_term;
            r.rhs_total = std::exp(r.log_prefactor) * (r.source_term + r.observation_term + r.boundary_term);
            if (r.rhs_total > 0.0 && std::isfinite(r.rhs_total)) {
                r.ratio = r.lhs_total / r.rhs_total;
            } else {
                r.excluded = true;
            }
            rep.records.push_back(r);
        }
    }

    const int K = static_cast<int>(members.size());
    int excluded_members = 0;
    for (const auto& r : rep.records) excluded_members += r.excluded;
    rep.excluded = excluded_members;
    for (std::size_t j = 0; j < rep.s_values.size(); ++j) {
        std::vector<double> ratios;
        for (int mi = 0; mi < K; ++mi) {
            const auto& r = rep.records[j * K + mi];
            if (r.excluded) continue;
            if (!std::isfinite(r.ratio)) rep.finite = false;
            ratios.push_back(r.ratio);
        }
        std::sort(ratios.begin(), ratios.end(), std::greater<>());
        const double mx = ratios.empty() ? kNaN : ratios.front();
        const int top = std::max(1, static_cast<int>(std::ceil(ratios.size() / 4.0)));
        double tq = 0.0;
        for (int i = 0; i < top && i < static_cast<int>(ratios.size()); ++i) tq += ratios[i];
        rep.max_ratio_per_s.push_back(mx);
        rep.top_quartile.push_back(ratios.empty() ? kNaN : tq / top);
        if (!ratios.empty()) rep.max_ratio = std::max(rep.max_ratio, mx);
    }
    const std::size_t mid = (rep.s_values.size() - 1) / 2;
    for (std::size_t j = mid; j + 1 < rep.top_quartile.size(); ++j)
        if (!(rep.top_quartile[j + 1] <= rep.top_quartile[j] * (1.0 + 1e-12))) rep.trend_nonincreasing = false;
    rep.finite = rep.finite && std::isfinite(rep.max_ratio);
    rep.passed = rep.finite && rep.max_ratio <= opts.ratio_cap && rep.trend_nonincreasing;
    return rep;
}

CaccioppoliReport check_caccioppoli(const ControlProblem& problem, const CaccioppoliOptions& opts)
{
    CaccioppoliReport rep;
    const ControlRegion& reg = problem.region;
    const bool own1 = opts.omega1_lo < opts.omega1_hi, own2 = opts.omega2_lo < opts.omega2_hi;
    rep.omega1_lo = own1 ? opts.omega1_lo : reg.lo;
    rep.omega1_hi = own1 ? opts.omega1_hi : reg.hi;
    rep.omega2_lo = own2 ? opts.omega2_lo : reg.inner_lo;
    rep.omega2_hi = own2 ? opts.omega2_hi : reg.inner_hi;
    if (!(0.0 < rep.omega1_lo && rep.omega1_lo < rep.omega2_lo && rep.omega2_lo < rep.omega2_hi &&
          rep.omega2_hi < rep.omega1_hi && rep.omega1_hi < 1.0))
        throw std::invalid_argument("Caccioppoli needs omega2 compactly inside omega1 compactly inside (0,1)");

    const SpatialGrid& grid = problem.grid;
    const TimeGrid& tgrid = problem.tgrid;
    const WeightSet w = assemble_weights(problem.params, problem.coef, reg, grid, tgrid);
    const DiscreteOperator op = assemble_operator(problem.coef, grid, problem.form());
    const Quadrature q(problem.coef, grid, tgrid);
    const int N = grid.size(), M = tgrid.levels();
    rep.grid = grid_tag(grid, tgrid);
    rep.s = opts.s > 0.0 ? opts.s : problem.params.s;
    const double s = rep.s;

    Field E(M, N);
    for (int k = 0; k < M; ++k)
        for (int i = 0; i < N; ++i) E(k, i) = 2.0 * s * w.theta[k] * w.eta()[i];
    Eigen::VectorXd cell2(grid.n), node1(N);
    for (int j = 0; j < grid.n; ++j) cell2[j] = q.x_mid[j] > rep.omega2_lo && q.x_mid[j] < rep.omega2_hi;
    for (int i = 0; i < N; ++i) node1[i] = grid.x[i] > rep.omega1_lo && grid.x[i] < rep.omega1_hi;
    const Eigen::VectorXd zero_t = Eigen::VectorXd::Zero(M), all = Eigen::VectorXd::Ones(N);
    const Eigen::VectorXd l2 = log_power(w.theta, s, 2);

    for (const auto& mem : adjoint_ensemble(problem, op, opts.ensemble)) {
        CaccioppoliMember r;
        r.lhs = gradient_integral(mem.v, zero_t, E, grid, cell2, q.time);
        r.rhs_local = nodal_integral(mem.v, l2, E, q.node, q.time, node1);
        r.rhs_source = nodal_integral(mem.g, zero_t, E, q.node, q.time, all);
        const double rhs = r.rhs_local + r.rhs_source;
        if (rhs > 0.0) {
            r.ratio = r.lhs / rhs;
            if (!std::isfinite(r.ratio)) rep.finite = false;
            rep.max_ratio = std::max(rep.max_ratio, r.ratio);
        } else {
            r.excluded = true;
            ++rep.excluded;
        }
        rep.members.push_back(r);
    }
    return rep;
}

namespace {

// max_k ‖M^{1/2} B_k M^{-1/2}‖ with B_k v = 1_active ∫K(t_k, τ, ·) v(τ) dτ.
double transposed_kernel_bound(const KernelSpec& K, const DiscreteOperator& op, const SpatialGrid& grid,
                               const TimeGrid& tgrid)
{
    if (K.is_zero()) return 0.0;
    std::vector<int> idx;
    for (int i = 0; i < op.size(); ++i)
        if (op.active[i] != 0.0) idx.push_back(i);
    const int n = static_cast<int>(idx.size());
    double bound = 0.0;
    for (int k = 0; k < tgrid.levels(); ++k) {
        Eigen::MatrixXd B(n, n);
        for (int j = 0; j < n; ++j) {
            Profile e = Profile::Zero(op.size());
            e[idx[j]] = 1.0;
            const Profile col = apply_nonlocal(K, e, tgrid.time(k), grid, true);
            for (int i = 0; i < n; ++i)
                B(i, j) = std::sqrt(op.mass[idx[i]]) * col[idx[i]] / std::sqrt(op.mass[idx[j]]);
        }
        bound = std::max(bound, Eigen::JacobiSVD<Eigen::MatrixXd>(B).singularValues()[0]);
    }
    return bound;
}

}  // namespace

ObservabilityReport check_observability(const ControlProblem& problem, const ObservabilityOptions& opts)
{
    ObservabilityReport rep;
    const SpatialGrid& grid = problem.grid;
    const TimeGrid& tgrid = problem.tgrid;
    const DiscreteOperator op = assemble_operator(problem.coef, grid, problem.form());
    const Quadrature q(problem.coef, grid, tgrid);
    const Eigen::VectorXd in_omega = problem.region.mask(grid);
    const Eigen::VectorXd all = Eigen::VectorXd::Ones(grid.size());
    const Eigen::VectorXd zero_t = Eigen::VectorXd::Zero(tgrid.levels());
    const Field E0 = Field::Zero(tgrid.levels(), grid.size());
    rep.grid = grid_tag(grid, tgrid);

    rep.kernel_bound = transposed_kernel_bound(problem.kernel, op, grid, tgrid);
    const double k = rep.kernel_bound, L = tgrid.length();
    rep.C_T = k > 0.0 ? 2.0 * k / (1.0 - std::exp(-2.0 * k * L)) : 1.0 / L;

    SolverOptions so;
    so.stepper = opts.stepper;
    for (const auto& md : draw_members(opts.ensemble)) {
        const Profile vT = sine_profile(md.profile, grid);
        const Field g = sine_field(md.source, grid, tgrid);
        const Field v = solve_adjoint(vT, g, problem.kernel, op, grid, tgrid, so);
        ObservabilityMember r;
        r.initial_energy = mass_norm_sq(v.row(0).transpose(), op);
        r.observation = nodal_integral(v, zero_t, E0, q.node, q.time, in_omega);
        r.full_observation = nodal_integral(v, zero_t, E0, q.node, q.time, all);
        r.weighted_full = space_time_norm_sq(v, op, tgrid);
        if (!(r.observation > 0.0)) {
            r.excluded = true;
            ++rep.excluded;
            rep.members.push_back(r);
            continue;
        }
        r.ratio = r.initial_energy / r.observation;
        r.ratio_full = r.initial_energy / r.full_observation;
        r.weighted_ratio = r.initial_energy / r.weighted_full;
        r.ordering_ok = r.ratio >= r.ratio_full * (1.0 - 1e-12);
        r.weighted_ok = r.weighted_ratio <= rep.C_T * (1.0 + 1e-12);
        if (!std::isfinite(r.ratio) || !std::isfinite(r.weighted_ratio)) rep.finite = false;
        rep.max_ratio = std::max(rep.max_ratio, r.ratio);
        rep.max_weighted_ratio = std::max(rep.max_weighted_ratio, r.weighted_ratio);
        rep.ordering_ok = rep.ordering_ok && r.ordering_ok;
        rep.weighted_ok = rep.weighted_ok && r.weighted_ok;
        rep.members.push_back(r);
    }
    return rep;
}

EnergyReport check_energy_estimates(const ControlProblem& problem, const EnergyOptions& opts)
{
    EnergyReport rep;
    const SpatialGrid& grid = problem.grid;
    const TimeGrid& tgrid = problem.tgrid;
    const DiscreteOperator op = assemble_operator(problem.coef, grid, problem.form());
    const Quadrature q(problem.coef, grid, tgrid);
    const Eigen::VectorXd mask = problem.region.mask(grid);
    const bool div = problem.branch() == Branch::Div;
    rep.grid = grid_tag(grid, tgrid);

    SolverOptions so;
    so.stepper = opts.stepper;
    auto h1_sq = [&](const Profile& y) {
        double grad = 0.0;
        for (int j = 0; j < grid.n; ++j) {
            const double d = (y[j + 1] - y[j]) / grid.h[j];
            grad += grid.h[j] * (div ? q.a_mid[j] : 1.0) * d * d;
        }
        return mass_norm_sq(y, op) + grad;
    };

    for (const auto& md : draw_members(opts.ensemble)) {
        const Profile y0 = sine_profile(md.profile, grid);
        const Field f = sine_field(md.source, grid, tgrid);
        Field u = sine_field(md.control, grid, tgrid);
        for (int k = 0; k < u.rows(); ++k) u.row(k) = u.row(k).cwiseProduct(mask.transpose());
        const Field y = solve_forward(y0, f, u, problem.kernel, op, grid, tgrid, mask, so);
        EnergyMember r;
        for (int k = 0; k < y.rows(); ++k) {
            const Profile yk = y.row(k).transpose();
            r.sup_energy = std::max(r.sup_energy, mass_norm_sq(yk, op));
            r.integrated_h1 += q.time[k] * h1_sq(yk);
        }
        r.data = mass_norm_sq(y0, op) + space_time_norm_sq(f, op, tgrid) + space_time_norm_sq(u, op, tgrid);
        if (r.data > 0.0) {
            r.ratio = (r.sup_energy + r.integrated_h1) / r.data;
            if (!std::isfinite(r.ratio)) rep.finite = false;
            rep.constant = std::max(rep.constant, r.ratio);
        }
        rep.members.push_back(r);
    }

    Profile y0 = opts.dissipativity_profile;
    if (y0.size() == 0) {
        y0.resize(grid.size());
        for (int i = 0; i <= grid.n; ++i) y0[i] = std::sin(kPi * grid.x[i]);
    }
    const Field y = solve_forward(y0, Field(), Field(), KernelSpec::zero(), op, grid, tgrid, mask, so);
    for (int k = 0; k < y.rows(); ++k) rep.step_norms.push_back(std::sqrt(mass_norm_sq(y.row(k).transpose(), op)));
    rep.max_relative_increase = -kInf;
    for (std::size_t k = 0; k + 1 < rep.step_norms.size(); ++k) {
        const double a = rep.step_norms[k], b = rep.step_norms[k + 1];
        if (b < a) ++rep.strict_decreases;
        if (a > 0.0) rep.max_relative_increase = std::max(rep.max_relative_increase, (b - a) / a);
    }
    if (rep.max_relative_increase == -kInf) rep.max_relative_increase = 0.0;
    rep.dissipative = rep.max_relative_increase <= opts.tolerance;
    return rep;
}

}  // namespace degen
