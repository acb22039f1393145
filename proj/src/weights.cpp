#include "degen/weights.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>
#include <stdexcept>

namespace degen {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kPi = std::numbers::pi;

struct SplinePiece {
    double x0, h, y0, y1, m0, m1;
};

SplinePiece piece(const Sigma& s, double x)
{
    const double h0 = s.x_star, h1 = 1.0 - s.x_star;
    if (x <= s.x_star) return {0.0, h0, 0.0, 0.5, 0.0, s.curvature};
    return {s.x_star, h1, 0.5, 1.0, s.curvature, 0.0};
}

double theta_local(double tau, double L)
{
    if (tau <= 0.0 || tau >= L) return kInf;
    const double q = tau * (L - tau);
    return 1.0 / (q * q);
}

double nu_local(double tau, double L)
{
    if (tau <= 0.5 * L) return theta_local(0.5 * L, L);
    return theta_local(tau, L);
}

// Cumulative ∫₀^{x_i} g with g(y) ~ g(x₁)(y/x₁)^{1-α} on the first cell.
Eigen::VectorXd cumulative(const Eigen::VectorXd& g, const SpatialGrid& grid, double alpha)
{
    Eigen::VectorXd out = Eigen::VectorXd::Zero(grid.size());
    out[1] = g[1] * grid.x[1] / (2.0 - alpha);
    for (int i = 1; i < grid.n; ++i) out[i + 1] = out[i] + 0.5 * grid.h[i] * (g[i] + g[i + 1]);
    return out;
}

std::string fmt(double v)
{
    std::ostringstream os;
    os.precision(6);
    os << v;
    return os.str();
}

}  // namespace

double Sigma::r(double x) const
{
    const auto p = piece(*this, x);
    const double a = p.x0 + p.h - x, b = x - p.x0;
    return p.m0 * a * a * a / (6.0 * p.h) + p.m1 * b * b * b / (6.0 * p.h) + (p.y0 / p.h - p.m0 * p.h / 6.0) * a +
           (p.y1 / p.h - p.m1 * p.h / 6.0) * b;
}

double Sigma::r1(double x) const
{
    const auto p = piece(*this, x);
    const double a = p.x0 + p.h - x, b = x - p.x0;
    return -p.m0 * a * a / (2.0 * p.h) + p.m1 * b * b / (2.0 * p.h) - (p.y0 / p.h - p.m0 * p.h / 6.0) +
           (p.y1 / p.h - p.m1 * p.h / 6.0);
}

double Sigma::r2(double x) const
{
    const auto p = piece(*this, x);
    return (p.m0 * (p.x0 + p.h - x) + p.m1 * (x - p.x0)) / p.h;
}

double Sigma::value(double x) const
{
    return std::sin(kPi * r(x));
}

double Sigma::d1(double x) const
{
    return kPi * r1(x) * std::cos(kPi * r(x));
}

double Sigma::d2(double x) const
{
    const double rr = r(x), g = r1(x);
    return kPi * r2(x) * std::cos(kPi * rr) - kPi * kPi * g * g * std::sin(kPi * rr);
}

SigmaTable build_sigma(const ControlRegion& region, const SpatialGrid& grid)
{
    if (!(region.inner_hi > region.inner_lo)) throw std::invalid_argument("omega_tilde has zero width");
    SigmaTable out;
    Sigma& s = out.sigma;
    s.x_star = 0.5 * (region.inner_lo + region.inner_hi);
    s.curvature = 1.5 * (1.0 / (1.0 - s.x_star) - 1.0 / s.x_star);
    for (int k = 0; k <= 4000; ++k) {
        if (!(s.r1(k / 4000.0) > 0.0))
            throw std::invalid_argument("sigma reparameterization is not monotone for this omega_tilde");
    }
    s.norm_inf = 1.0;
    const int N = grid.size();
    out.value.resize(N);
    out.d1.resize(N);
    out.d2.resize(N);
    for (int i = 0; i < N; ++i) {
        out.value[i] = s.value(grid.x[i]);
        out.d1[i] = s.d1(grid.x[i]);
        out.d2[i] = s.d2(grid.x[i]);
    }
    out.value[0] = 0.0;
    out.value[N - 1] = 0.0;
    return out;
}

PTable compute_p(const DegenerateCoefficient& coef, const SpatialGrid& grid)
{
    if (coef.alpha >= 2.0) throw std::invalid_argument("p is not integrable for alpha >= 2");
    Eigen::VectorXd g(grid.size());
    g[0] = 0.0;
    for (int i = 1; i < grid.size(); ++i) {
        const double x = grid.x[i];
        g[i] = x * std::exp(x * x) / coef(x);
    }
    PTable out;
    out.p = cumulative(g, grid, coef.alpha);
    out.p_norm = out.p.maxCoeff();
    return out;
}

Eigen::VectorXd cumulative_y_over_a(const DegenerateCoefficient& coef, const SpatialGrid& grid)
{
    if (coef.alpha >= 2.0) throw std::invalid_argument("y/a is not integrable for alpha >= 2");
    Eigen::VectorXd g(grid.size());
    g[0] = 0.0;
    for (int i = 1; i < grid.size(); ++i) g[i] = grid.x[i] / coef(grid.x[i]);
    return cumulative(g, grid, coef.alpha);
}

double epsilon_max()
{
    return std::sqrt(1.0 - 2.0 * std::sqrt(2.0) / 3.0);
}

std::pair<double, double> lambda_interval(double rho, double sigma_norm, double beta, double p_norm)
{
    const double e1 = std::exp(rho * sigma_norm), e2 = std::exp(2.0 * rho * sigma_norm);
    const double den = (beta - 1.0) * p_norm;
    return {(e2 - 1.0) / den, 2.0 * (e2 - e1) / den};
}

std::pair<double, double> c_interval(double rho, double sigma_norm, double d, double d_star)
{
    const double e1 = std::exp(rho * sigma_norm), e2 = std::exp(2.0 * rho * sigma_norm);
    const double den = d - d_star;
    return {(e2 - 1.0) / den, 16.0 / 15.0 * (e2 - e1) / den};
}

double default_s(const WeightParams& params)
{
    const double L = params.horizon();
    const double nu = nu_local(0.75 * L, L);
    const double psi_max = std::exp(2.0 * params.rho * params.sigma_norm) - 1.0;
    return 20.0 / (nu * psi_max);
}

WeightParams choose_parameters(const DegenerateCoefficient& coef, const ControlRegion& region,
                               const SpatialGrid& grid, const TimeGrid& tgrid, Branch branch,
                               const ParameterOverrides& ov)
{
    WeightParams p;
    p.branch = branch;
    p.T = tgrid.T;
    p.start = tgrid.start;
    const double L = tgrid.length();
    p.sigma_norm = build_sigma(region, grid).sigma.norm_inf;
    p.beta = ov.beta > 0.0 ? ov.beta : 4.0;

    double rho = std::max(1.0, 1.05 * std::log(2.0) / p.sigma_norm);
    if (branch == Branch::Div) rho = std::max(rho, 1.05 * std::log(15.0) / p.sigma_norm);
    p.rho = ov.rho > 0.0 ? ov.rho : rho;

    p.epsilon = ov.epsilon > 0.0 ? ov.epsilon : 0.2;
    p.Tstar = p.start + (1.0 + p.epsilon) * L / 2.0;

    if (coef.alpha < 2.0) {
        p.p_norm = compute_p(coef, grid).p_norm;
        const auto [lo, hi] = lambda_interval(p.rho, p.sigma_norm, p.beta, p.p_norm);
        p.lambda = ov.lambda > 0.0 ? ov.lambda : 0.5 * (lo + hi);
        p.c0 = 8.0 * p.lambda * p.p_norm * std::pow(4.0 / L, 2);
        p.d_star = cumulative_y_over_a(coef, grid).maxCoeff();
    }
    if (branch == Branch::Div) {
        p.d = ov.d > 0.0 ? ov.d : 4.5 * p.d_star;
        const auto [lo, hi] = c_interval(p.rho, p.sigma_norm, p.d, p.d_star);
        p.c = ov.c > 0.0 ? ov.c : 0.5 * (lo + hi);
        p.c1 = p.c * p.d * std::pow(4.0 / L, 2);
    }
    p.s = ov.s > 0.0 ? ov.s : default_s(p);
    return p;
}

double WeightSet::theta_at(double t) const
{
    return theta_local(t - params.start, params.horizon());
}

double WeightSet::nu_at(double t) const
{
    return nu_local(t - params.start, params.horizon());
}

WeightSet assemble_weights(const WeightParams& params, const DegenerateCoefficient& coef,
                           const ControlRegion& region, const SpatialGrid& grid, const TimeGrid& tgrid)
{
    if (std::abs(params.T - tgrid.T) > 1e-12 || std::abs(params.start - tgrid.start) > 1e-12)
        throw std::invalid_argument("weight parameters and time grid disagree on the horizon");
    WeightSet w;
    w.params = params;
    w.grid = grid;
    w.tgrid = tgrid;
    const int N = grid.size(), M = tgrid.levels();
    const double L = tgrid.length(), s = params.s;

    w.theta.resize(M);
    w.nu.resize(M);
    for (int k = 0; k < M; ++k) {
        const double tau = k == tgrid.m ? L : tgrid.time(k) - tgrid.start;
        w.theta[k] = theta_local(tau, L);
        w.nu[k] = nu_local(tau, L);
    }
    w.theta_mid.resize(tgrid.m);
    w.nu_mid.resize(tgrid.m);
    for (int k = 0; k < tgrid.m; ++k) {
        const double tau = tgrid.midpoint(k) - tgrid.start;
        w.theta_mid[k] = theta_local(tau, L);
        w.nu_mid[k] = nu_local(tau, L);
    }

    w.sigma = build_sigma(region, grid);
    const double rs = params.rho * w.sigma.sigma.norm_inf;
    w.Psi.resize(N);
    for (int i = 0; i < N; ++i) w.Psi[i] = std::exp(params.rho * w.sigma.value[i]) - std::exp(2.0 * rs);

    if (coef.alpha < 2.0) {
        w.p = compute_p(coef, grid).p;
        if (params.branch == Branch::NonDiv) {
            const double lo = lambda_interval(params.rho, w.sigma.sigma.norm_inf, params.beta, params.p_norm).first;
            if (params.lambda < lo * (1.0 - 1e-12))
                throw std::invalid_argument("lambda " + fmt(params.lambda) + " below the admissible bound " + fmt(lo));
        }
        w.psi = params.lambda * (w.p.array() - params.beta * params.p_norm).matrix();
    } else {
        w.p = Eigen::VectorXd::Zero(N);
        w.psi = Eigen::VectorXd::Zero(N);
    }
    if (params.branch == Branch::Div) {
        w.upsilon = params.c * (cumulative_y_over_a(coef, grid).array() - params.d).matrix();
    } else {
        w.upsilon = Eigen::VectorXd::Zero(N);
    }

    w.phi = w.theta * w.psi.transpose();
    w.Phi = w.theta * w.Psi.transpose();
    w.phi_tilde = w.nu * w.psi.transpose();
    w.Phi_tilde = w.nu * w.Psi.transpose();
    w.phi_div = w.theta * w.upsilon.transpose();
    w.phi_tilde_div = w.nu * w.upsilon.transpose();

    w.phi_hat = w.nu * w.psi.maxCoeff();
    w.phi_check = w.nu * w.psi.minCoeff();
    w.Phi_hat = w.nu * w.Psi.maxCoeff();
    w.phi_hat_div = w.nu * w.upsilon.maxCoeff();
    w.phi_check_div = w.nu * w.upsilon.minCoeff();

    w.log_e2sPhi_tilde.resize(M, N);
    for (int k = 0; k < M; ++k)
        for (int i = 0; i < N; ++i) w.log_e2sPhi_tilde(k, i) = clamp_log(2.0 * s * w.nu[k] * w.Psi[i]);
    w.log_e2sPhi_tilde_mid.resize(tgrid.m, N);
    for (int k = 0; k < tgrid.m; ++k)
        for (int i = 0; i < N; ++i) w.log_e2sPhi_tilde_mid(k, i) = clamp_log(2.0 * s * w.nu_mid[k] * w.Psi[i]);
    return w;
}

bool InequalityReport::passed() const
{
    return std::all_of(entries.begin(), entries.end(), [](const CheckEntry& e) { return e.passed; });
}

const CheckEntry* InequalityReport::find(const std::string& name) const
{
    for (const auto& e : entries)
        if (e.name == name) return &e;
    return nullptr;
}

InequalityReport verify_parameter_inequalities(const WeightParams& params, const WeightSet& w)
{
    InequalityReport rep;
    const double L = params.horizon();
    const double nu0 = w.nu_at(params.start);
    const double Psi_max = w.Psi.maxCoeff();
    const int M = w.tgrid.levels();

    if (params.branch == Branch::NonDiv) {
        const double emax = epsilon_max();
        rep.entries.push_back({"epsilon_range", params.epsilon > 0.0 && params.epsilon < emax, params.epsilon,
                               "epsilon in (0, " + fmt(emax) + ")"});
        const auto [lo, hi] = lambda_interval(params.rho, params.sigma_norm, params.beta, params.p_norm);
        rep.entries.push_back({"lambda_interval", params.lambda >= lo * (1.0 - 1e-12) && params.lambda < hi,
                               params.lambda, "[" + fmt(lo) + ", " + fmt(hi) + ")"});
        const double rho_min = std::log(2.0) / params.sigma_norm;
        rep.entries.push_back({"rho_condition", params.rho > rho_min, params.rho, "rho > " + fmt(rho_min)});

        const double psi1 = w.psi.maxCoeff(), psi0 = w.psi.minCoeff();
        const double nu_star = w.nu_at(params.Tstar);
        const double full = 2.0 * (nu0 * psi1 - nu_star * psi0 + nu0 * Psi_max);
        rep.entries.push_back({"weight_gap", full < 0.0, full, "2(phi_hat(0) - phi_check(T*) + Phi_hat(0)) < 0"});
        const double nu_form = 8.0 * nu_star - 9.0 * nu0;
        rep.entries.push_back({"nu_gap", nu_form < 0.0, nu_form, "8 nu(T*) - 9 nu(0) < 0"});

        double worst = -kInf;
        for (int k = 0; k < M; ++k) {
            if (!std::isfinite(w.nu[k])) continue;
            worst = std::max(worst, 2.0 * w.Phi_hat[k] - w.phi_hat[k]);
        }
        rep.entries.push_back({"max_min_comparison", worst <= 0.0, worst, "max_t 2 Phi_hat(t) - phi_hat(t) <= 0"});

        double gap = -kInf;
        for (int k = 0; k < M; ++k) {
            if (!std::isfinite(w.theta[k])) continue;
            gap = std::max(gap, (w.phi.row(k) - w.Phi.row(k)).maxCoeff());
        }
        rep.entries.push_back({"phi_le_Phi", gap <= 0.0, gap, "max (phi - Phi) <= 0"});
    } else {
        rep.entries.push_back({"d_gt_4dstar", params.d > 4.0 * params.d_star, params.d - 4.0 * params.d_star,
                               "d - 4 d*"});
        const auto [lo, hi] = c_interval(params.rho, params.sigma_norm, params.d, params.d_star);
        CheckEntry ce{"c_interval", params.c > lo && params.c < hi, params.c, "(" + fmt(lo) + ", " + fmt(hi) + ")"};
        if (!(lo < hi)) ce.detail += " empty; needs exp(rho |sigma|) > 15";
        rep.entries.push_back(ce);
        const double check_five_eighths = w.nu_at(params.start + 5.0 * L / 8.0) * w.upsilon.minCoeff();
        const double div = 2.0 * nu0 * Psi_max - check_five_eighths;
        rep.entries.push_back({"div_check", div < 0.0, div, "2 Phi_hat(0) - phi_check_div(5T/8) < 0"});

        double gap = -kInf;
        for (int k = 0; k < M; ++k) {
            if (!std::isfinite(w.theta[k])) continue;
            gap = std::max(gap, (w.phi_div.row(k) - w.Phi.row(k)).maxCoeff());
        }
        rep.entries.push_back({"phi_div_le_Phi", gap <= 0.0, gap, "max (phi_div - Phi) <= 0"});
    }
    return rep;
}

}  // namespace degen
