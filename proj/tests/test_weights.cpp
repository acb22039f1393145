#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "degen/weights.hpp"

#include <cmath>
#include <numbers>

using namespace degen;

namespace {

// composite Simpson on [0,1]
template <typename F>
double simpson(F f, int n = 200000)
{
    const double h = 1.0 / n;
    double acc = f(0.0) + f(1.0);
    for (int i = 1; i < n; ++i) acc += (i % 2 ? 4.0 : 2.0) * f(i * h);
    return acc * h / 3.0;
}

double theta_exact(double t, double T) { return 1.0 / std::pow(t * (T - t), 2); }

struct Setup {
    DegenerateCoefficient coef;
    ControlRegion region = ControlRegion::make(0.3, 0.8);
    SpatialGrid grid = SpatialGrid::uniform(64);
    TimeGrid tgrid = TimeGrid::make(1.0, 128);
    WeightParams params;
    WeightSet w;

    explicit Setup(Form form, double alpha, ParameterOverrides ov = {})
        : coef(DegenerateCoefficient::power(form, alpha))
    {
        params = choose_parameters(coef, region, grid, tgrid, branch_of(form), ov);
        w = assemble_weights(params, coef, region, grid, tgrid);
    }
};

}  // namespace

TEST_CASE("epsilon_max is the radicand root")
{
    CHECK(epsilon_max() == doctest::Approx(std::sqrt(1.0 - 2.0 * std::sqrt(2.0) / 3.0)).epsilon(1e-14));
    CHECK(std::abs(epsilon_max() - 0.2391) <= 1e-4);
}

TEST_CASE("p for a = x against an independent quadrature")
{
    const double oracle = simpson([](double y) { return std::exp(y * y); });
    const auto grid = SpatialGrid::uniform(256);
    const PTable p = compute_p(DegenerateCoefficient::power(Form::NonDivergence, 1.0), grid);
    CHECK(p.p[0] == 0.0);
    CHECK(p.p_norm == doctest::Approx(oracle).epsilon(1e-5));
    CHECK(std::abs(oracle - 1.4627) < 1e-4);
    for (int i = 1; i < grid.size(); ++i) CHECK(p.p[i] >= p.p[i - 1]);

    const PTable ph = compute_p(DegenerateCoefficient::power(Form::NonDivergence, 0.5), grid);
    const double oracle_half = simpson([](double y) { return std::sqrt(y) * std::exp(y * y); });
    CHECK(ph.p_norm == doctest::Approx(oracle_half).epsilon(1e-4));
}

TEST_CASE("lambda interval for a = x, rho = 1, beta = 4")
{
    const double pn = simpson([](double y) { return std::exp(y * y); });
    const double e = std::numbers::e;
    const auto [lo, hi] = lambda_interval(1.0, 1.0, 4.0, pn);
    CHECK(lo == doctest::Approx((e * e - 1.0) / (3.0 * pn)).epsilon(1e-12));
    CHECK(hi == doctest::Approx(2.0 * (e * e - e) / (3.0 * pn)).epsilon(1e-12));
    CHECK(std::abs(lo - 1.456) < 1e-3);
    CHECK(std::abs(hi - 2.129) < 1e-3);
}

TEST_CASE("sigma construction")
{
    const auto grid = SpatialGrid::uniform(200);
    const SigmaTable sym = build_sigma(ControlRegion::make(0.3, 0.7), grid);
    for (int i = 0; i < grid.size(); ++i) CHECK(sym.value[i] == doctest::Approx(std::sin(std::numbers::pi * grid.x[i])).epsilon(1e-12));
    CHECK(sym.sigma.norm_inf == doctest::Approx(1.0));

    const SigmaTable off = build_sigma(ControlRegion::make(0.3, 0.9, 0.55, 0.75), grid);
    CHECK(off.d1[0] > 0.0);
    CHECK(off.d1[grid.n] < 0.0);
    int changes = 0;
    double root = 0.0;
    for (int i = 0; i < grid.n; ++i) {
        if (off.d1[i] > 0.0 && off.d1[i + 1] <= 0.0) {
            ++changes;
            root = grid.x[i] + (grid.x[i + 1] - grid.x[i]) * off.d1[i] / (off.d1[i] - off.d1[i + 1]);
        }
    }
    CHECK(changes == 1);
    CHECK(root == doctest::Approx(0.65).epsilon(1e-3));
    CHECK(off.sigma.x_star == doctest::Approx(0.65));
    for (int i = 1; i < grid.n; ++i) CHECK(off.value[i] > 0.0);
}

TEST_CASE("time weights for T = 1")
{
    const Setup s(Form::NonDivergence, 0.5);
    for (int k = 0; k <= s.tgrid.m; ++k) {
        const double t = s.tgrid.time(k);
        if (t <= 0.5) CHECK(s.w.nu[k] == doctest::Approx(16.0));
        if (t >= 0.5 && t < 1.0) CHECK(s.w.nu[k] == doctest::Approx(theta_exact(t, 1.0)).epsilon(1e-12));
        if (t > 0.0 && t < 1.0) CHECK(s.w.nu[k] <= s.w.theta[k] * (1.0 + 1e-14));
    }
    CHECK(s.w.nu_at(0.5 - 1e-9) == doctest::Approx(s.w.nu_at(0.5 + 1e-9)).epsilon(1e-6));
    CHECK(std::isinf(s.w.theta[0]));
    CHECK(std::isinf(s.w.theta[s.tgrid.m]));
}

TEST_CASE("spatial weights and comparisons")
{
    const Setup s(Form::NonDivergence, 0.5);
    const int N = s.grid.size();
    CHECK(s.w.psi[N - 1] / s.w.psi[0] == doctest::Approx(0.75).epsilon(1e-12));
    CHECK(s.w.psi[0] == doctest::Approx(-4.0 * s.params.lambda * s.params.p_norm).epsilon(1e-12));
    for (int i = 1; i < N; ++i) CHECK(s.w.psi[i] > s.w.psi[i - 1]);

    for (int k = 1; k < s.tgrid.m; ++k) {
        const double nu = s.w.nu[k];
        CHECK(s.w.phi_hat[k] == doctest::Approx(s.w.phi_tilde.row(k).maxCoeff()));
        CHECK(s.w.phi_check[k] == doctest::Approx(s.w.phi_tilde.row(k).minCoeff()));
        CHECK(s.w.phi_hat[k] == doctest::Approx(nu * s.w.psi[N - 1]));
        CHECK(s.w.phi_check[k] == doctest::Approx(nu * s.w.psi[0]));
        CHECK(s.w.Phi_hat[k] == doctest::Approx(s.w.Phi_tilde.row(k).maxCoeff()));
        CHECK((s.w.phi.row(k) - s.w.Phi.row(k)).maxCoeff() <= 0.0);
        CHECK(s.w.Phi.row(k).maxCoeff() <= 0.0);
        CHECK((s.w.phi_tilde.row(k) - s.w.Phi_tilde.row(k)).maxCoeff() <= 0.0);
    }
}

TEST_CASE("default s puts max |2s Phi_tilde| at 40 at t = 3T/4")
{
    const Setup s(Form::NonDivergence, 0.5);
    const double t = 0.75;
    const double nu = theta_exact(t, 1.0);
    const double expo = 2.0 * s.params.s * nu * s.w.Psi.cwiseAbs().maxCoeff();
    CHECK(expo == doctest::Approx(40.0).epsilon(1e-3));
}

TEST_CASE("weight inequalities at the default and at epsilon = 0.3")
{
    const Setup good(Form::NonDivergence, 0.5);
    const auto rep = verify_parameter_inequalities(good.params, good.w);
    CHECK(rep.passed());
    const CheckEntry* nu = rep.find("nu_gap");
    REQUIRE(nu != nullptr);
    CHECK(nu->value == doctest::Approx(16.0 * (8.0 / (0.96 * 0.96) - 9.0)).epsilon(1e-10));
    CHECK(nu->value == doctest::Approx(-5.11).epsilon(1e-3));

    ParameterOverrides ov;
    ov.epsilon = 0.3;
    const Setup bad(Form::NonDivergence, 0.5, ov);
    const auto rep2 = verify_parameter_inequalities(bad.params, bad.w);
    CHECK_FALSE(rep2.passed());
    const CheckEntry* nu2 = rep2.find("nu_gap");
    REQUIRE(nu2 != nullptr);
    CHECK_FALSE(nu2->passed);
    CHECK(nu2->value == doctest::Approx(16.0 * (8.0 / (0.91 * 0.91) - 9.0)).epsilon(1e-10));
    CHECK(nu2->value == doctest::Approx(10.6).epsilon(1e-2));
}

TEST_CASE("nu_gap sign change is bracketed at epsilon_max")
{
    auto value = [](double eps) {
        ParameterOverrides ov;
        ov.epsilon = eps;
        const Setup s(Form::NonDivergence, 0.5, ov);
        return verify_parameter_inequalities(s.params, s.w).find("nu_gap")->value;
    };
    for (double eps : {0.01, 0.05, 0.1, 0.15, 0.2, 0.23}) CHECK(value(eps) < 0.0);
    CHECK(value(epsilon_max() - 1e-3) < 0.0);
    CHECK(value(epsilon_max() + 1e-3) > 0.0);
    CHECK(value(1e-6) == doctest::Approx(-16.0).epsilon(1e-3));
}

TEST_CASE("divergence branch defaults for a = x^(1/2)")
{
    const Setup s(Form::DivergenceWD, 0.5);
    CHECK(s.params.d_star == doctest::Approx(2.0 / 3.0).epsilon(1e-3));
    CHECK(s.params.d == doctest::Approx(3.0).epsilon(1e-3));
    const auto [lo, hi] = c_interval(s.params.rho, s.params.sigma_norm, s.params.d, s.params.d_star);
    CHECK(s.params.c == doctest::Approx(0.5 * (lo + hi)));
    const auto rep = verify_parameter_inequalities(s.params, s.w);
    CHECK(rep.passed());
    const CheckEntry* div = rep.find("div_check");
    REQUIRE(div != nullptr);
    CHECK(div->value < 0.0);
    CHECK(s.params.c1 == doctest::Approx(s.params.c * s.params.d * 16.0));
    for (int k = 1; k < s.tgrid.m; ++k) CHECK((s.w.phi_div.row(k) - s.w.Phi.row(k)).maxCoeff() <= 0.0);
    CHECK(s.w.upsilon.maxCoeff() < 0.0);
}

TEST_CASE("c0 follows its formula")
{
    const Setup s(Form::NonDivergence, 0.5);
    CHECK(s.params.c0 == doctest::Approx(8.0 * s.params.lambda * s.params.p_norm * 16.0));
    CHECK(s.params.Tstar == doctest::Approx(0.6));
    CHECK(s.params.beta == 4.0);
    CHECK(s.params.rho > std::log(2.0) / s.params.sigma_norm);
}
