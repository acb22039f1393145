#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "degen/nonlocal.hpp"

#include <cmath>
#include <numbers>

using namespace degen;

namespace {

constexpr double pi = std::numbers::pi;

ControlProblem make_problem(int n = 32, int m = 64, double alpha = 0.5)
{
    ControlProblem pb{DegenerateCoefficient::power(Form::NonDivergence, alpha), ControlRegion::make(0.3, 0.8),
                      SpatialGrid::uniform(n), TimeGrid::make(1.0, m), {}, KernelSpec::zero()};
    pb.params = choose_parameters(pb.coef, pb.region, pb.grid, pb.tgrid, pb.branch());
    return pb;
}

Profile sine(const SpatialGrid& grid)
{
    Profile y(grid.size());
    for (int i = 0; i < grid.size(); ++i) y[i] = std::sin(pi * grid.x[i]);
    return y;
}

KernelSpec bump_kernel(double kappa0, double decay)
{
    auto b = [](double x) {
        const double r = (x - 0.55) / 0.2;
        return std::abs(r) < 1.0 ? std::exp(1.0 - 1.0 / (1.0 - r * r)) : 0.0;
    };
    KernelSpec K = KernelSpec::separable(b, b, decay, 1.0);
    K.kappa0 = kappa0;
    K.support_in_omega = true;
    return K;
}

}  // namespace

TEST_CASE("kernel hypotheses")
{
    const ControlProblem pb = make_problem();
    const KernelReport zero = check_kernel_hypotheses(KernelSpec::zero(), pb.params, pb.coef, pb.grid, pb.tgrid);
    CHECK(zero.all_passed());
    for (const auto& v : zero.verdicts) CHECK(v.value == 0.0);

    const KernelReport damped = check_kernel_hypotheses(KernelSpec::constant(1.0, pb.params.c0 * pb.params.s, 1.0),
                                                        pb.params, pb.coef, pb.grid, pb.tgrid);
    REQUIRE(damped.find("decay_c0") != nullptr);
    CHECK(damped.find("decay_c0")->passed);
    CHECK(std::isfinite(damped.find("decay_c0")->value));

    const KernelReport undamped =
        check_kernel_hypotheses(KernelSpec::constant(1.0, 0.0, 1.0), pb.params, pb.coef, pb.grid, pb.tgrid);
    CHECK(undamped.find("wellposed")->passed);
    CHECK(undamped.find("wellposed")->value == doctest::Approx(2.0).epsilon(1e-6));
    CHECK_FALSE(undamped.find("decay_c0")->passed);
    CHECK(undamped.find("decay_c0")->infinite);
}

TEST_CASE("zero kernel reduces the fixed point to the local driver")
{
    const ControlProblem pb = make_problem();
    const Profile y0 = sine(pb.grid);
    const NonlocalResult nl = fixed_point_control(y0, pb);
    const ControlResult local = null_control_nonhom(y0, Field(), pb);
    CHECK(nl.trace.iterations() == 1);
    CHECK(nl.trace.converged);
    CHECK((nl.control.u - local.u).cwiseAbs().maxCoeff() == 0.0);
    CHECK(nl.control.final_ratio == local.final_ratio);
}

TEST_CASE("small damped kernel converges")
{
    ControlProblem pb = make_problem();
    pb.kernel = KernelSpec::constant(0.5, pb.params.c0 * pb.params.s + 1.0, 1.0);
    const NonlocalResult nl = fixed_point_control(sine(pb.grid), pb);
    CHECK(nl.hypotheses_passed);
    CHECK(nl.trace.converged);
    CHECK(nl.trace.iterations() <= 30);
    CHECK(nl.trace.records.back().relative_change <= 1e-6);
    CHECK(nl.trace.inside_ball);
    CHECK(nl.control.final_ratio <= 1e-2);
    for (const auto& r : nl.trace.records)
        if (std::isfinite(r.contraction)) CHECK(r.contraction < 1.0);
}

TEST_CASE("a strong damped kernel contracts")
{
    // the decay factor is below 1e-16 everywhere, so a large amplitude is needed to see iterations
    ControlProblem pb = make_problem();
    pb.kernel = KernelSpec::constant(1e15, pb.params.c0 * pb.params.s + 1.0, 1.0);
    const NonlocalResult nl = fixed_point_control(sine(pb.grid), pb);
    CHECK(nl.hypotheses_passed);
    CHECK(nl.trace.converged);
    CHECK(nl.trace.iterations() >= 3);
    int seen = 0;
    for (const auto& r : nl.trace.records) {
        if (!std::isfinite(r.contraction)) continue;
        ++seen;
        CHECK(r.contraction < 1.0);
    }
    CHECK(seen >= 1);
    CHECK(nl.control.final_ratio <= 1e-2);
}

TEST_CASE("undamped kernel runs with the warning flag")
{
    ControlProblem pb = make_problem();
    pb.kernel = KernelSpec::constant(0.5, 0.0, 1.0);
    const NonlocalResult nl = fixed_point_control(sine(pb.grid), pb);
    CHECK_FALSE(nl.hypotheses_passed);
    CHECK(nl.trace.iterations() >= 1);
}

TEST_CASE("two-phase control")
{
    ControlProblem pb = make_problem();
    pb.kernel = KernelSpec::constant(0.5, pb.params.c0 * pb.params.s + 1.0, 1.0);
    const Profile y0 = sine(pb.grid);
    const NonlocalResult tp = two_phase_control(y0, pb);
    const NonlocalResult fp = fixed_point_control(y0, pb);
    CHECK(tp.t0 == doctest::Approx(0.25));
    CHECK(tp.control.final_ratio <= 1e-2);
    CHECK(tp.gradient_norm_t0 < tp.gradient_norm_y0);
    const double y0n = std::sqrt(weighted_inner(y0, y0, pb.coef, pb.grid, Weight::InvA));
    const Profile a = tp.control.y.row(pb.tgrid.m).transpose(), b = fp.control.y.row(pb.tgrid.m).transpose();
    CHECK(std::sqrt(weighted_inner(a - b, a - b, pb.coef, pb.grid, Weight::InvA)) <= 1e-2 * y0n);
    for (int k = 0; k < 16; ++k) CHECK(tp.control.u.row(k).cwiseAbs().maxCoeff() == 0.0);

    Profile jump = Profile::Zero(pb.grid.size());
    for (int i = 0; i < pb.grid.size(); ++i) jump[i] = pb.grid.x[i] > 0.2 && pb.grid.x[i] < 0.6 ? 1.0 : 0.0;
    const NonlocalResult tj = two_phase_control(jump, pb);
    CHECK(tj.control.final_ratio <= 1e-2);
    CHECK(tj.gradient_norm_t0 < tj.gradient_norm_y0);
}

TEST_CASE("supported-kernel shortcut")
{
    ControlProblem pb = make_problem();
    const Profile y0 = sine(pb.grid);
    const NonlocalResult z = supported_kernel_shortcut(y0, pb);
    CHECK((z.control.u - z.v_local).cwiseAbs().maxCoeff() == 0.0);

    pb.kernel = bump_kernel(0.5, pb.params.c0 * pb.params.s + 1.0);
    CHECK(kernel_leak_outside(pb.kernel, pb.region, pb.grid, pb.tgrid) == 0.0);
    const NonlocalResult sc = supported_kernel_shortcut(y0, pb);
    CHECK(sc.trace.iterations() == 0);
    CHECK(sc.control.final_ratio <= 1e-2);
    for (int i = 0; i < pb.grid.size(); ++i)
        if (!pb.region.contains(pb.grid.x[i]))
            CHECK((sc.control.u.col(i) - sc.v_local.col(i)).cwiseAbs().maxCoeff() == 0.0);

    ControlProblem leaky = pb;
    leaky.kernel = KernelSpec::constant(0.5, 1.0, 1.0);
    CHECK_THROWS_AS(supported_kernel_shortcut(y0, leaky), std::invalid_argument);
}
