#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "degen/model.hpp"

#include <cmath>
#include <numbers>

using namespace degen;

namespace {

constexpr double pi = std::numbers::pi;

Profile sample(const SpatialGrid& grid, double (*f)(double))
{
    Profile y(grid.size());
    for (int i = 0; i < grid.size(); ++i) y[i] = f(grid.x[i]);
    return y;
}

double bubble(double x) { return x * (1.0 - x); }
double sine(double x) { return std::sin(pi * x); }

}  // namespace

TEST_CASE("validate_coefficient accepts x^(1/2) in non-divergence form")
{
    const auto grid = SpatialGrid::uniform(64);
    const auto rep = validate_coefficient(DegenerateCoefficient::power(Form::NonDivergence, 0.5), grid);
    CHECK(rep.passed());
    const CheckEntry* e = rep.find("inv_a_integrable");
    REQUIRE(e != nullptr);
    CHECK(std::isfinite(e->value));
}

TEST_CASE("validate_coefficient rejects x^2 in non-divergence form")
{
    const auto grid = SpatialGrid::uniform(64);
    const auto rep = validate_coefficient(DegenerateCoefficient::power(Form::NonDivergence, 2.0), grid);
    CHECK_FALSE(rep.passed());
    const CheckEntry* e = rep.find("alpha_range");
    REQUIRE(e != nullptr);
    CHECK_FALSE(e->passed);
    CHECK(e->detail.find("alpha out of range") != std::string::npos);
}

TEST_CASE("x a' <= alpha a holds with equality for a = x")
{
    const auto grid = SpatialGrid::uniform(64);
    const auto rep = validate_coefficient(DegenerateCoefficient::power(Form::NonDivergence, 1.0), grid);
    const CheckEntry* e = rep.find("xa_prime_le_alpha_a");
    REQUIRE(e != nullptr);
    CHECK(e->passed);
    CHECK(std::abs(e->value) < 1e-12);
}

TEST_CASE("form ranges for the divergence cases")
{
    const auto grid = SpatialGrid::uniform(64);
    CHECK(validate_coefficient(DegenerateCoefficient::power(Form::DivergenceWD, 0.5), grid).passed());
    CHECK(validate_coefficient(DegenerateCoefficient::power(Form::DivergenceSD, 1.5), grid).passed());
    CHECK_FALSE(validate_coefficient(DegenerateCoefficient::power(Form::DivergenceWD, 1.5), grid).passed());
    CHECK_FALSE(validate_coefficient(DegenerateCoefficient::power(Form::DivergenceSD, 0.5), grid).passed());
}

TEST_CASE("weighted_inner against exact integrals")
{
    const auto grid = SpatialGrid::uniform(512);
    const Profile u = sample(grid, bubble);
    // ∫ x(1-x)^2 dx = 1/12
    const double v1 = weighted_inner(u, u, DegenerateCoefficient::power(Form::NonDivergence, 1.0), grid, Weight::InvA);
    CHECK(v1 == doctest::Approx(1.0 / 12.0).epsilon(1e-4));

    const Profile s = sample(grid, sine);
    const double v2 = weighted_inner(s, s, DegenerateCoefficient::power(Form::DivergenceWD, 0.0), grid, Weight::One);
    CHECK(v2 == doctest::Approx(0.5).epsilon(1e-5));

    CHECK(weighted_inner(Profile::Zero(grid.size()), u, DegenerateCoefficient::power(Form::NonDivergence, 1.0), grid,
                         Weight::InvA) == 0.0);
}

TEST_CASE("apply_nonlocal on constant and zero kernels")
{
    const auto grid = SpatialGrid::uniform(512);
    const Profile s = sample(grid, sine);
    const Profile z = apply_nonlocal(KernelSpec::zero(), s, 0.3, grid);
    CHECK(z.cwiseAbs().maxCoeff() == 0.0);

    const Profile c = apply_nonlocal(KernelSpec::constant(1.0, 0.0, 1.0), s, 0.3, grid);
    for (int i = 0; i < grid.size(); ++i) CHECK(c[i] == doctest::Approx(2.0 / pi).epsilon(1e-5));
}

TEST_CASE("separable kernel agrees with dense quadrature")
{
    const auto grid = SpatialGrid::clustered(40, 0.3);
    auto k1 = [](double x) { return std::exp(-x) * (1.0 + x * x); };
    auto k2 = [](double t) { return std::cos(2.0 * t) + 0.3; };
    const KernelSpec K = KernelSpec::separable(k1, k2, 0.7, 1.0);
    Profile y(grid.size());
    for (int i = 0; i < grid.size(); ++i) y[i] = std::sin(3.0 * grid.x[i]) + grid.x[i];

    const double t = 0.4;
    const double factor = std::exp(-0.7 / ((1.0 - t) * (1.0 - t)));
    // trapezoid weights on the nonuniform grid, built here independently
    Eigen::VectorXd w = Eigen::VectorXd::Zero(grid.size());
    for (int i = 0; i + 1 < grid.size(); ++i) {
        const double h = grid.x[i + 1] - grid.x[i];
        w[i] += 0.5 * h;
        w[i + 1] += 0.5 * h;
    }
    Eigen::MatrixXd dense(grid.size(), grid.size());
    for (int i = 0; i < grid.size(); ++i)
        for (int j = 0; j < grid.size(); ++j) dense(i, j) = factor * k1(grid.x[i]) * k2(grid.x[j]);
    const Eigen::VectorXd expected = dense * w.cwiseProduct(y);
    const Profile got = apply_nonlocal(K, y, t, grid);
    CHECK((got - expected).norm() <= 1e-13 * expected.norm());

    const Eigen::VectorXd expected_t = dense.transpose() * w.cwiseProduct(y);
    const Profile got_t = apply_nonlocal(K, y, t, grid, true);
    CHECK((got_t - expected_t).norm() <= 1e-13 * expected_t.norm());

    Eigen::JacobiSVD<Eigen::MatrixXd> svd(K.matrix(t, grid));
    CHECK(svd.singularValues()[1] <= 1e-12 * svd.singularValues()[0]);
}

TEST_CASE("kernel_weighted_sup")
{
    const auto grid = SpatialGrid::uniform(128);
    const auto tgrid = TimeGrid::make(1.0, 128);
    const auto coef = DegenerateCoefficient::power(Form::NonDivergence, 0.5);

    CHECK(kernel_weighted_sup(KernelSpec::zero(), coef, grid, tgrid, 3.0, 0.5).value == 0.0);

    // exponent cancels, leaving κ0² ∫∫ 1/a = 2
    const double c_exp = 3.0, s = 0.5;
    const KernelSup sup = kernel_weighted_sup(KernelSpec::constant(1.0, c_exp * s / 2.0, 1.0), coef, grid, tgrid, c_exp, s);
    CHECK_FALSE(sup.infinite);
    CHECK(sup.value == doctest::Approx(2.0).epsilon(1e-6));

    const KernelSup decayed = kernel_weighted_sup(KernelSpec::constant(1.0, c_exp * s, 1.0), coef, grid, tgrid, c_exp, s);
    CHECK(decayed.value == doctest::Approx(2.0 * std::exp(-c_exp * s)).epsilon(1e-6));

    const KernelSup blow = kernel_weighted_sup(KernelSpec::constant(1.0, 0.0, 1.0), coef, grid, tgrid, c_exp, s);
    CHECK(blow.infinite);
}

TEST_CASE("inverse coefficient weights integrate 1/a exactly for constants")
{
    const auto grid = SpatialGrid::uniform(64);
    const Eigen::VectorXd q = inverse_coefficient_weights(DegenerateCoefficient::power(Form::NonDivergence, 0.5), grid);
    CHECK(q.sum() == doctest::Approx(2.0).epsilon(1e-10));
    const Eigen::VectorXd qx = inverse_coefficient_weights(DegenerateCoefficient::power(Form::NonDivergence, 1.0), grid);
    CHECK(std::isinf(qx[0]));
}
