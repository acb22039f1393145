#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "degen/pde.hpp"

#include <cmath>
#include <numbers>

using namespace degen;

namespace {

constexpr double pi = std::numbers::pi;

Profile sine(const SpatialGrid& grid, int k = 1)
{
    Profile y(grid.size());
    for (int i = 0; i < grid.size(); ++i) y[i] = std::sin(k * pi * grid.x[i]);
    return y;
}

Eigen::VectorXd omega_mask(const SpatialGrid& grid, double lo, double hi)
{
    Eigen::VectorXd m(grid.size());
    for (int i = 0; i < grid.size(); ++i) m[i] = grid.x[i] > lo && grid.x[i] < hi ? 1.0 : 0.0;
    return m;
}

double manufactured_error(int m)
{
    const auto grid = SpatialGrid::uniform(400);
    const auto tgrid = TimeGrid::make(1.0, m);
    const auto coef = DegenerateCoefficient::power(Form::NonDivergence, 1.0);
    const auto op = assemble_operator(coef, grid, Form::NonDivergence);
    Field f(tgrid.levels(), grid.size());
    for (int k = 0; k < tgrid.levels(); ++k) {
        const double e = std::exp(-tgrid.time(k));
        for (int i = 0; i < grid.size(); ++i) {
            const double x = grid.x[i];
            f(k, i) = -e * std::sin(pi * x) + x * pi * pi * e * std::sin(pi * x);
        }
    }
    const Field y = solve_forward(sine(grid), f, Field(), KernelSpec::zero(), op, grid, tgrid,
                                  Eigen::VectorXd::Zero(grid.size()));
    double err = 0.0;
    for (int k = 0; k < tgrid.levels(); ++k) {
        const Profile exact = std::exp(-tgrid.time(k)) * sine(grid);
        err = std::max(err, (y.row(k).transpose() - exact).cwiseAbs().maxCoeff());
    }
    return err;
}

}  // namespace

TEST_CASE("a = 1 reduces both forms to the 3-point Laplacian")
{
    const auto grid = SpatialGrid::uniform(20);
    const double h2 = 1.0 / (grid.h[0] * grid.h[0]);
    for (Form form : {Form::NonDivergence, Form::DivergenceWD}) {
        const auto op = assemble_operator(DegenerateCoefficient::power(form, 0.0), grid, form);
        for (int i = 1; i < grid.n; ++i) {
            CHECK(op.A.lower[i] == doctest::Approx(h2));
            CHECK(op.A.diag[i] == doctest::Approx(-2.0 * h2));
            CHECK(op.A.upper[i] == doctest::Approx(h2));
        }
        CHECK(op.active[0] == 0.0);
        CHECK(op.active[grid.n] == 0.0);
    }
}

TEST_CASE("strongly degenerate operator conserves constants")
{
    const auto grid = SpatialGrid::uniform(32);
    const auto op = assemble_operator(DegenerateCoefficient::power(Form::DivergenceSD, 1.5), grid, Form::DivergenceSD);
    CHECK(op.first == 0);
    Profile one = Profile::Ones(grid.size());
    one[grid.n] = 0.0;
    const Profile r = op.A.apply(one);
    for (int i = 0; i < grid.n - 1; ++i) CHECK(std::abs(r[i]) <= 1e-9);
    CHECK(std::abs(r[grid.n - 1]) > 1.0);
}

TEST_CASE("second difference of a quadratic is exact")
{
    const auto grid = SpatialGrid::uniform(16);
    const auto op = assemble_operator(DegenerateCoefficient::power(Form::NonDivergence, 1.0), grid, Form::NonDivergence);
    Profile v(grid.size());
    for (int i = 0; i < grid.size(); ++i) v[i] = grid.x[i] * (1.0 - grid.x[i]);
    const Profile Av = op.A.apply(v);
    for (int i = 1; i < grid.n; ++i) CHECK(Av[i] == doctest::Approx(-2.0 * grid.x[i]).epsilon(1e-12));
}

TEST_CASE("zero data give zero fields")
{
    const auto grid = SpatialGrid::uniform(16);
    const auto tgrid = TimeGrid::make(1.0, 8);
    const auto coef = DegenerateCoefficient::power(Form::NonDivergence, 0.5);
    const auto op = assemble_operator(coef, grid, Form::NonDivergence);
    const Field y = solve_forward(Profile::Zero(grid.size()), Field(), Field(), KernelSpec::zero(), op, grid, tgrid,
                                  Eigen::VectorXd::Zero(grid.size()));
    CHECK(y.cwiseAbs().maxCoeff() == 0.0);
    const Field v = solve_adjoint(Profile::Zero(grid.size()), Field(), KernelSpec::zero(), op, grid, tgrid);
    CHECK(v.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("implicit Euler is dissipative in the natural norm")
{
    const auto grid = SpatialGrid::uniform(64);
    const auto tgrid = TimeGrid::make(1.0, 128);
    for (auto [form, alpha] : {std::pair{Form::NonDivergence, 0.5}, std::pair{Form::DivergenceWD, 0.5},
                               std::pair{Form::DivergenceSD, 1.5}}) {
        const auto coef = DegenerateCoefficient::power(form, alpha);
        const auto op = assemble_operator(coef, grid, form);
        Profile y0 = sine(grid) + 0.3 * sine(grid, 5);
        y0 = y0.cwiseProduct(op.active);
        const Field y = solve_forward(y0, Field(), Field(), KernelSpec::zero(), op, grid, tgrid,
                                      Eigen::VectorXd::Zero(grid.size()));
        for (int k = 0; k < tgrid.m; ++k)
            CHECK(mass_norm_sq(y.row(k + 1).transpose(), op) < mass_norm_sq(y.row(k).transpose(), op));
    }
}

TEST_CASE("manufactured solution converges at first order in time")
{
    const double e1 = manufactured_error(20);
    const double e2 = manufactured_error(40);
    const double e3 = manufactured_error(80);
    CHECK(e2 < e1);
    CHECK(e3 < e2);
    CHECK(e1 / e2 == doctest::Approx(2.0).epsilon(0.2));
    CHECK(e2 / e3 == doctest::Approx(2.0).epsilon(0.2));
}

TEST_CASE("adjoint is the time reversal of the forward solve for a = 1")
{
    const auto grid = SpatialGrid::uniform(32);
    const auto tgrid = TimeGrid::make(0.5, 40);
    const auto coef = DegenerateCoefficient::power(Form::NonDivergence, 0.0);
    const auto op = assemble_operator(coef, grid, Form::NonDivergence);
    Profile vT = sine(grid) + 0.5 * sine(grid, 3);
    const Field y = solve_forward(vT, Field(), Field(), KernelSpec::zero(), op, grid, tgrid,
                                  Eigen::VectorXd::Zero(grid.size()));
    const Field v = solve_adjoint(vT, Field(), KernelSpec::zero(), op, grid, tgrid);
    for (int k = 0; k <= tgrid.m; ++k)
        CHECK((v.row(k) - y.row(tgrid.m - k)).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("discrete duality holds to O(dt)")
{
    auto defect = [](int m) {
        const auto grid = SpatialGrid::uniform(64);
        const auto tgrid = TimeGrid::make(1.0, m);
        const auto coef = DegenerateCoefficient::power(Form::NonDivergence, 0.5);
        const auto op = assemble_operator(coef, grid, Form::NonDivergence);
        const Eigen::VectorXd mask = omega_mask(grid, 0.3, 0.8);
        Field u(tgrid.levels(), grid.size());
        for (int k = 0; k < tgrid.levels(); ++k) u.row(k) = (std::cos(2.0 * tgrid.time(k)) * sine(grid, 2)).transpose();
        const Profile y0 = sine(grid);
        const Profile vT = sine(grid) - 0.4 * sine(grid, 2);
        const Field y = solve_forward(y0, Field(), u, KernelSpec::zero(), op, grid, tgrid, mask);
        const Field v = solve_adjoint(vT, Field(), KernelSpec::zero(), op, grid, tgrid);
        auto pair = [&](const Eigen::VectorXd& a, const Eigen::VectorXd& b) { return a.cwiseProduct(op.mass).dot(b); };
        const double lhs = pair(y.row(tgrid.m).transpose(), vT) - pair(y0, v.row(0).transpose());
        double rhs = 0.0;
        const Eigen::VectorXd tw = tgrid.trapezoid_weights();
        for (int k = 0; k < tgrid.levels(); ++k)
            rhs += tw[k] * pair(mask.cwiseProduct(u.row(k).transpose()), v.row(k).transpose());
        return std::abs(lhs - rhs);
    };
    const double d1 = defect(50), d2 = defect(100), d3 = defect(200);
    CHECK(d2 < d1);
    CHECK(d3 < d2);
    CHECK(d1 / d2 > 1.6);
    CHECK(d2 / d3 > 1.6);
}

TEST_CASE("Galerkin basis for a = 1")
{
    const auto grid = SpatialGrid::uniform(128);
    const auto basis = galerkin_eigenbasis(DegenerateCoefficient::power(Form::NonDivergence, 0.0), grid, 10);
    for (int k = 1; k <= 5; ++k) {
        const double exact = std::pow(k * pi, 2);
        CHECK(std::abs(basis.eigenvalues[k - 1] - exact) <= 0.01 * exact);
    }
}

TEST_CASE("Galerkin modes are orthonormal and satisfy the Rayleigh identity")
{
    const auto grid = SpatialGrid::uniform(96);
    const auto coef = DegenerateCoefficient::power(Form::NonDivergence, 0.5);
    const auto basis = galerkin_eigenbasis(coef, grid, 12);
    const Eigen::MatrixXd G = basis.modes.transpose() * basis.mass.asDiagonal() * basis.modes;
    CHECK((G - Eigen::MatrixXd::Identity(12, 12)).cwiseAbs().maxCoeff() <= 1e-10);
    for (int k = 0; k < 12; ++k)
        CHECK(gradient_norm_sq(basis.modes.col(k), grid) == doctest::Approx(basis.eigenvalues[k]).epsilon(1e-10));
}

TEST_CASE("Galerkin single-mode decay")
{
    const auto grid = SpatialGrid::uniform(64);
    const auto tgrid = TimeGrid::make(0.1, 1000);
    const auto coef = DegenerateCoefficient::power(Form::NonDivergence, 0.5);
    const auto basis = galerkin_eigenbasis(coef, grid, 8);
    const Profile w1 = basis.modes.col(0);
    const Field y = solve_galerkin(w1, Field(), Field(), KernelSpec::zero(), basis, grid, tgrid,
                                   Eigen::VectorXd::Zero(grid.size()));
    const Eigen::MatrixXd proj = basis.modes.transpose() * basis.mass.asDiagonal();
    for (int k : {100, 500, 1000}) {
        const Eigen::VectorXd a = proj * y.row(k).transpose();
        CHECK(a[0] == doctest::Approx(std::exp(-basis.eigenvalues[0] * tgrid.time(k))).epsilon(1e-3));
        CHECK(a.tail(7).cwiseAbs().maxCoeff() <= 1e-12);
    }
}

TEST_CASE("full Galerkin basis reproduces the finite-difference solve")
{
    const auto grid = SpatialGrid::uniform(48);
    const auto tgrid = TimeGrid::make(1.0, 64);
    const auto coef = DegenerateCoefficient::power(Form::NonDivergence, 0.5);
    const auto op = assemble_operator(coef, grid, Form::NonDivergence);
    const auto basis = galerkin_eigenbasis(coef, grid, grid.n - 1);
    const Eigen::VectorXd mask = omega_mask(grid, 0.3, 0.8);
    Field u(tgrid.levels(), grid.size());
    for (int k = 0; k < tgrid.levels(); ++k) u.row(k) = (std::sin(3.0 * tgrid.time(k)) * sine(grid, 2)).transpose();
    const Profile y0 = sine(grid) + 0.2 * sine(grid, 4);
    const Field a = solve_forward(y0, Field(), u, KernelSpec::zero(), op, grid, tgrid, mask);
    const Field b = solve_galerkin(y0, Field(), u, KernelSpec::zero(), basis, grid, tgrid, mask);
    CHECK(std::sqrt(space_time_norm_sq(a - b, op, tgrid) / space_time_norm_sq(a, op, tgrid)) <= 1e-6);

    const Field z = solve_galerkin(Profile::Zero(grid.size()), Field(), Field(), KernelSpec::zero(), basis, grid, tgrid, mask);
    CHECK(z.cwiseAbs().maxCoeff() == 0.0);
}
