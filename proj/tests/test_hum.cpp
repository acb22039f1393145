#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "degen/hum.hpp"

#include <cmath>
#include <numbers>
#include <random>

using namespace degen;

namespace {

constexpr double pi = std::numbers::pi;

ControlProblem make_problem(Form form, double alpha, int n, int m)
{
    ControlProblem pb{DegenerateCoefficient::power(form, alpha), ControlRegion::make(0.3, 0.8), SpatialGrid::uniform(n),
                      TimeGrid::make(1.0, m), {}, KernelSpec::zero()};
    pb.params = choose_parameters(pb.coef, pb.region, pb.grid, pb.tgrid, pb.branch());
    return pb;
}

Profile sine(const SpatialGrid& grid)
{
    Profile y(grid.size());
    for (int i = 0; i < grid.size(); ++i) y[i] = std::sin(pi * grid.x[i]);
    return y;
}

Field random_field(const HumSystem& sys, std::mt19937_64& rng)
{
    std::normal_distribution<double> nd;
    Field v = Field::Zero(sys.tgrid.levels(), sys.grid.size());
    for (int k = 0; k < v.rows(); ++k)
        for (int i = sys.op.first; i <= sys.op.last; ++i) v(k, i) = nd(rng);
    return v;
}

Eigen::VectorXd flatten(const Field& v, const HumSystem& sys)
{
    const int Na = sys.op.last - sys.op.first + 1;
    Eigen::VectorXd out(v.rows() * Na);
    for (int k = 0; k < v.rows(); ++k)
        for (int i = sys.op.first; i <= sys.op.last; ++i) out[k * Na + i - sys.op.first] = v(k, i);
    return out;
}

double euclid(const Field& a, const Field& b) { return a.cwiseProduct(b).sum(); }

}  // namespace

TEST_CASE("kappa is symmetric and positive definite on a small grid")
{
    for (auto [form, alpha] : {std::pair{Form::NonDivergence, 0.5}, std::pair{Form::DivergenceWD, 0.5},
                               std::pair{Form::DivergenceSD, 1.5}}) {
        const HumSystem sys = make_hum_system(make_problem(form, alpha, 8, 8));
        std::mt19937_64 rng(7);
        for (int r = 0; r < 5; ++r) {
            const Field v1 = random_field(sys, rng), v2 = random_field(sys, rng);
            const double a = euclid(apply_kappa(v1, sys), v2);
            const double b = euclid(v1, apply_kappa(v2, sys));
            CHECK(std::abs(a - b) <= 1e-10 * std::max(std::abs(a), std::abs(b)));
            CHECK(kappa_form(v1, v2, sys) == doctest::Approx(a).epsilon(1e-10));
        }
        const Eigen::MatrixXd K = Eigen::MatrixXd(assemble_kappa(sys));
        CHECK((K - K.transpose()).cwiseAbs().maxCoeff() <= 1e-12 * K.cwiseAbs().maxCoeff());
        const Field v = random_field(sys, rng);
        const Eigen::VectorXd dense = K * flatten(v, sys);
        const Eigen::VectorXd free = flatten(apply_kappa(v, sys), sys);
        CHECK((dense - free).norm() <= 1e-12 * dense.norm());
        // the weights span hundreds of orders of magnitude: the dense spectrum is only resolved to round-off,
        // so positivity is checked on the form for every eigenvector
        const Eigen::VectorXd scale = K.diagonal().cwiseSqrt().cwiseInverse();
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(scale.asDiagonal() * K * scale.asDiagonal());
        CHECK(eig.eigenvalues().minCoeff() >= -1e-14 * eig.eigenvalues().maxCoeff());
        const int Na = sys.op.last - sys.op.first + 1;
        for (int c = 0; c < eig.eigenvectors().cols(); ++c) {
            const Eigen::VectorXd x = scale.cwiseProduct(eig.eigenvectors().col(c));
            Field w = Field::Zero(sys.tgrid.levels(), sys.grid.size());
            for (int k = 0; k < w.rows(); ++k)
                for (int i = sys.op.first; i <= sys.op.last; ++i) w(k, i) = x[k * Na + i - sys.op.first];
            CHECK(kappa_form(w, w, sys) > 0.0);
        }
        CHECK(euclid(apply_kappa(Field::Zero(9, 9), sys), Field::Ones(9, 9)) == 0.0);
    }
}

TEST_CASE("linear form structure")
{
    const HumSystem sys = make_hum_system(make_problem(Form::NonDivergence, 0.5, 16, 16));
    const Profile y0 = sine(sys.grid);
    CHECK(assemble_ell(Field(), Profile::Zero(sys.grid.size()), sys).cwiseAbs().maxCoeff() == 0.0);
    const Field b = assemble_ell(Field(), y0, sys);
    CHECK(b.row(0).cwiseAbs().maxCoeff() > 0.0);
    CHECK(b.bottomRows(b.rows() - 1).cwiseAbs().maxCoeff() == 0.0);

    Field f1(sys.tgrid.levels(), sys.grid.size()), f2(sys.tgrid.levels(), sys.grid.size());
    for (int k = 0; k < f1.rows(); ++k) {
        const double r = 1.0 - sys.tgrid.time(k);
        const double d = r > 0 ? std::exp(-20.0 / (r * r)) : 0.0;
        f1.row(k) = d * sine(sys.grid).transpose();
        f2.row(k) = d * std::cos(3.0 * sys.tgrid.time(k)) * sys.grid.x.transpose();
    }
    const Field sum = assemble_ell(f1 + f2, y0, sys);
    const Field parts = assemble_ell(f1, y0, sys) + assemble_ell(f2, Profile::Zero(sys.grid.size()), sys);
    CHECK((sum - parts).cwiseAbs().maxCoeff() <= 1e-14 * sum.cwiseAbs().maxCoeff());
}

TEST_CASE("dual solve for zero data")
{
    const HumSystem sys = make_hum_system(make_problem(Form::NonDivergence, 0.5, 16, 16));
    const DualSolution d = solve_dual(Field(), Profile::Zero(sys.grid.size()), sys);
    CHECK(d.iterations == 0);
    CHECK(d.v.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("preconditioned CG reduces the energy-norm error monotonically")
{
    const HumSystem sys = make_hum_system(make_problem(Form::NonDivergence, 0.5, 8, 8));
    const Profile y0 = sine(sys.grid);
    const Eigen::MatrixXd K = Eigen::MatrixXd(assemble_kappa(sys));
    const Eigen::VectorXd b = flatten(assemble_ell(Field(), y0, sys), sys);
    const Eigen::VectorXd exact = K.ldlt().solve(b);
    CgOptions opts;
    opts.preconditioner = Preconditioner::Jacobi;
    opts.record_history = true;
    opts.tol = 1e-12;
    opts.max_iter = 200;
    const DualSolution d = solve_dual(Field(), y0, sys, opts);
    REQUIRE(d.iterates.size() >= 3);
    double prev = INFINITY;
    for (const Field& it : d.iterates) {
        const Eigen::VectorXd e = flatten(it, sys) - exact;
        const double energy = e.dot(K * e);
        CHECK(energy <= prev * (1.0 + 1e-8));
        prev = energy;
    }
}

TEST_CASE("dual solution satisfies the variational equation")
{
    const HumSystem sys = make_hum_system(make_problem(Form::NonDivergence, 0.5, 8, 8));
    const Profile y0 = sine(sys.grid);
    const Field b = assemble_ell(Field(), y0, sys);
    const DualSolution d = solve_dual(Field(), y0, sys);
    REQUIRE(d.converged);
    std::mt19937_64 rng(11);
    for (int r = 0; r < 10; ++r) {
        const Field w = random_field(sys, rng);
        CHECK(std::abs(kappa_form(d.v, w, sys) - euclid(b, w)) <= 1e-8 * b.norm() * w.norm());
    }
}

TEST_CASE("control extraction")
{
    const ControlProblem pb = make_problem(Form::NonDivergence, 0.5, 32, 64);
    const HumSystem sys = make_hum_system(pb);
    const Profile zero = Profile::Zero(sys.grid.size());
    const ExtractedControl ex0 = extract_control(Field::Zero(sys.tgrid.levels(), sys.grid.size()), zero, sys);
    CHECK(ex0.u.cwiseAbs().maxCoeff() == 0.0);
    CHECK(ex0.y_pred.cwiseAbs().maxCoeff() == 0.0);

    const ControlResult r = null_control_nonhom(sine(sys.grid), Field(), sys);
    for (int i = 0; i < sys.grid.size(); ++i)
        if (!pb.region.contains(sys.grid.x[i])) CHECK(r.u.col(i).cwiseAbs().maxCoeff() == 0.0);
    CHECK(r.u.row(sys.tgrid.m).cwiseAbs().maxCoeff() <= 1e-12 * r.u.cwiseAbs().maxCoeff());
}

TEST_CASE("zero data give the zero control")
{
    const HumSystem sys = make_hum_system(make_problem(Form::NonDivergence, 0.5, 16, 32));
    const ControlResult r = null_control_nonhom(Profile::Zero(sys.grid.size()), Field(), sys);
    CHECK(r.u.cwiseAbs().maxCoeff() == 0.0);
    CHECK(r.final_ratio == 0.0);
}

TEST_CASE("J is quadratic")
{
    const HumSystem sys = make_hum_system(make_problem(Form::NonDivergence, 0.5, 16, 32));
    std::mt19937_64 rng(3);
    const Field y = random_field(sys, rng), u = random_field(sys, rng);
    CHECK(evaluate_J(Field::Zero(y.rows(), y.cols()), Field::Zero(y.rows(), y.cols()), sys, TimeLayout::Levels) == 0.0);
    CHECK(evaluate_J(2.0 * y, 2.0 * u, sys, TimeLayout::Levels) ==
          doctest::Approx(4.0 * evaluate_J(y, u, sys, TimeLayout::Levels)).epsilon(1e-13));
}

TEST_CASE("null control of a sine profile on all three forms")
{
    for (auto [form, alpha] : {std::pair{Form::NonDivergence, 0.5}, std::pair{Form::DivergenceWD, 0.5},
                               std::pair{Form::DivergenceSD, 1.5}}) {
        const HumSystem sys = make_hum_system(make_problem(form, alpha, 32, 64));
        Profile y0 = sine(sys.grid).cwiseProduct(sys.op.active);
        const ControlResult r = null_control_nonhom(y0, Field(), sys);
        CHECK(r.final_ratio <= 1e-2);
        CHECK(std::isfinite(r.J));
        if (form == Form::NonDivergence) CHECK(std::log(r.estimate_lhs) <= r.log_estimate_rhs);
    }
}

TEST_CASE("admissible source with zero initial data")
{
    const ControlProblem pb = make_problem(Form::NonDivergence, 0.5, 32, 64);
    const HumSystem sys = make_hum_system(pb);
    const double C0 = 2.0 * pb.params.s * pb.params.lambda * pb.params.p_norm * 16.0;
    Field f(sys.tgrid.levels(), sys.grid.size());
    for (int k = 0; k < f.rows(); ++k) {
        const double r = 1.0 - sys.tgrid.time(k);
        f.row(k) = (r > 0 ? std::exp(-C0 / (r * r)) : 0.0) * sine(sys.grid).transpose();
    }
    const ControlResult r = null_control_nonhom(Profile::Zero(sys.grid.size()), f, sys);
    CHECK(std::isfinite(r.log_weighted_source));
    CHECK(r.final_ratio <= 1e-2);

    Field g(sys.tgrid.levels(), sys.grid.size());
    for (int k = 0; k < g.rows(); ++k) g.row(k) = sine(sys.grid).transpose();
    CHECK_THROWS_AS(null_control_nonhom(Profile::Zero(sys.grid.size()), g, sys), std::invalid_argument);
    CHECK(log_weighted_source_norm(Field::Zero(g.rows(), g.cols()), sys) == -INFINITY);
}
