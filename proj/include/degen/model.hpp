#pragma once

#include <Eigen/Dense>

#include <functional>
#include <string>
#include <vector>

namespace degen {

/// One value per spatial node.
using Profile = Eigen::VectorXd;
/// Row k holds the profile at time level k.
using Field = Eigen::MatrixXd;

enum class Form { NonDivergence, DivergenceWD, DivergenceSD };
enum class Branch { NonDiv, Div };
enum class Weight { One, InvA };

inline Branch branch_of(Form form)
{
    return form == Form::NonDivergence ? Branch::NonDiv : Branch::Div;
}

/// Natural pairing of each form: L²_{1/a} for non-divergence, plain L² otherwise.
inline Weight natural_weight(Form form)
{
    return form == Form::NonDivergence ? Weight::InvA : Weight::One;
}

std::string to_string(Form form);
Form form_from_string(const std::string& name);

struct SpatialGrid {
    int n = 0;
    Eigen::VectorXd x;
    Eigen::VectorXd h;

    static SpatialGrid uniform(int n);
    /// Cell widths grow geometrically away from x = 0 by 1/ratio per cell.
    static SpatialGrid clustered(int n, double ratio);

    int size() const { return n + 1; }
    /// Trapezoid weights w_i with Σ w_i F_i ≈ ∫ F.
    Eigen::VectorXd trapezoid_weights() const;
};

struct TimeGrid {
    double start = 0.0;
    double T = 1.0;
    int m = 2;

    static TimeGrid make(double T, int m, double start = 0.0);

    double length() const { return T - start; }
    double dt() const { return (T - start) / m; }
    double time(int k) const { return start + k * dt(); }
    double midpoint(int k) const { return start + (k + 0.5) * dt(); }
    int levels() const { return m + 1; }
    /// Trapezoid weights in time (Δt/2 at both ends).
    Eigen::VectorXd trapezoid_weights() const;
};

struct DegenerateCoefficient {
    Form form = Form::NonDivergence;
    double alpha = 0.5;
    double beta_near0 = 0.0;
    bool power_law = true;
    double scale = 1.0;
    std::vector<double> table_x;
    std::vector<double> table_a;

    static DegenerateCoefficient power(Form form, double alpha, double scale = 1.0);
    static DegenerateCoefficient tabulated(Form form, double alpha, std::vector<double> xs,
                                           std::vector<double> as);

    double operator()(double x) const;
    double derivative(double x) const;
    /// x a'(x) / a(x); the x = 0 value is the degeneracy exponent.
    double log_slope(double x) const;
    Eigen::VectorXd sample(const SpatialGrid& grid) const;
};

struct CheckEntry {
    std::string name;
    bool passed = true;
    double value = 0.0;
    std::string detail;
};

struct ValidationReport {
    std::vector<CheckEntry> entries;
    bool passed() const;
    const CheckEntry* find(const std::string& name) const;
};

ValidationReport validate_coefficient(const DegenerateCoefficient& coef, const SpatialGrid& grid);

struct ControlRegion {
    double lo = 0.3;
    double hi = 0.8;
    double inner_lo = 0.425;
    double inner_hi = 0.675;

    /// ω̃ defaults to the middle half of ω.
    static ControlRegion make(double lo, double hi);
    static ControlRegion make(double lo, double hi, double inner_lo, double inner_hi);

    bool contains(double x) const { return x > lo && x < hi; }
    Eigen::VectorXd mask(const SpatialGrid& grid) const;
};

struct KernelSpec {
    enum class Variant { Zero, ConstantTimesDecay, SeparableDecay, Tabulated };

    Variant variant = Variant::Zero;
    double kappa0 = 0.0;
    double decay = 0.0;
    double T = 1.0;
    std::function<double(double)> k1;
    std::function<double(double)> k2;
    bool support_in_omega = false;

    /// Tabulated kernels: one (n+1)x(n+1) matrix K(t, x_i, τ_j) per stored time.
    std::vector<double> table_times;
    std::vector<Eigen::MatrixXd> table_values;

    static KernelSpec zero();
    static KernelSpec constant(double kappa0, double decay, double T);
    static KernelSpec separable(std::function<double(double)> k1, std::function<double(double)> k2,
                                double decay, double T);
    static KernelSpec tabulated(std::vector<double> times, std::vector<Eigen::MatrixXd> values,
                                double T);

    bool is_zero() const;
    double decay_factor(double t) const;
    /// Dense K(t, x_i, τ_j).
    Eigen::MatrixXd matrix(double t, const SpatialGrid& grid) const;
};

Profile apply_nonlocal(const KernelSpec& K, const Profile& y, double t, const SpatialGrid& grid,
                       bool transpose = false);

double weighted_inner(const Profile& u, const Profile& v, const DegenerateCoefficient& coef,
                      const SpatialGrid& grid, Weight weight);

/// Node weights q_i with Σ q_i F_i = ∫ F̂/a for F̂ the piecewise-linear interpolant of F.
/// Node 0 carries +inf when 1/a is not integrable against the first hat function.
Eigen::VectorXd inverse_coefficient_weights(const DegenerateCoefficient& coef, const SpatialGrid& grid);

enum class KernelNorm { SquaredInvA, Squared, SupAbs };

struct KernelSup {
    double value = 0.0;
    bool infinite = false;
    bool lower_bound = false;
};

/// sup over t in [start, T) of e^{c_exp s/(T-t)²} N(K(t)) where N is the chosen spatial norm.
KernelSup kernel_weighted_sup(const KernelSpec& K, const DegenerateCoefficient& coef,
                              const SpatialGrid& grid, const TimeGrid& tgrid, double c_exp, double s,
                              KernelNorm norm = KernelNorm::SquaredInvA);

}  // namespace degen
