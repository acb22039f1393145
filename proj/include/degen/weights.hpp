#pragma once

#include "degen/model.hpp"

namespace degen {

/// Exponents are clamped to this magnitude before exponentiation.
inline constexpr double kLogClamp = 700.0;

inline double clamp_log(double v)
{
    return v < -kLogClamp ? -kLogClamp : (v > kLogClamp ? kLogClamp : v);
}

/// σ(x) = sin(π r(x)) with r the natural cubic spline through (0,0), (x*,1/2), (1,1).
struct Sigma {
    double x_star = 0.5;
    double norm_inf = 1.0;
    double curvature = 0.0;

    double r(double x) const;
    double r1(double x) const;
    double r2(double x) const;
    double value(double x) const;
    double d1(double x) const;
    double d2(double x) const;
};

struct SigmaTable {
    Sigma sigma;
    Eigen::VectorXd value;
    Eigen::VectorXd d1;
    Eigen::VectorXd d2;
};

SigmaTable build_sigma(const ControlRegion& region, const SpatialGrid& grid);

struct PTable {
    Eigen::VectorXd p;
    double p_norm = 0.0;
};

/// p(x) = ∫₀ˣ y e^{y²}/a(y) dy.
PTable compute_p(const DegenerateCoefficient& coef, const SpatialGrid& grid);

/// I(x) = ∫₀ˣ y/a(y) dy, so d* = I(1).
Eigen::VectorXd cumulative_y_over_a(const DegenerateCoefficient& coef, const SpatialGrid& grid);

struct WeightParams {
    Branch branch = Branch::NonDiv;
    double s = 0.0;
    double lambda = 0.0;
    double beta = 4.0;
    double rho = 1.0;
    double epsilon = 0.2;
    double T = 1.0;
    double start = 0.0;
    double Tstar = 0.6;
    double c = 0.0;
    double d = 0.0;
    double d_star = 0.0;
    double c0 = 0.0;
    double c1 = 0.0;
    double p_norm = 0.0;
    double sigma_norm = 1.0;

    double horizon() const { return T - start; }
};

double epsilon_max();

/// [lower, upper) of the admissible λ interval.
std::pair<double, double> lambda_interval(double rho, double sigma_norm, double beta, double p_norm);
/// (lower, upper) of the admissible c interval on the divergence branch.
std::pair<double, double> c_interval(double rho, double sigma_norm, double d, double d_star);

struct ParameterOverrides {
    double s = 0.0;
    double lambda = 0.0;
    double beta = 0.0;
    double rho = 0.0;
    double epsilon = 0.0;
    double c = 0.0;
    double d = 0.0;
};

WeightParams choose_parameters(const DegenerateCoefficient& coef, const ControlRegion& region,
                               const SpatialGrid& grid, const TimeGrid& tgrid, Branch branch,
                               const ParameterOverrides& overrides = {});

/// s with max_x |2sΦ̃(t,x)| = 40 at t = start + 3L/4.
double default_s(const WeightParams& params);

struct WeightSet {
    WeightParams params;
    SpatialGrid grid;
    TimeGrid tgrid;

    Eigen::VectorXd theta;
    Eigen::VectorXd nu;
    Eigen::VectorXd theta_mid;
    Eigen::VectorXd nu_mid;

    SigmaTable sigma;
    Eigen::VectorXd p;
    Eigen::VectorXd psi;
    Eigen::VectorXd Psi;
    Eigen::VectorXd upsilon;

    Field phi;
    Field Phi;
    Field phi_tilde;
    Field Phi_tilde;
    Field phi_div;
    Field phi_tilde_div;

    Eigen::VectorXd phi_hat;
    Eigen::VectorXd phi_check;
    Eigen::VectorXd Phi_hat;
    Eigen::VectorXd phi_hat_div;
    Eigen::VectorXd phi_check_div;

    /// Clamped exponents 2sΦ̃ on time levels and time midpoints.
    Field log_e2sPhi_tilde;
    Field log_e2sPhi_tilde_mid;

    double theta_at(double t) const;
    double nu_at(double t) const;
    /// Spatial profile of the branch's Carleman weight: ψ (non-div) or Υ (div).
    const Eigen::VectorXd& eta() const { return params.branch == Branch::NonDiv ? psi : upsilon; }
    double eta_max() const { return eta().maxCoeff(); }
    double eta_min() const { return eta().minCoeff(); }
};

WeightSet assemble_weights(const WeightParams& params, const DegenerateCoefficient& coef,
                           const ControlRegion& region, const SpatialGrid& grid, const TimeGrid& tgrid);

struct InequalityReport {
    std::vector<CheckEntry> entries;
    bool passed() const;
    const CheckEntry* find(const std::string& name) const;
};

InequalityReport verify_parameter_inequalities(const WeightParams& params, const WeightSet& weights);

}  // namespace degen
