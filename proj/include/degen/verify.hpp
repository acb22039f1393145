#pragma once

#include "degen/hum.hpp"

#include <cstdint>
#include <functional>
#include <limits>
#include <string>
#include <vector>

namespace degen {

inline constexpr std::uint64_t kDefaultSeed = 20250101;

/// Random data are finite sine series with fixed-seed normal coefficients, so the same
/// members can be sampled on any grid.
struct EnsembleOptions {
    int members = 10;
    std::uint64_t seed = kDefaultSeed;
    int modes = 6;
    /// 0 switches random sources off.
    double source_scale = 1.0;
};

/// Doubles n and m, keeping every parameter of the problem.
ControlProblem refined(const ControlProblem& problem);

std::string grid_tag(const SpatialGrid& grid, const TimeGrid& tgrid);

// Hardy–Poincaré

struct HardyReport {
    /// (∫y²/a)/(∫y_x²) per sample; NaN for skipped (identically zero) samples.
    std::vector<double> sample_ratios;
    std::vector<double> ensemble_ratios;
    int skipped = 0;
    double sample_max = std::numeric_limits<double>::quiet_NaN();
    double ensemble_max = std::numeric_limits<double>::quiet_NaN();
};

double hardy_ratio(const Profile& y, const DegenerateCoefficient& coef, const SpatialGrid& grid);

/// Throws std::invalid_argument when a sample does not vanish at x = 0 and x = 1.
HardyReport check_hardy(const DegenerateCoefficient& coef, const SpatialGrid& grid,
                        const std::vector<Profile>& samples, int ensemble_size = 50,
                        std::uint64_t seed = kDefaultSeed);

// Splitting identity

/// v with the derivatives the manufactured source needs.
struct ManufacturedSolution {
    std::function<double(double, double)> v;
    std::function<double(double, double)> v_t;
    std::function<double(double, double)> v_x;
    std::function<double(double, double)> v_xx;

    /// sin(πx) t²(T − t)².
    static ManufacturedSolution sine_bump(double T);
    static ManufacturedSolution zero();
};

struct IdentityLevel {
    int n = 0;
    int m = 0;
    double norm_plus_sq = 0.0;
    double norm_minus_sq = 0.0;
    double cross = 0.0;
    double value_left = 0.0;
    double value_right = 0.0;
    double relative_residual = 0.0;
    /// −sλe∫θ w_x(t,1)² dt.
    double boundary_term = 0.0;
};

struct IdentityReport {
    std::vector<IdentityLevel> levels;
    /// Finest level.
    double value_left = 0.0;
    double value_right = 0.0;
    double relative_residual = 0.0;
    /// log2(residual_coarse / residual_fine) between consecutive levels.
    std::vector<double> slopes;
    /// Set when a refinement does not reduce the residual (input likely not smooth enough).
    bool flagged = false;
};

/// Non-divergence form only. grids lists (n, m) pairs from coarse to fine on the problem's horizon.
IdentityReport check_splitting_identity(const ManufacturedSolution& v, const ControlProblem& problem,
                                        const std::vector<std::pair<int, int>>& grids);

// Carleman estimates

enum class CarlemanVariant { Boundary, Local, ModifiedNonDiv, Div, ModifiedDiv };

std::string to_string(CarlemanVariant variant);
CarlemanVariant carleman_variant_from_string(const std::string& name);

struct CarlemanRecord {
    double s = 0.0;
    int member = 0;
    double gradient_term = 0.0;
    double cubic_term = 0.0;
    /// Modified variants: ‖e^{sφ̂(0)}v(0)‖².
    double initial_term = 0.0;
    double lhs_total = 0.0;
    double source_term = 0.0;
    double observation_term = 0.0;
    double boundary_term = 0.0;
    /// Modified variants: log of the factor multiplying the right side.
    double log_prefactor = 0.0;
    double rhs_total = 0.0;
    double ratio = std::numeric_limits<double>::quiet_NaN();
    bool excluded = false;
};

struct CarlemanOptions {
    EnsembleOptions ensemble;
    /// Zero means s_mid/2 and 2 s_mid with s_mid the problem's s.
    double s_lo = 0.0;
    double s_hi = 0.0;
    int s_points = 5;
    double ratio_cap = 1e12;
};

struct CarlemanReport {
    CarlemanVariant variant = CarlemanVariant::Local;
    std::string grid;
    std::vector<double> s_values;
    std::vector<CarlemanRecord> records;
    std::vector<double> max_ratio_per_s;
    /// Mean of the largest quarter of member ratios at each s.
    std::vector<double> top_quartile;
    double max_ratio = 0.0;
    int excluded = 0;
    bool finite = true;
    bool trend_nonincreasing = true;
    bool passed = false;
    std::string note;
};

/// Log-spaced sweep with lo and hi included.
std::vector<double> s_sweep(double lo, double hi, int points);

CarlemanReport check_carleman(CarlemanVariant variant, const ControlProblem& problem,
                              const CarlemanOptions& opts = {});

// Caccioppoli

struct CaccioppoliOptions {
    EnsembleOptions ensemble;
    /// ω₁ defaults to ω and ω₂ to ω̃ when lo ≥ hi.
    double omega1_lo = 0.0, omega1_hi = 0.0;
    double omega2_lo = 0.0, omega2_hi = 0.0;
    /// Zero means the problem's s.
    double s = 0.0;
};

struct CaccioppoliMember {
    double lhs = 0.0;
    double rhs_local = 0.0;
    double rhs_source = 0.0;
    double ratio = std::numeric_limits<double>::quiet_NaN();
    bool excluded = false;
};

struct CaccioppoliReport {
    std::string grid;
    double s = 0.0;
    double omega1_lo = 0.0, omega1_hi = 0.0, omega2_lo = 0.0, omega2_hi = 0.0;
    std::vector<CaccioppoliMember> members;
    double max_ratio = 0.0;
    int excluded = 0;
    bool finite = true;
};

CaccioppoliReport check_caccioppoli(const ControlProblem& problem, const CaccioppoliOptions& opts = {});

// Observability

struct ObservabilityMember {
    /// ‖v(0)‖² in the natural norm.
    double initial_energy = 0.0;
    double observation = 0.0;
    double full_observation = 0.0;
    double weighted_full = 0.0;
    double ratio = std::numeric_limits<double>::quiet_NaN();
    double ratio_full = std::numeric_limits<double>::quiet_NaN();
    double weighted_ratio = std::numeric_limits<double>::quiet_NaN();
    bool ordering_ok = true;
    bool weighted_ok = true;
    bool excluded = false;
};

struct ObservabilityReport {
    std::string grid;
    std::vector<ObservabilityMember> members;
    double max_ratio = 0.0;
    double max_weighted_ratio = 0.0;
    /// Bound for the full-domain weighted ratio from the energy identity.
    double C_T = 0.0;
    /// Operator-norm bound of the transposed kernel in the natural norm.
    double kernel_bound = 0.0;
    int excluded = 0;
    bool finite = true;
    bool ordering_ok = true;
    bool weighted_ok = true;
};

struct ObservabilityOptions {
    EnsembleOptions ensemble{20, kDefaultSeed, 6, 0.0};
    Stepper stepper = Stepper::ImplicitEuler;
};

ObservabilityReport check_observability(const ControlProblem& problem, const ObservabilityOptions& opts = {});

// Energy estimates

struct EnergyMember {
    double sup_energy = 0.0;
    double integrated_h1 = 0.0;
    double data = 0.0;
    double ratio = std::numeric_limits<double>::quiet_NaN();
};

struct EnergyReport {
    std::string grid;
    std::vector<EnergyMember> members;
    double constant = 0.0;
    bool finite = true;
    /// Zero-data run from the dissipativity profile.
    std::vector<double> step_norms;
    double max_relative_increase = 0.0;
    int strict_decreases = 0;
    bool dissipative = true;
};

struct EnergyOptions {
    EnsembleOptions ensemble;
    Stepper stepper = Stepper::ImplicitEuler;
    double tolerance = 1e-12;
    /// Initial profile of the dissipativity run; empty means sin(πx).
    Profile dissipativity_profile;
};

EnergyReport check_energy_estimates(const ControlProblem& problem, const EnergyOptions& opts = {});

}  // namespace degen
