#pragma once

#include "degen/nonlocal.hpp"
#include "degen/verify.hpp"

#include <json.hpp>

#include <stdexcept>
#include <string>

namespace degen {

/// Parse or schema error; what() reads "<origin>:<line>: <message>".
class ScenarioError : public std::runtime_error {
public:
    ScenarioError(const std::string& origin, int line, const std::string& message);
    int line() const { return line_; }

private:
    int line_;
};

struct SolverConfig {
    Stepper stepper = Stepper::ImplicitEuler;
    HumOptions hum;
    double fp_tol = 1e-6;
    int max_fp = 30;
    double t0_fraction = 0.25;
    double final_ratio_threshold = 1e-2;
};

struct VerifyConfig {
    int members = 10;
    int observability_members = 20;
    int hardy_members = 50;
    int modes = 6;
    int s_points = 5;
    double ratio_cap = 1e12;
    double omega1_lo = 0.0, omega1_hi = 0.0;
    double omega2_lo = 0.0, omega2_hi = 0.0;
};

struct Scenario {
    std::string origin;
    /// The parsed document, kept so sweeps can rebuild with one value changed.
    nlohmann::ordered_json document;

    DegenerateCoefficient coef;
    ControlRegion region;
    SpatialGrid grid;
    TimeGrid tgrid;
    ParameterOverrides overrides;
    Profile y0;
    Field f;
    SolverConfig solver;
    VerifyConfig verify;
    std::uint64_t seed = kDefaultSeed;

    nlohmann::ordered_json kernel_json;
    std::string kernel_type = "zero";
};

Scenario parse_scenario(const std::string& text, const std::string& origin = "<config>",
                        const std::string& base_dir = ".");
Scenario load_scenario(const std::string& path);

/// Rebuilds a scenario after one top-level or params/solver value has been replaced.
Scenario with_value(const Scenario& sc, const std::string& param, double value);

/// Parameters by choose_parameters with the scenario's overrides, and the kernel built on top.
ControlProblem build_problem(const Scenario& sc);

}  // namespace degen
