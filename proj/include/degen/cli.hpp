#pragma once

#include "degen/report.hpp"
#include "degen/scenario.hpp"

#include <iosfwd>
#include <string>
#include <vector>

namespace degen {

enum ExitCode { kExitPass = 0, kExitFail = 1, kExitUsage = 2 };

enum class ControlMode { Auto, TwoPhase, Shortcut };

struct ValidateOutcome {
    Json report;
    bool passed = false;
};

ValidateOutcome run_validate(const Scenario& sc);

struct ControlOutcome {
    Json summary;
    ControlResult result;
    bool passed = false;
    bool has_trace = false;
    FixedPointTrace trace;
};

/// Throws std::invalid_argument for combinations the drivers do not support.
ControlOutcome run_control(const Scenario& sc, ControlMode mode);

struct VerifyOutcome {
    std::string name;
    Json report;
    CsvTable csv{{}};
    /// Extra plot-data CSV (Carleman checks only).
    bool has_plot = false;
    CsvTable plot{{}};
    bool passed = false;
};

struct SweepRange {
    double lo = 0.0;
    double hi = 0.0;
    int points = 0;
};

/// Names: hardy, splitting, carleman-<variant>, caccioppoli, observability, energy.
VerifyOutcome run_verify_check(const Scenario& sc, const std::string& name, const SweepRange& sweep = {});
/// Checks that apply to the scenario's form.
std::vector<std::string> default_checks(Form form);

SweepRange parse_sweep_range(const std::string& text);

/// One row per value in input order; evaluated on up to `threads` workers.
CsvTable run_sweep(const Scenario& sc, const std::string& param, const std::vector<double>& values, int threads);

/// Worker count from DEGENCTL_THREADS, else the hardware concurrency.
int sweep_threads();

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace degen
