#include "degen/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <limits>
#include <ostream>
#include <thread>

namespace degen {

namespace {

bool vanishes_at_ends(const Profile& y)
{
    const double scale = y.cwiseAbs().maxCoeff();
    return scale > 0.0 && std::abs(y[0]) <= 1e-12 * scale && std::abs(y[y.size() - 1]) <= 1e-12 * scale;
}

double variation(double coarse, double fine)
{
    return coarse > 0.0 ? std::abs(fine / coarse - 1.0) : (fine == 0.0 ? 0.0 : INFINITY);
}

HumOptions hum_options(const Scenario& sc)
{
    return sc.solver.hum;
}

FixedPointOptions fp_options(const Scenario& sc)
{
    FixedPointOptions fp;
    fp.fp_tol = sc.solver.fp_tol;
    fp.max_fp = sc.solver.max_fp;
    fp.hum = hum_options(sc);
    return fp;
}

EnsembleOptions ensemble(const Scenario& sc, int members)
{
    EnsembleOptions e;
    e.members = members;
    e.seed = sc.seed;
    e.modes = sc.verify.modes;
    return e;
}

}  // namespace

ValidateOutcome run_validate(const Scenario& sc)
{
    ValidateOutcome out;
    Json& rep = out.report;
    rep["command"] = "validate";
    rep["config"] = sc.origin;
    rep["form"] = to_string(sc.coef.form);

    const ValidationReport coef = validate_coefficient(sc.coef, sc.grid);
    rep["coefficient"] = to_json(coef.entries);
    bool passed = coef.passed();
    rep["parameters"] = nullptr;
    rep["inequalities"] = Json::array();
    rep["kernel"] = nullptr;

    if (passed) {
        try {
            const ControlProblem pb = build_problem(sc);
            rep["parameters"] = to_json(pb.params);
            const WeightSet w = assemble_weights(pb.params, pb.coef, pb.region, pb.grid, pb.tgrid);
            const InequalityReport ineq = verify_parameter_inequalities(pb.params, w);
            rep["inequalities"] = to_json(ineq.entries);
            const KernelReport kr = check_kernel_hypotheses(pb.kernel, pb.params, pb.coef, pb.grid, pb.tgrid);
            rep["kernel"] = to_json(kr);
            passed = ineq.passed() && kr.all_passed();
        } catch (const std::exception& e) {
            rep["inequalities"] = to_json(std::vector<CheckEntry>{{"parameters", false, NAN, e.what()}});
            passed = false;
        }
    }
    rep["passed"] = passed;
    out.passed = passed;
    return out;
}

ControlOutcome run_control(const Scenario& sc, ControlMode mode)
{
    const ControlProblem pb = build_problem(sc);
    const bool has_f = sc.f.size() != 0 && !sc.f.isZero(0.0);
    const bool kernel = !pb.kernel.is_zero();
    ControlOutcome out;
    Json& s = out.summary;
    s["command"] = "control";
    s["config"] = sc.origin;
    s["form"] = to_string(sc.coef.form);

    std::string name;
    NonlocalResult nl;
    bool nonlocal = false;
    if (mode == ControlMode::Auto && !kernel) {
        name = "local";
        out.result = null_control_nonhom(sc.y0, sc.f, pb, hum_options(sc));
    } else {
        if (has_f) throw std::invalid_argument("a source term f is only supported with a zero kernel and no mode flag");
        nonlocal = true;
        if (mode == ControlMode::Shortcut) {
            name = "shortcut";
            nl = supported_kernel_shortcut(sc.y0, pb, hum_options(sc));
        } else if (mode == ControlMode::TwoPhase) {
            name = "two_phase";
            TwoPhaseOptions tp;
            tp.t0_fraction = sc.solver.t0_fraction;
            tp.fp = fp_options(sc);
            nl = two_phase_control(sc.y0, pb, tp);
        } else {
            name = "fixed_point";
            nl = fixed_point_control(sc.y0, pb, fp_options(sc));
        }
        out.result = nl.control;
        out.trace = nl.trace;
        out.has_trace = true;
    }

    s["mode"] = name;
    s["parameters"] = to_json(pb.params);
    Json body = control_summary(out.result);
    for (auto& [k, v] : body.items()) s[k] = v;
    s["threshold"] = sc.solver.final_ratio_threshold;
    bool passed = std::isfinite(out.result.final_ratio) && out.result.final_ratio <= sc.solver.final_ratio_threshold;
    if (nonlocal) {
        s["kernel"] = to_json(nl.kernel);
        s["kernel"]["warning"] = !nl.hypotheses_passed;
        s["fixed_point"] = to_json(nl.trace);
        passed = passed && nl.trace.converged;
        if (mode == ControlMode::TwoPhase)
            s["two_phase"] = {{"t0", nl.t0},
                              {"gradient_norm_y0", nl.gradient_norm_y0},
                              {"gradient_norm_t0", nl.gradient_norm_t0}};
        if (mode == ControlMode::Shortcut) {
            double outside = 0.0;
            const Eigen::VectorXd mask = pb.region.mask(pb.grid);
            for (int k = 0; k < nl.control.u.rows(); ++k)
                for (int i = 0; i < nl.control.u.cols(); ++i)
                    if (mask[i] == 0.0) outside = std::max(outside, std::abs(nl.control.u(k, i) - nl.v_local(k, i)));
            s["shortcut"] = {{"max_u_minus_v_outside", outside}};
        }
    }
    s["passed"] = passed;
    out.passed = passed;
    return out;
}

std::vector<std::string> default_checks(Form form)
{
    if (form == Form::NonDivergence)
        return {"hardy", "splitting", "carleman-boundary", "carleman-local", "carleman-modified_nondiv",
                "caccioppoli", "observability", "energy"};
    return {"carleman-div", "carleman-modified_div", "caccioppoli", "observability", "energy"};
}

VerifyOutcome run_verify_check(const Scenario& sc, const std::string& name, const SweepRange& sweep)
{
    const ControlProblem pb = build_problem(sc);
    VerifyOutcome out;
    out.name = name;
    Json& j = out.report;
    j["check"] = name;
    j["config"] = sc.origin;
    j["form"] = to_string(sc.coef.form);

    if (name == "hardy") {
        std::vector<Profile> samples;
        Profile canon(pb.grid.size());
        for (int i = 0; i < pb.grid.size(); ++i) canon[i] = pb.grid.x[i] * (1.0 - pb.grid.x[i]);
        samples.push_back(canon);
        if (vanishes_at_ends(sc.y0)) samples.push_back(sc.y0);
        const HardyReport rep = check_hardy(pb.coef, pb.grid, samples, sc.verify.hardy_members, sc.seed);
        const ControlProblem fine = refined(pb);
        const HardyReport rep2 = check_hardy(pb.coef, fine.grid, {}, sc.verify.hardy_members, sc.seed);
        j["report"] = to_json(rep);
        j["canonical_ratio"] = rep.sample_ratios.front();
        j["refined_ensemble_max"] = rep2.ensemble_max;
        const double var = variation(rep.ensemble_max, rep2.ensemble_max);
        j["refinement_variation"] = var;
        out.passed = std::isfinite(rep.ensemble_max) && var <= 0.10;
        out.csv = to_csv(rep);
    } else if (name == "splitting") {
        const int n = pb.grid.n, m = pb.tgrid.m;
        const IdentityReport rep = check_splitting_identity(ManufacturedSolution::sine_bump(pb.tgrid.T), pb,
                                                            {{n, m}, {2 * n, 2 * m}});
        j["report"] = to_json(rep);
        const double reduction = rep.levels[0].relative_residual / rep.levels[1].relative_residual;
        j["reduction"] = reduction;
        out.passed = rep.levels[1].relative_residual <= 0.05 && reduction >= 1.5;
        out.csv = to_csv(rep);
    } else if (name.rfind("carleman-", 0) == 0) {
        const CarlemanVariant v = carleman_variant_from_string(name.substr(9));
        CarlemanOptions co;
        co.ensemble = ensemble(sc, sc.verify.members);
        co.s_points = sc.verify.s_points;
        co.ratio_cap = sc.verify.ratio_cap;
        if (sweep.points > 0) {
            co.s_lo = sweep.lo;
            co.s_hi = sweep.hi;
            co.s_points = sweep.points;
        }
        const CarlemanReport rep = check_carleman(v, pb, co);
        const CarlemanReport rep2 = check_carleman(v, refined(pb), co);
        j["report"] = to_json(rep);
        j["refined_max_ratio"] = rep2.max_ratio;
        const double var = variation(rep.max_ratio, rep2.max_ratio);
        j["refinement_variation"] = var;
        out.passed = rep.passed && var <= 0.20;
        out.csv = to_csv(rep);
        out.plot = plot_csv(rep);
        out.has_plot = true;
    } else if (name == "caccioppoli") {
        CaccioppoliOptions co;
        co.ensemble = ensemble(sc, sc.verify.members);
        co.omega1_lo = sc.verify.omega1_lo;
        co.omega1_hi = sc.verify.omega1_hi;
        co.omega2_lo = sc.verify.omega2_lo;
        co.omega2_hi = sc.verify.omega2_hi;
        const CaccioppoliReport rep = check_caccioppoli(pb, co);
        const CaccioppoliReport rep2 = check_caccioppoli(refined(pb), co);
        j["report"] = to_json(rep);
        j["refined_max_ratio"] = rep2.max_ratio;
        const double var = variation(rep.max_ratio, rep2.max_ratio);
        j["refinement_variation"] = var;
        out.passed = rep.finite && var <= 0.20;
        out.csv = to_csv(rep);
    } else if (name == "observability") {
        ObservabilityOptions oo;
        oo.ensemble = ensemble(sc, sc.verify.observability_members);
        oo.ensemble.source_scale = 0.0;
        oo.stepper = sc.solver.stepper;
        const ObservabilityReport rep = check_observability(pb, oo);
        j["report"] = to_json(rep);
        out.passed = rep.finite && rep.ordering_ok && rep.weighted_ok;
        out.csv = to_csv(rep);
    } else if (name == "energy") {
        EnergyOptions eo;
        eo.ensemble = ensemble(sc, sc.verify.members);
        eo.stepper = sc.solver.stepper;
        const EnergyReport rep = check_energy_estimates(pb, eo);
        ControlProblem half = pb;
        half.tgrid = TimeGrid::make(pb.tgrid.T, 2 * pb.tgrid.m, pb.tgrid.start);
        const EnergyReport rep2 = check_energy_estimates(half, eo);
        j["report"] = to_json(rep);
        j["halved_dt_constant"] = rep2.constant;
        const double var = variation(rep.constant, rep2.constant);
        j["refinement_variation"] = var;
        out.passed = rep.finite && rep.dissipative && var <= 0.10;
        out.csv = to_csv(rep);
    } else {
        throw std::invalid_argument("unknown check '" + name + "'");
    }
    j["passed"] = out.passed;
    return out;
}

SweepRange parse_sweep_range(const std::string& text)
{
    SweepRange r;
    const std::size_t a = text.find(':'), b = text.find(':', a == std::string::npos ? a : a + 1);
    if (a == std::string::npos || b == std::string::npos) throw std::invalid_argument("expected lo:hi:k");
    try {
        std::size_t used = 0;
        r.lo = std::stod(text.substr(0, a), &used);
        r.hi = std::stod(text.substr(a + 1, b - a - 1), &used);
        r.points = std::stoi(text.substr(b + 1), &used);
    } catch (const std::exception&) {
        throw std::invalid_argument("expected lo:hi:k with numbers, got '" + text + "'");
    }
    if (!(r.lo > 0.0 && r.hi >= r.lo && r.points >= 1)) throw std::invalid_argument("expected 0 < lo <= hi and k >= 1");
    return r;
}

int sweep_threads()
{
    if (const char* env = std::getenv("DEGENCTL_THREADS")) {
        try {
            const int n = std::stoi(env);
            if (n >= 1) return n;
        } catch (const std::exception&) {
        }
    }
    return std::max(1u, std::thread::hardware_concurrency());
}

CsvTable run_sweep(const Scenario& sc, const std::string& param, const std::vector<double>& values, int threads)
{
    if (param != "s" && param != "epsilon" && param != "alpha" && param != "n" && param != "m")
        throw std::invalid_argument("unknown sweep parameter '" + param + "' (expected s, epsilon, alpha, n or m)");
    std::vector<std::vector<std::string>> rows(values.size());

    auto evaluate = [&](std::size_t idx) {
        const double v = values[idx];
        std::vector<std::string> row{param, CsvTable::cell(v)};
        std::string error;
        bool valid = false;
        ControlOutcome co;
        bool ran = false;
        try {
            const Scenario s2 = with_value(sc, param, v);
            valid = run_validate(s2).passed;
            co = run_control(s2, ControlMode::Auto);
            ran = true;
        } catch (const std::exception& e) {
            error = e.what();
            for (char& c : error)
                if (c == ',' || c == '\n') c = ';';
        }
        const ControlResult& r = co.result;
        const double nan = std::numeric_limits<double>::quiet_NaN();
        row.push_back(CsvTable::cell(valid));
        row.push_back(CsvTable::cell(ran ? r.final_ratio : nan));
        row.push_back(CsvTable::cell(ran ? r.J : nan));
        row.push_back(CsvTable::cell(ran ? r.cg_iterations : 0));
        row.push_back(CsvTable::cell(ran ? r.cg_residual : nan));
        row.push_back(CsvTable::cell(ran ? r.discrepancy : nan));
        row.push_back(CsvTable::cell(ran && co.passed));
        row.push_back(error);
        rows[idx] = std::move(row);
    };

    const int workers = std::max(1, std::min<int>(threads, static_cast<int>(values.size())));
    std::atomic<std::size_t> next{0};
    auto work = [&] {
        for (std::size_t i = next++; i < values.size(); i = next++) evaluate(i);
    };
    std::vector<std::thread> pool;
    for (int t = 1; t < workers; ++t) pool.emplace_back(work);
    work();
    for (auto& th : pool) th.join();

    CsvTable t({"param", "value", "validate_passed", "final_ratio", "J", "iterations", "cg_residual", "discrepancy",
                "control_passed", "error"});
    for (auto& r : rows) t.row(std::move(r));
    return t;
}

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err)
{
    CLI::App app{"Null-controllability toolkit for degenerate parabolic equations", "degenctl"};
    app.require_subcommand(1);

    std::string config;
    std::string out_path, out_dir = ".", weights_dir, check = "all", s_sweep_text, param;
    bool two_phase = false, shortcut = false;
    std::vector<double> values;

    auto* validate = app.add_subcommand("validate", "check coefficient, parameters and kernel hypotheses");
    validate->add_option("config", config, "scenario JSON")->required();
    validate->add_option("--out", out_path, "write the JSON report here instead of stdout");
    validate->add_option("--weights-dir", weights_dir, "also export weight tables as CSV");

    auto* control = app.add_subcommand("control", "compute and verify a null control");
    control->add_option("config", config, "scenario JSON")->required();
    control->add_option("--out-dir", out_dir, "directory for u.csv, y.csv, summary.json");
    auto* tp = control->add_flag("--two-phase", two_phase, "free decay to t0, then control");
    control->add_flag("--shortcut", shortcut, "kernel supported in omega x omega")->excludes(tp);

    auto* verify = app.add_subcommand("verify", "run numerical checks of the estimates");
    verify->add_option("config", config, "scenario JSON")->required();
    verify->add_option("--check", check, "check name or 'all'");
    verify->add_option("--s-sweep", s_sweep_text, "Carleman s sweep lo:hi:k");
    verify->add_option("--out-dir", out_dir, "directory for <check>.json and <check>.csv");

    auto* sweep = app.add_subcommand("sweep", "one summary row per parameter value");
    sweep->add_option("config", config, "scenario JSON")->required();
    sweep->add_option("--param", param, "s, epsilon, alpha, n or m")->required();
    sweep->add_option("--values", values, "values to evaluate")->required();
    sweep->add_option("--out", out_path, "write the CSV here instead of stdout");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kExitPass : kExitUsage;
    }

    Scenario sc;
    try {
        sc = load_scenario(config);
    } catch (const ScenarioError& e) {
        err << "error: " << e.what() << '\n';
        return kExitUsage;
    }

    try {
        if (*validate) {
            const ValidateOutcome v = run_validate(sc);
            const std::string text = v.report.dump(2) + "\n";
            if (out_path.empty()) {
                out << text;
            } else {
                write_text(out_path, text);
            }
            if (!weights_dir.empty() && !v.report["parameters"].is_null()) {
                std::filesystem::create_directories(weights_dir);
                const ControlProblem pb = build_problem(sc);
                const WeightSet w = assemble_weights(pb.params, pb.coef, pb.region, pb.grid, pb.tgrid);
                weights_time_csv(w).write((std::filesystem::path(weights_dir) / "weights_t.csv").string());
                weights_space_csv(w).write((std::filesystem::path(weights_dir) / "weights_x.csv").string());
            }
            return v.passed ? kExitPass : kExitFail;
        }

        if (*control) {
            const ControlMode mode = shortcut ? ControlMode::Shortcut : two_phase ? ControlMode::TwoPhase : ControlMode::Auto;
            const bool has_f = sc.f.size() != 0 && !sc.f.isZero(0.0);
            if (has_f && (mode != ControlMode::Auto || sc.kernel_type != "zero")) {
                err << "error: a source term f is only supported with a zero kernel and no mode flag\n";
                return kExitUsage;
            }
            const ControlOutcome c = run_control(sc, mode);
            std::filesystem::create_directories(out_dir);
            const std::filesystem::path dir(out_dir);
            field_csv(c.result.u, sc.grid, sc.tgrid).write((dir / "u.csv").string());
            field_csv(c.result.y, sc.grid, sc.tgrid).write((dir / "y.csv").string());
            write_text((dir / "summary.json").string(), c.summary.dump(2) + "\n");
            if (c.has_trace) trace_csv(c.trace).write((dir / "trace.csv").string());
            out << c.summary["mode"].get<std::string>() << ": final_ratio " << format_number(c.result.final_ratio)
                << (c.passed ? " pass" : " FAIL") << '\n';
            return c.passed ? kExitPass : kExitFail;
        }

        if (*verify) {
            SweepRange range;
            if (!s_sweep_text.empty()) {
                try {
                    range = parse_sweep_range(s_sweep_text);
                } catch (const std::invalid_argument& e) {
                    err << "error: --s-sweep: " << e.what() << '\n';
                    return kExitUsage;
                }
            }
            std::vector<std::string> names;
            if (check == "all") {
                names = default_checks(sc.coef.form);
            } else {
                const auto known = default_checks(Form::NonDivergence), div = default_checks(Form::DivergenceWD);
                bool ok = std::find(known.begin(), known.end(), check) != known.end() ||
                          std::find(div.begin(), div.end(), check) != div.end();
                if (!ok) {
                    err << "error: unknown check '" << check << "'\n";
                    return kExitUsage;
                }
                names = {check};
            }
            std::filesystem::create_directories(out_dir);
            const std::filesystem::path dir(out_dir);
            bool all = true;
            for (const auto& name : names) {
                VerifyOutcome v;
                try {
                    v = run_verify_check(sc, name, range);
                } catch (const std::invalid_argument& e) {
                    err << "error: " << name << ": " << e.what() << '\n';
                    return kExitUsage;
                }
                write_text((dir / (name + ".json")).string(), v.report.dump(2) + "\n");
                v.csv.write((dir / (name + ".csv")).string());
                if (v.has_plot) v.plot.write((dir / (name + "_plot.csv")).string());
                out << name << ": " << (v.passed ? "pass" : "FAIL") << '\n';
                all = all && v.passed;
            }
            return all ? kExitPass : kExitFail;
        }

        if (*sweep) {
            CsvTable t({});
            try {
                t = run_sweep(sc, param, values, sweep_threads());
            } catch (const std::invalid_argument& e) {
                err << "error: " << e.what() << '\n';
                return kExitUsage;
            }
            if (out_path.empty()) {
                out << t.str();
            } else {
                t.write(out_path);
            }
            return kExitPass;
        }
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kExitFail;
    }
    return kExitUsage;
}

}  // namespace degen
