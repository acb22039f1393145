#include "degen/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

namespace degen {

std::string format_number(double v)
{
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    if (v == 0.0) v = 0.0;
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.16e", v);
    return buf;
}

CsvTable::CsvTable(std::vector<std::string> header) : header_(std::move(header)) {}

CsvTable& CsvTable::row(std::vector<std::string> cells)
{
    if (cells.size() != header_.size()) throw std::logic_error("CSV row width does not match the header");
    rows_.push_back(std::move(cells));
    return *this;
}

std::string CsvTable::str() const
{
    std::string out;
    auto line = [&out](const std::vector<std::string>& cells) {
        for (std::size_t i = 0; i < cells.size(); ++i) out += (i ? "," : "") + cells[i];
        out += '\n';
    };
    line(header_);
    for (const auto& r : rows_) line(r);
    return out;
}

void CsvTable::write(const std::string& path) const
{
    write_text(path, str());
}

void write_text(const std::string& path, const std::string& text)
{
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write '" + path + "'");
    out << text;
    if (!out) throw std::runtime_error("write to '" + path + "' failed");
}

CsvTable field_csv(const Field& y, const SpatialGrid& grid, const TimeGrid& tgrid)
{
    CsvTable t({"t", "x", "value"});
    for (int k = 0; k < y.rows(); ++k)
        for (int i = 0; i < y.cols(); ++i)
            t.row({CsvTable::cell(tgrid.time(k)), CsvTable::cell(grid.x[i]), CsvTable::cell(y(k, i))});
    return t;
}

CsvTable weights_time_csv(const WeightSet& w)
{
    CsvTable t({"t", "theta", "nu", "phi_hat", "phi_check", "Phi_hat", "phi_hat_div", "phi_check_div"});
    for (int k = 0; k < w.tgrid.levels(); ++k)
        t.row({CsvTable::cell(w.tgrid.time(k)), CsvTable::cell(w.theta[k]), CsvTable::cell(w.nu[k]),
               CsvTable::cell(w.phi_hat[k]), CsvTable::cell(w.phi_check[k]), CsvTable::cell(w.Phi_hat[k]),
               CsvTable::cell(w.phi_hat_div[k]), CsvTable::cell(w.phi_check_div[k])});
    return t;
}

CsvTable weights_space_csv(const WeightSet& w)
{
    CsvTable t({"x", "sigma", "p", "psi", "Psi", "upsilon"});
    for (int i = 0; i < w.grid.size(); ++i)
        t.row({CsvTable::cell(w.grid.x[i]), CsvTable::cell(w.sigma.value[i]), CsvTable::cell(w.p[i]),
               CsvTable::cell(w.psi[i]), CsvTable::cell(w.Psi[i]), CsvTable::cell(w.upsilon[i])});
    return t;
}

CsvTable trace_csv(const FixedPointTrace& trace)
{
    CsvTable t({"iteration", "weighted_norm", "change", "relative_change", "contraction", "control_norm",
                "final_ratio", "cg_iterations", "cg_residual"});
    for (const auto& r : trace.records)
        t.row({CsvTable::cell(r.iteration), CsvTable::cell(r.weighted_norm), CsvTable::cell(r.change),
               CsvTable::cell(r.relative_change), CsvTable::cell(r.contraction), CsvTable::cell(r.control_norm),
               CsvTable::cell(r.final_ratio), CsvTable::cell(r.cg_iterations), CsvTable::cell(r.cg_residual)});
    return t;
}

Json to_json(const std::vector<CheckEntry>& entries)
{
    Json arr = Json::array();
    for (const auto& e : entries)
        arr.push_back({{"name", e.name}, {"passed", e.passed}, {"value", e.value}, {"detail", e.detail}});
    return arr;
}

Json to_json(const WeightParams& p)
{
    Json j;
    j["branch"] = p.branch == Branch::NonDiv ? "nondiv" : "div";
    j["s"] = p.s;
    j["lambda"] = p.lambda;
    j["beta"] = p.beta;
    j["rho"] = p.rho;
    j["epsilon"] = p.epsilon;
    j["T"] = p.T;
    j["start"] = p.start;
    j["Tstar"] = p.Tstar;
    j["c"] = p.c;
    j["d"] = p.d;
    j["d_star"] = p.d_star;
    j["c0"] = p.c0;
    j["c1"] = p.c1;
    j["p_norm"] = p.p_norm;
    j["sigma_norm"] = p.sigma_norm;
    return j;
}

Json to_json(const KernelReport& rep)
{
    Json j;
    j["passed"] = rep.all_passed();
    Json arr = Json::array();
    for (const auto& v : rep.verdicts)
        arr.push_back({{"name", v.name},
                       {"passed", v.passed},
                       {"value", v.value},
                       {"infinite", v.infinite},
                       {"lower_bound", v.lower_bound},
                       {"detail", v.detail}});
    j["verdicts"] = arr;
    return j;
}

Json to_json(const FixedPointTrace& trace)
{
    Json j;
    j["converged"] = trace.converged;
    j["iterations"] = trace.iterations();
    j["M_bound"] = trace.M_bound;
    j["inside_ball"] = trace.inside_ball;
    Json recs = Json::array();
    for (const auto& r : trace.records)
        recs.push_back({{"iteration", r.iteration},
                        {"weighted_norm", r.weighted_norm},
                        {"change", r.change},
                        {"relative_change", r.relative_change},
                        {"contraction", r.contraction},
                        {"control_norm", r.control_norm},
                        {"final_ratio", r.final_ratio},
                        {"cg_iterations", r.cg_iterations},
                        {"cg_residual", r.cg_residual}});
    j["records"] = recs;
    return j;
}

Json control_summary(const ControlResult& res)
{
    Json j;
    j["final_ratio"] = res.final_ratio;
    j["reference_norm"] = res.reference_norm;
    j["cross_check_ratio"] = res.cross_check_ratio;
    j["J"] = res.J;
    j["iterations"] = res.cg_iterations;
    j["cg_residual"] = res.cg_residual;
    j["cg_converged"] = res.cg_converged;
    j["discrepancy"] = res.discrepancy;
    j["estimate"] = {{"lhs", res.estimate_lhs}, {"log_rhs", res.log_estimate_rhs}};
    j["log_weighted_source"] = res.log_weighted_source;
    return j;
}

namespace {

Json array_of(const std::vector<double>& v)
{
    Json a = Json::array();
    for (double x : v) a.push_back(x);
    return a;
}

}  // namespace

Json to_json(const HardyReport& rep)
{
    Json j;
    j["sample_ratios"] = array_of(rep.sample_ratios);
    j["skipped"] = rep.skipped;
    j["sample_max"] = rep.sample_max;
    j["ensemble_size"] = static_cast<int>(rep.ensemble_ratios.size());
    j["ensemble_max"] = rep.ensemble_max;
    j["ensemble_ratios"] = array_of(rep.ensemble_ratios);
    return j;
}

Json to_json(const IdentityReport& rep)
{
    Json j;
    j["value_left"] = rep.value_left;
    j["value_right"] = rep.value_right;
    j["relative_residual"] = rep.relative_residual;
    j["slopes"] = array_of(rep.slopes);
    j["flagged"] = rep.flagged;
    Json lv = Json::array();
    for (const auto& l : rep.levels)
        lv.push_back({{"n", l.n},
                      {"m", l.m},
                      {"norm_plus_sq", l.norm_plus_sq},
                      {"norm_minus_sq", l.norm_minus_sq},
                      {"cross", l.cross},
                      {"value_left", l.value_left},
                      {"value_right", l.value_right},
                      {"relative_residual", l.relative_residual},
                      {"boundary_term", l.boundary_term}});
    j["levels"] = lv;
    return j;
}

Json to_json(const CarlemanReport& rep)
{
    Json j;
    j["variant"] = to_string(rep.variant);
    j["grid"] = rep.grid;
    j["note"] = rep.note;
    j["s_values"] = array_of(rep.s_values);
    j["max_ratio_per_s"] = array_of(rep.max_ratio_per_s);
    j["top_quartile"] = array_of(rep.top_quartile);
    j["max_ratio"] = rep.max_ratio;
    j["excluded"] = rep.excluded;
    j["finite"] = rep.finite;
    j["trend_nonincreasing"] = rep.trend_nonincreasing;
    j["passed"] = rep.passed;
    return j;
}

Json to_json(const CaccioppoliReport& rep)
{
    Json j;
    j["grid"] = rep.grid;
    j["s"] = rep.s;
    j["omega1"] = {rep.omega1_lo, rep.omega1_hi};
    j["omega2"] = {rep.omega2_lo, rep.omega2_hi};
    j["max_ratio"] = rep.max_ratio;
    j["excluded"] = rep.excluded;
    j["finite"] = rep.finite;
    return j;
}

Json to_json(const ObservabilityReport& rep)
{
    Json j;
    j["grid"] = rep.grid;
    j["members"] = static_cast<int>(rep.members.size());
    j["max_ratio"] = rep.max_ratio;
    j["max_weighted_ratio"] = rep.max_weighted_ratio;
    j["C_T"] = rep.C_T;
    j["kernel_bound"] = rep.kernel_bound;
    j["excluded"] = rep.excluded;
    j["finite"] = rep.finite;
    j["ordering_ok"] = rep.ordering_ok;
    j["weighted_ok"] = rep.weighted_ok;
    return j;
}

Json to_json(const EnergyReport& rep)
{
    Json j;
    j["grid"] = rep.grid;
    j["members"] = static_cast<int>(rep.members.size());
    j["constant"] = rep.constant;
    j["finite"] = rep.finite;
    j["dissipative"] = rep.dissipative;
    j["max_relative_increase"] = rep.max_relative_increase;
    j["strict_decreases"] = rep.strict_decreases;
    j["steps"] = static_cast<int>(rep.step_norms.size()) - 1;
    return j;
}

CsvTable to_csv(const HardyReport& rep)
{
    CsvTable t({"kind", "index", "ratio"});
    for (std::size_t i = 0; i < rep.sample_ratios.size(); ++i)
        t.row({"sample", CsvTable::cell(static_cast<int>(i)), CsvTable::cell(rep.sample_ratios[i])});
    for (std::size_t i = 0; i < rep.ensemble_ratios.size(); ++i)
        t.row({"ensemble", CsvTable::cell(static_cast<int>(i)), CsvTable::cell(rep.ensemble_ratios[i])});
    return t;
}

CsvTable to_csv(const IdentityReport& rep)
{
    CsvTable t({"n", "m", "norm_plus_sq", "norm_minus_sq", "cross", "value_left", "value_right", "relative_residual",
                "boundary_term"});
    for (const auto& l : rep.levels)
        t.row({CsvTable::cell(l.n), CsvTable::cell(l.m), CsvTable::cell(l.norm_plus_sq), CsvTable::cell(l.norm_minus_sq),
               CsvTable::cell(l.cross), CsvTable::cell(l.value_left), CsvTable::cell(l.value_right),
               CsvTable::cell(l.relative_residual), CsvTable::cell(l.boundary_term)});
    return t;
}

CsvTable to_csv(const CarlemanReport& rep)
{
    CsvTable t({"member", "s", "gradient_term", "cubic_term", "initial_term", "lhs_total", "source_term",
                "observation_term", "boundary_term", "log_prefactor", "rhs_total", "ratio", "excluded"});
    // Member-major, so each member contributes one row per s value.
    std::vector<const CarlemanRecord*> order;
    for (const auto& r : rep.records) order.push_back(&r);
    std::stable_sort(order.begin(), order.end(),
                     [](const CarlemanRecord* a, const CarlemanRecord* b) { return a->member < b->member; });
    for (const auto* r : order)
        t.row({CsvTable::cell(r->member), CsvTable::cell(r->s), CsvTable::cell(r->gradient_term),
               CsvTable::cell(r->cubic_term), CsvTable::cell(r->initial_term), CsvTable::cell(r->lhs_total),
               CsvTable::cell(r->source_term), CsvTable::cell(r->observation_term), CsvTable::cell(r->boundary_term),
               CsvTable::cell(r->log_prefactor), CsvTable::cell(r->rhs_total), CsvTable::cell(r->ratio),
               CsvTable::cell(r->excluded)});
    return t;
}

CsvTable plot_csv(const CarlemanReport& rep)
{
    CsvTable t({"s", "max_ratio", "top_quartile"});
    for (std::size_t j = 0; j < rep.s_values.size(); ++j)
        t.row({CsvTable::cell(rep.s_values[j]), CsvTable::cell(rep.max_ratio_per_s[j]),
               CsvTable::cell(rep.top_quartile[j])});
    return t;
}

CsvTable to_csv(const CaccioppoliReport& rep)
{
    CsvTable t({"member", "lhs", "rhs_local", "rhs_source", "ratio", "excluded"});
    for (std::size_t i = 0; i < rep.members.size(); ++i) {
        const auto& m = rep.members[i];
        t.row({CsvTable::cell(static_cast<int>(i)), CsvTable::cell(m.lhs), CsvTable::cell(m.rhs_local),
               CsvTable::cell(m.rhs_source), CsvTable::cell(m.ratio), CsvTable::cell(m.excluded)});
    }
    return t;
}

CsvTable to_csv(const ObservabilityReport& rep)
{
    CsvTable t({"member", "initial_energy", "observation", "full_observation", "weighted_full", "ratio", "ratio_full",
                "weighted_ratio", "ordering_ok", "weighted_ok", "excluded"});
    for (std::size_t i = 0; i < rep.members.size(); ++i) {
        const auto& m = rep.members[i];
        t.row({CsvTable::cell(static_cast<int>(i)), CsvTable::cell(m.initial_energy), CsvTable::cell(m.observation),
               CsvTable::cell(m.full_observation), CsvTable::cell(m.weighted_full), CsvTable::cell(m.ratio),
               CsvTable::cell(m.ratio_full), CsvTable::cell(m.weighted_ratio), CsvTable::cell(m.ordering_ok),
               CsvTable::cell(m.weighted_ok), CsvTable::cell(m.excluded)});
    }
    return t;
}

CsvTable to_csv(const EnergyReport& rep)
{
    CsvTable t({"member", "sup_energy", "integrated_h1", "data", "ratio"});
    for (std::size_t i = 0; i < rep.members.size(); ++i) {
        const auto& m = rep.members[i];
        t.row({CsvTable::cell(static_cast<int>(i)), CsvTable::cell(m.sup_energy), CsvTable::cell(m.integrated_h1),
               CsvTable::cell(m.data), CsvTable::cell(m.ratio)});
    }
    return t;
}

}  // namespace degen
