#pragma once

#include "degen/nonlocal.hpp"
#include "degen/verify.hpp"

#include <json.hpp>

#include <string>
#include <vector>

namespace degen {

using Json = nlohmann::ordered_json;

/// Scientific notation with 17 significant digits; "nan", "inf", "-inf" for non-finite values.
std::string format_number(double v);

class CsvTable {
public:
    explicit CsvTable(std::vector<std::string> header);

    CsvTable& row(std::vector<std::string> cells);
    std::size_t rows() const { return rows_.size(); }
    std::string str() const;
    /// Throws std::runtime_error when the file cannot be written.
    void write(const std::string& path) const;

    static std::string cell(double v) { return format_number(v); }
    static std::string cell(int v) { return std::to_string(v); }
    static std::string cell(bool v) { return v ? "1" : "0"; }
    static std::string cell(const std::string& v) { return v; }

private:
    std::vector<std::string> header_;
    std::vector<std::vector<std::string>> rows_;
};

void write_text(const std::string& path, const std::string& text);

/// (t, x, value) triples, time-major.
CsvTable field_csv(const Field& y, const SpatialGrid& grid, const TimeGrid& tgrid);
CsvTable weights_time_csv(const WeightSet& w);
CsvTable weights_space_csv(const WeightSet& w);
CsvTable trace_csv(const FixedPointTrace& trace);

Json to_json(const std::vector<CheckEntry>& entries);
Json to_json(const WeightParams& p);
Json to_json(const KernelReport& rep);
Json to_json(const FixedPointTrace& trace);
Json control_summary(const ControlResult& res);

Json to_json(const HardyReport& rep);
Json to_json(const IdentityReport& rep);
Json to_json(const CarlemanReport& rep);
Json to_json(const CaccioppoliReport& rep);
Json to_json(const ObservabilityReport& rep);
Json to_json(const EnergyReport& rep);

CsvTable to_csv(const HardyReport& rep);
CsvTable to_csv(const IdentityReport& rep);
/// One row per (s, member).
CsvTable to_csv(const CarlemanReport& rep);
/// s against the sweep max and the top-quartile mean.
CsvTable plot_csv(const CarlemanReport& rep);
CsvTable to_csv(const CaccioppoliReport& rep);
CsvTable to_csv(const ObservabilityReport& rep);
CsvTable to_csv(const EnergyReport& rep);

}  // namespace degen
