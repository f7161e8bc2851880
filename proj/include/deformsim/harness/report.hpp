#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "deformsim/harness/config.hpp"

namespace deformsim::harness {

/// One simulated policy at one sweep point and seed.
struct ReportRow {
    std::uint64_t point_index = 0;
    std::optional<double> sweep_value;
    std::uint64_t seed = 0;
    std::string policy;  ///< "baseline" or "dooq_pingpong"
    std::int64_t window = 0;
    double keep_ratio = 1.0;
    std::uint64_t queries = 0;
    std::uint64_t accesses = 0;
    std::uint64_t hits = 0;
    std::uint64_t misses = 0;
    double hit_rate = 0.0;
    std::uint64_t fetched_lines = 0;
    std::int64_t stall_cycles = 0;
    std::int64_t covered_cycles = 0;
    std::int64_t total_cycles = 0;
    double energy_pj = 0.0;
    double regional_reuse = 0.0;
    std::uint64_t bank_conflicts = 0;
    double speedup_vs_baseline = 1.0;
    std::optional<double> quant_error;

    bool operator==(const ReportRow&) const = default;
};

/// Column names in output order.
const std::vector<std::string>& report_columns();

/// Rounds every floating field to 9 significant digits, the precision written
/// to reports, so that rows survive a save/load round trip unchanged.
void canonicalize(ReportRow& row);

/// "%.9g", the float format used in reports.
std::string format_float(double v);

std::string to_csv(const std::vector<ReportRow>& rows);
std::string to_json_lines(const std::vector<ReportRow>& rows);
std::vector<ReportRow> parse_json_lines(const std::string& text);

/// Writes `rows` to `path` and a sidecar `<path>.meta.json` holding the
/// generation time and the config. Throws InputError for an empty row list and
/// IoError when a file cannot be written.
void emit_report(const std::vector<ReportRow>& rows, ReportFormat format, const std::string& path,
                 const Json& config = Json::object());

}  // namespace deformsim::harness
