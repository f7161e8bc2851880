#include "deformsim/harness/report.hpp"

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <sstream>

#include "deformsim/errors.hpp"

namespace deformsim::harness {

namespace {

double round9(double v) { return std::strtod(format_float(v).c_str(), nullptr); }

Json row_json(const ReportRow& r) {
    Json j;
    j["point_index"] = r.point_index;
    j["sweep_value"] = r.sweep_value ? Json(*r.sweep_value) : Json(nullptr);
    j["seed"] = r.seed;
    j["policy"] = r.policy;
    j["window"] = r.window;
    j["keep_ratio"] = r.keep_ratio;
    j["queries"] = r.queries;
    j["accesses"] = r.accesses;
    j["hits"] = r.hits;
    j["misses"] = r.misses;
    j["hit_rate"] = r.hit_rate;
    j["fetched_lines"] = r.fetched_lines;
    j["stall_cycles"] = r.stall_cycles;
    j["covered_cycles"] = r.covered_cycles;
    j["total_cycles"] = r.total_cycles;
    j["energy_pj"] = r.energy_pj;
    j["regional_reuse"] = r.regional_reuse;
    j["bank_conflicts"] = r.bank_conflicts;
    j["speedup_vs_baseline"] = r.speedup_vs_baseline;
    j["quant_error"] = r.quant_error ? Json(*r.quant_error) : Json(nullptr);
    return j;
}

// Floats are written as raw JSON numbers in %.9g so both formats carry the same digits.
std::string json_line(const ReportRow& r) {
    const auto j = row_json(r);
    std::string out = "{";
    bool first = true;
    for (const auto& [key, value] : j.items()) {
        if (!first) out += ",";
        first = false;
        out += "\"" + key + "\":";
        if (value.is_number_float()) {
            out += format_float(value.get<double>());
        } else {
            out += value.dump();
        }
    }
    return out + "}";
}

std::string csv_cell(const Json& v) {
    if (v.is_null()) return "";
    if (v.is_number_float()) return format_float(v.get<double>());
    if (v.is_string()) return v.get<std::string>();
    return v.dump();
}

void write_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    out << text;
    out.flush();
    if (!out) throw IoError("failed writing '" + path + "'");
}

template <typename T>
T field(const Json& j, const char* key) {
    if (!j.contains(key)) throw DataCorruptionError(std::string("report row lacks '") + key + "'");
    return j[key].get<T>();
}

std::optional<double> optional_field(const Json& j, const char* key) {
    if (!j.contains(key)) throw DataCorruptionError(std::string("report row lacks '") + key + "'");
    if (j[key].is_null()) return std::nullopt;
    return j[key].get<double>();
}

}  // namespace

const std::vector<std::string>& report_columns() {
    static const std::vector<std::string> columns = [] {
        std::vector<std::string> names;
        const auto j = row_json(ReportRow{});
        for (const auto& [key, value] : j.items()) names.push_back(key);
        return names;
    }();
    return columns;
}

std::string format_float(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.9g", v);
    return buf;
}

void canonicalize(ReportRow& row) {
    if (row.sweep_value) row.sweep_value = round9(*row.sweep_value);
    row.keep_ratio = round9(row.keep_ratio);
    row.hit_rate = round9(row.hit_rate);
    row.energy_pj = round9(row.energy_pj);
    row.regional_reuse = round9(row.regional_reuse);
    row.speedup_vs_baseline = round9(row.speedup_vs_baseline);
    if (row.quant_error) row.quant_error = round9(*row.quant_error);
}

std::string to_csv(const std::vector<ReportRow>& rows) {
    std::string out;
    const auto& cols = report_columns();
    for (std::size_t i = 0; i < cols.size(); ++i) out += (i ? "," : "") + cols[i];
    out += "\n";
    for (const auto& r : rows) {
        const auto j = row_json(r);
        bool first = true;
        for (const auto& [key, value] : j.items()) {
            out += (first ? "" : ",") + csv_cell(value);
            first = false;
        }
        out += "\n";
    }
    return out;
}

std::string to_json_lines(const std::vector<ReportRow>& rows) {
    std::string out;
    for (const auto& r : rows) out += json_line(r) + "\n";
    return out;
}

std::vector<ReportRow> parse_json_lines(const std::string& text) {
    std::vector<ReportRow> rows;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        Json j;
        try {
            j = Json::parse(line);
        } catch (const Json::parse_error& e) {
            throw DataCorruptionError(std::string("malformed report line: ") + e.what());
        }
        ReportRow r;
        r.point_index = field<std::uint64_t>(j, "point_index");
        r.sweep_value = optional_field(j, "sweep_value");
        r.seed = field<std::uint64_t>(j, "seed");
        r.policy = field<std::string>(j, "policy");
        r.window = field<std::int64_t>(j, "window");
        r.keep_ratio = field<double>(j, "keep_ratio");
        r.queries = field<std::uint64_t>(j, "queries");
        r.accesses = field<std::uint64_t>(j, "accesses");
        r.hits = field<std::uint64_t>(j, "hits");
        r.misses = field<std::uint64_t>(j, "misses");
        r.hit_rate = field<double>(j, "hit_rate");
        r.fetched_lines = field<std::uint64_t>(j, "fetched_lines");
        r.stall_cycles = field<std::int64_t>(j, "stall_cycles");
        r.covered_cycles = field<std::int64_t>(j, "covered_cycles");
        r.total_cycles = field<std::int64_t>(j, "total_cycles");
        r.energy_pj = field<double>(j, "energy_pj");
        r.regional_reuse = field<double>(j, "regional_reuse");
        r.bank_conflicts = field<std::uint64_t>(j, "bank_conflicts");
        r.speedup_vs_baseline = field<double>(j, "speedup_vs_baseline");
        r.quant_error = optional_field(j, "quant_error");
        rows.push_back(std::move(r));
    }
    return rows;
}

void emit_report(const std::vector<ReportRow>& rows, ReportFormat format, const std::string& path,
                 const Json& config) {
    if (rows.empty()) throw InputError("emit_report: no rows to write");
    write_file(path, format == ReportFormat::csv ? to_csv(rows) : to_json_lines(rows));

    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm utc{};
    gmtime_r(&now, &utc);
    char stamp[32];
    std::strftime(stamp, sizeof stamp, "%Y-%m-%dT%H:%M:%SZ", &utc);
    Json meta;
    meta["generated_at"] = stamp;
    meta["format"] = std::string(to_string(format));
    meta["rows"] = rows.size();
    meta["columns"] = report_columns();
    meta["config"] = config;
    write_file(path + ".meta.json", meta.dump(2) + "\n");
}

}  // namespace deformsim::harness
