#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "deformsim/cache_model.hpp"
#include "deformsim/scheduler.hpp"
#include "deformsim/workload.hpp"

namespace deformsim::harness {

using Json = nlohmann::ordered_json;

inline constexpr int kConfigVersion = 1;

enum class ReportFormat { csv, json_lines };

struct SweepSpec {
    std::string parameter;  ///< dotted config path, empty for a single point
    std::vector<double> values;
};

struct ExperimentConfig {
    WorkloadSpec workload;
    int window = 1;
    int parallelism = 8;
    std::size_t capacity_lines = 512;
    int banks = 8;
    int bytes_per_element = 1;
    std::vector<int> region_radii;  ///< empty: derived from the batch's largest offsets
    std::optional<std::int64_t> t_fetch_per_line;   ///< unset: derived from line size
    std::optional<std::int64_t> t_comp_per_query;   ///< unset: L*K*ceil(D/p_d)
    double energy_per_bit_pj = kDefaultEnergyPerBitPj;
    std::int64_t bank_conflict_penalty = 0;
    bool precision_enabled = false;
    int precision_queries = 16;  ///< queries per run checked against the floating path
    SweepSpec sweep;
    std::vector<std::uint64_t> seeds;
    ReportFormat format = ReportFormat::csv;
    int threads = 0;  ///< 0: hardware concurrency

    SchedulerConfig scheduler() const;
    CacheGeometry geometry(CachePolicy policy) const;
    TimingConfig timing() const;
};

/// Sweepable dotted paths.
const std::vector<std::string>& sweep_parameters();

/// The document a config file would hold for the built-in defaults.
Json default_config_json();

/// Checks the version and fills keys missing from `doc` with defaults.
/// Unknown keys raise ConfigError with their dotted path.
Json merge_with_defaults(const Json& doc);

/// Builds a config from a versioned document. Unknown keys, wrong types and
/// out-of-range values raise ConfigError carrying the dotted field path.
ExperimentConfig parse_config(const Json& doc);

/// Reads and parses a file. Throws IoError when unreadable, ConfigError when malformed.
Json load_config_json(const std::string& path);

/// Applies "a.b.c=value" to a document. The value is read as JSON when it
/// parses, else as a string. The path must already exist in the schema.
void apply_override(Json& doc, std::string_view assignment);

/// Sets an existing dotted path to `value`; ConfigError when the path is unknown.
void set_path(Json& doc, std::string_view path, const Json& value);

/// Config for one sweep point: the sweep value written into the document, then parsed.
ExperimentConfig config_for_point(const Json& doc, std::size_t point);

std::string_view to_string(ReportFormat f);
std::string_view to_string(WorkloadMode m);
std::string_view to_string(QueryDistribution d);

}  // namespace deformsim::harness
