#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "deformsim/cache_model.hpp"
#include "deformsim/harness/config.hpp"

namespace deformsim::harness {

inline constexpr int kTraceVersion = 1;

struct NamedSchedule {
    std::string name;
    std::vector<std::size_t> order;
    std::vector<std::size_t> lookahead;

    bool operator==(const NamedSchedule&) const = default;
};

struct AccessLog {
    std::string schedule;
    std::vector<AccessRecord> records;

    bool operator==(const AccessLog&) const = default;
};

/// Everything needed to re-run both cache policies without regenerating the
/// workload: per-query ids, reference points and footprints, the region radii,
/// the schedules, and optionally the per-access outcomes they produced.
struct TraceFile {
    int version = kTraceVersion;
    PyramidShape shape;
    SamplingDims dims;
    std::vector<std::int64_t> query_ids;
    std::vector<NormPoint> ref_points;
    std::vector<int> radii;
    std::vector<Footprint> footprints;  ///< by batch position
    std::vector<NamedSchedule> schedules;
    std::vector<AccessLog> logs;

    bool operator==(const TraceFile&) const = default;
};

Json trace_to_json(const TraceFile& trace);
/// Throws DataCorruptionError for a wrong format tag or version, or when the
/// header counts disagree with the body.
TraceFile trace_from_json(const Json& doc);

void save_trace(const TraceFile& trace, const std::string& path);
TraceFile load_trace(const std::string& path);

/// Runs the config at one sweep point and seed and records the "identity"
/// (baseline) and "dooq" schedules with their access logs.
TraceFile export_trace(const Json& config_doc, std::size_t point, std::uint64_t seed);

struct ReplayResult {
    SimReport baseline;
    SimReport pingpong;
    bool baseline_log_matches = true;  ///< vacuously true when the trace holds no log
    bool pingpong_log_matches = true;
};

/// Re-simulates a trace. The baseline runs over the "identity" schedule and
/// ping-pong over "dooq" with regions rebuilt from reference points and radii.
ReplayResult replay_trace(const TraceFile& trace, const CacheGeometry& geometry, const TimingConfig& timing);

}  // namespace deformsim::harness
