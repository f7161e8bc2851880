#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "deformsim/cache_model.hpp"
#include "deformsim/harness/config.hpp"
#include "deformsim/harness/report.hpp"
#include "deformsim/scheduler.hpp"
#include "deformsim/workload.hpp"

namespace deformsim::harness {

/// Everything one (config, seed) evaluation produces before it becomes rows.
struct PointResult {
    Workload workload;
    std::vector<Footprint> footprints;  ///< by batch position
    std::vector<int> radii;
    Schedule dooq;
    SimReport baseline;
    SimReport pingpong;
    std::uint64_t bank_conflicts = 0;
    std::optional<double> quant_error;
};

/// Generates the workload for `seed`, runs the direct-mapped baseline in batch
/// order and DOOQ with ping-pong region prefetch, and counts bank conflicts.
/// A region overflow is rethrown as ConfigError with the sweep context.
PointResult evaluate_point(const ExperimentConfig& config, std::uint64_t seed,
                           std::vector<AccessRecord>* baseline_log = nullptr,
                           std::vector<AccessRecord>* pingpong_log = nullptr);

/// Relative L2 error of the fixed-point fused pass against the floating fused
/// pass on the first `queries` queries of the batch.
double quantization_error(const Workload& workload, int queries, std::uint64_t seed);

/// Two rows (baseline, dooq_pingpong) per sweep point and seed, ordered by
/// point, then seed, then policy. Runs points x seeds on a thread pool; the
/// result does not depend on the thread count.
std::vector<ReportRow> run_experiment(const Json& config_doc);

}  // namespace deformsim::harness
