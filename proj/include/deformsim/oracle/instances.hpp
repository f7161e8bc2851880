#pragma once

// Seeded random problem instances shared by the verify suites and the tests.

#include <cstdint>
#include <vector>

#include "deformsim/attention.hpp"
#include "deformsim/cache_model.hpp"
#include "deformsim/random.hpp"
#include "deformsim/workload.hpp"

namespace deformsim::oracle {

struct AttentionInstance {
    FeaturePyramid pyramid;
    QueryBatch queries;
    ProjectionWeights weights;  ///< folded
};

struct InstanceShape {
    int channels = 8;
    int heads = 2;
    int levels = 2;
    int points = 2;
    int queries = 4;
    int max_side = 12;  ///< level sides are drawn from [1, max_side]
};

/// Values in [-1, 1]; reference points in [0, 1]^2; offsets up to 0.3 so some
/// samples leave the map; logits in [-3, 3].
AttentionInstance attention_instance(std::uint64_t seed, const InstanceShape& shape);

/// Random shape with D <= max_channels (a multiple of M), M, L, K, n up to the given limits.
InstanceShape random_instance_shape(Rng& rng, int max_channels, int max_heads, int max_levels, int max_points,
                                    int max_queries);

/// `steps` footprints of 1..max_lines random lines each on `shape`.
std::vector<Footprint> random_footprints(Rng& rng, const PyramidShape& shape, std::size_t steps,
                                         std::size_t max_lines);

/// Flat addresses of every access in order.
std::vector<std::size_t> flatten(const std::vector<Footprint>& trace, const PyramidShape& shape);

/// n decoder queries in a few tight, well separated clusters, arriving
/// interleaved; queries of one cluster share their sampling offsets.
WorkloadSpec planted_cluster_spec(std::uint64_t seed, int n);

}  // namespace deformsim::oracle
