#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "deformsim/attention.hpp"
#include "deformsim/cache_model.hpp"

namespace deformsim {

enum class WorkloadMode { dense_encoder, sparse_encoder, decoder };
enum class QueryDistribution { uniform, clustered, grid };

struct WorkloadSpec {
    WorkloadMode mode = WorkloadMode::decoder;
    PyramidShape shape;
    int heads = 4;
    int points = 4;
    QueryDistribution distribution = QueryDistribution::clustered;
    double keep_ratio = 1.0;  ///< sparse_encoder only
    int decoder_queries = 300;
    int clusters = 8;
    double cluster_spread = 0.05;  ///< std-dev of a cluster in normalized units
    /// Offsets are uniform in [-envelope, envelope]^2, normalized units.
    double offset_envelope = 0.03;
    /// Draw one offset pattern per cluster (per batch when not clustered) and reuse it.
    bool shared_offsets = false;
    std::uint64_t seed = 0;

    SamplingDims dims() const { return {heads, static_cast<int>(shape.num_levels()), points}; }
    /// Throws ConfigError with the offending field path.
    void validate() const;
};

/// The desk-scale pyramid: 64x64, 32x32, 16x16, 8x8 with D = 32.
PyramidShape desk_pyramid();
/// Four levels totalling 20097 locations with D = 256.
PyramidShape full_scale_pyramid();

struct Workload {
    FeaturePyramid pyramid;
    QueryBatch queries;
};

/// Seeded synthetic workload. Pyramid values are uniform in [-1, 1] and logits
/// in [-2, 2].
///   dense_encoder:  one query per location of every level, raster order, level by level.
///   sparse_encoder: the dense batch pruned to keep_count(n, keep_ratio) by seeded
///                   scores; clustered scores favour locations near k centres.
///   decoder:        decoder_queries reference points from the distribution;
///                   grid places one query per level-0 location instead.
/// Query ids are positions in the unpruned batch.
Workload generate_workload(const WorkloadSpec& spec);

/// Per-head projections with entries uniform in [-1, 1], already folded.
ProjectionWeights random_projections(int channels, int heads, std::uint64_t seed);

/// ceil(n * ratio), robust to the representation error of ratio. 0 < ratio <= 1.
std::size_t keep_count(std::size_t n, double ratio);

struct IndexRemap {
    std::vector<std::int64_t> kept_ids;  ///< packed position -> query id
    std::vector<std::int64_t> forward;   ///< original position -> packed position, -1 when pruned
    std::vector<std::size_t> inverse;    ///< packed position -> original position
};

struct PrunedBatch {
    QueryBatch queries;
    IndexRemap remap;
};

/// Keeps the `keep` highest scores, packed in descending score order; equal
/// scores go to the lower id. Throws InputError for keep == 0, keep > n, a
/// score count mismatch or a non-finite score.
PrunedBatch prune_topk(const QueryBatch& queries, std::span<const double> scores, std::size_t keep);

/// Puts outputs of a pruned batch back in original order. Throws
/// DataCorruptionError for an id the remap does not know or a repeated id.
AttentionOutput scatter_restore(const AttentionOutput& outputs, const IndexRemap& remap);

struct BurstStats {
    double mean_run = 0.0;
    std::size_t runs = 0;
};

/// Run lengths of consecutive flat line addresses in the packed access stream:
/// the footprints of kept queries in packed order, each in ascending address
/// order. `footprints` is indexed by original position.
BurstStats burst_length_stats(const IndexRemap& remap, std::span<const Footprint> footprints,
                              const PyramidShape& shape);

}  // namespace deformsim
