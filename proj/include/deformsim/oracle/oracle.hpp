#pragma once

// Slow, direct reference implementations used only to check the library.
// They share data types with the library but none of its algorithms.

#include <cstddef>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "deformsim/attention.hpp"
#include "deformsim/cache_model.hpp"

namespace deformsim::oracle {

/// Loop-nest evaluation of multi-scale deformable attention with its own
/// bilinear interpolation and long double Softmax; unfolded projections.
AttentionOutput deformable_attention(const FeaturePyramid& pyramid, const QueryBatch& queries,
                                     const ProjectionWeights& weights);

Matrix matmul(const Matrix& a, const Matrix& b);

/// Per-head Softmax in long double without max subtraction shortcuts.
std::vector<long double> softmax(std::span<const double> logits, SamplingDims dims);

/// Line set of one query by enumerating each tap of each sample into a std::set.
std::vector<LineId> footprint(const Query& query, SamplingDims dims, const PyramidShape& shape);

/// Every line (l, y, x) with floor(c) - r <= x, y <= floor(c) + 1 + r, found by scanning the whole map.
std::vector<LineId> prefetch_region(NormPoint ref, std::span<const int> radii, const PyramidShape& shape);

/// Sum over consecutive steps of t_fetch * |next \ current| with std::set arithmetic.
std::int64_t stall_set_difference(std::span<const std::size_t> order, std::span<const std::vector<LineId>> footprints,
                                  std::int64_t t_fetch);

/// Direct-mapped cache as a std::map from set index to the resident address.
/// Returns hit (true) or miss per access.
std::vector<bool> direct_mapped_hits(std::span<const std::size_t> addresses, std::size_t capacity);

/// Minimum stall over all n! orders (any starting query), from a pairwise cost matrix.
struct ExhaustiveResult {
    std::int64_t best_stall = 0;
    std::vector<std::size_t> best_order;
    std::size_t orders_checked = 0;
};
ExhaustiveResult exhaustive_min_stall(std::span<const std::vector<LineId>> footprints, std::int64_t t_fetch);

/// Greedy window walk written with a std::list of pending queries.
std::vector<std::size_t> greedy_window_order(std::span<const NormPoint> refs, std::size_t window);

/// Depth of an explicitly generated bitonic sorting network on the next power of two >= n.
int bitonic_network_depth(int n);

/// Same-bank tap pairs, via a per-bank histogram of each group.
std::uint64_t bank_conflicts(const std::vector<std::vector<std::pair<int, int>>>& groups, int banks);

/// Runs of consecutive addresses in a stream.
struct RunLengths {
    std::size_t runs = 0;
    double mean_run = 0.0;
};
RunLengths run_lengths(std::span<const std::size_t> addresses);

/// e^x in long double.
long double exp_extended(long double x);

}  // namespace deformsim::oracle
