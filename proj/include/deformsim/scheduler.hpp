#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "deformsim/attention.hpp"

namespace deformsim {

enum class TieBreak { lowest_id };

struct SchedulerConfig {
    int window = 1;       ///< lookup window w_d
    int parallelism = 8;  ///< datapath lanes p_d
    int channels = 256;   ///< D
    TieBreak tie_break = TieBreak::lowest_id;

    /// Cycles available per query for selection: ceil(D / p_d).
    int slack_cycles() const { return (channels + parallelism - 1) / parallelism; }
    /// Throws ConfigError unless window, parallelism and channels are positive.
    void validate() const;
};

/// Cost of one selection on the cyclic bitonic sorter.
struct SorterCost {
    int stages = 0;       ///< compare-exchange depth, s(s+1)/2 with s = ceil(log2 occupancy)
    int comparators = 0;  ///< time-multiplexed compare-swap units, ceil(occupancy/2)
    bool fits_in_slack = true;

    bool operator==(const SorterCost&) const = default;
};

SorterCost sorter_cost(int window_occupancy, const SchedulerConfig& config);

struct Schedule {
    std::vector<std::size_t> order;      ///< sigma: step -> batch position
    std::vector<std::size_t> lookahead;  ///< lookahead[i] == order[i+1], known when step i starts
    std::vector<SorterCost> sorter;      ///< one entry per emission

    std::size_t size() const { return order.size(); }
};

double l1_distance(NormPoint p, NormPoint q);

/// The schedule that keeps the batch order.
Schedule identity_schedule(std::size_t n);

/// Greedy l1 nearest-neighbour ordering over a sliding window of w_d pending
/// queries. The first query of the batch seeds the walk; every emission refills
/// the window with the next query in batch order; equal distances go to the
/// lower query id.
Schedule dooq_schedule(const QueryBatch& queries, const SchedulerConfig& config);

/// Same selection rule over bare reference points; ids are the positions.
Schedule dooq_schedule(const std::vector<NormPoint>& ref_points, const std::vector<std::int64_t>& ids,
                       const SchedulerConfig& config);

/// True when `order` is a bijection on [0, n).
bool is_permutation_of_range(const std::vector<std::size_t>& order, std::size_t n);

}  // namespace deformsim
