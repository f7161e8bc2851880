#pragma once

#include <array>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "deformsim/attention.hpp"
#include "deformsim/scheduler.hpp"

namespace deformsim {

/// One cache line: the full D-vector at one spatial location of one level.
struct LineId {
    std::int32_t level = 0;
    std::int32_t y = 0;
    std::int32_t x = 0;

    auto operator<=>(const LineId&) const = default;
    bool operator==(const LineId&) const = default;
};

/// Sorted, duplicate-free set of lines.
using LineSet = std::vector<LineId>;
/// Lines touched by one query: the in-range 2x2 taps of all its M*L*K samples.
using Footprint = LineSet;

/// Flat address of a line with all levels laid out back to back, row-major.
std::size_t line_address(const LineId& line, const PyramidShape& shape);

Footprint footprint(const Query& query, SamplingDims dims, const PyramidShape& shape);
/// footprint() for every query, indexed by batch position.
std::vector<Footprint> footprints(const QueryBatch& queries, const PyramidShape& shape);

/// |a \ b| for sorted sets.
std::size_t difference_size(const LineSet& a, const LineSet& b);

enum class CachePolicy { direct_mapped, dooq_pingpong };

struct CacheGeometry {
    std::size_t capacity_lines = 512;
    CachePolicy policy = CachePolicy::direct_mapped;
    int banks = 8;
    int channels = 32;
    int bytes_per_element = 1;

    std::size_t bytes_per_line() const {
        return static_cast<std::size_t>(channels) * static_cast<std::size_t>(bytes_per_element);
    }
    /// Size of each ping-pong half.
    std::size_t buffer_lines() const { return capacity_lines / 2; }
    void validate() const;
};

/// External bandwidth used for the default per-line fetch time, in bytes per cycle.
inline constexpr std::size_t kDefaultBytesPerCycle = 256;
inline constexpr double kDefaultEnergyPerBitPj = 1.21;

struct TimingConfig {
    std::int64_t t_fetch_per_line = 1;
    std::int64_t t_comp_per_query = 64;
    double energy_per_bit_pj = kDefaultEnergyPerBitPj;
    std::int64_t bank_conflict_penalty = 0;  ///< cycles per conflicting tap pair; 0 keeps conflicts diagnostic

    /// t_comp = L*K*ceil(D/p_d); t_fetch = ceil(bytes_per_line / bandwidth), at least 1.
    static TimingConfig defaults(SamplingDims dims, int channels, int parallelism, std::size_t bytes_per_line);
    /// t_fetch_per_line and energy must be positive; t_comp and the penalty non-negative.
    void validate() const;
};

struct SimReport {
    std::uint64_t accesses = 0;
    std::uint64_t hits = 0;
    std::uint64_t misses = 0;
    double hit_rate = 0.0;
    std::uint64_t fetched_lines = 0;
    std::int64_t stall_cycles = 0;           ///< cold_start + residual + victim
    std::int64_t cold_start_cycles = 0;      ///< first region fetched before any compute
    std::int64_t residual_stall_cycles = 0;  ///< prefetch time not hidden behind compute
    std::int64_t victim_cycles = 0;          ///< off-region taps fetched on demand
    std::int64_t covered_cycles = 0;         ///< prefetch time hidden behind compute
    std::int64_t total_cycles = 0;
    double energy_pj = 0.0;
    double regional_reuse = 0.0;
    std::uint64_t bank_conflicts = 0;
};

/// energy = fetched_lines * bytes_per_line * 8 * energy_per_bit.
double fetch_energy_pj(std::uint64_t fetched_lines, std::size_t bytes_per_line, double energy_per_bit_pj);

struct AccessRecord {
    std::uint32_t step = 0;
    LineId line;
    bool hit = false;

    bool operator==(const AccessRecord&) const = default;
};

/// Miss-driven stall of an execution order: sum over consecutive steps of
/// t_fetch * |M(next) \ M(current)|. No overlap, no capacity limit.
/// `footprints` is indexed by batch position.
std::int64_t t_stall_analytic(const Schedule& schedule, std::span<const Footprint> footprints,
                              const TimingConfig& timing);

/// Direct-mapped cache over the footprints in processing order. The set index
/// is the line's flat address modulo capacity; each miss stalls t_fetch.
SimReport simulate_baseline(std::span<const Footprint> trace, const PyramidShape& shape,
                            const CacheGeometry& geometry, const TimingConfig& timing,
                            std::vector<AccessRecord>* log = nullptr);

/// Ping-pong region buffers driven by a schedule. regions[i] is the line set
/// resident while step i computes; it is prefetched during step i-1, fetching
/// only lines not already resident. An access hits when its line was carried
/// over from the previous step's buffer. Lines outside the active region go
/// through the victim path at full per-line latency without entering a buffer.
/// `footprints` is indexed by batch position, `regions` by step.
SimReport simulate_dooq_pingpong(const Schedule& schedule, std::span<const Footprint> footprints,
                                 std::span<const LineSet> regions, const CacheGeometry& geometry,
                                 const TimingConfig& timing, std::vector<AccessRecord>* log = nullptr);

/// Lines of the box [floor(c) - r, floor(c) + 1 + r] around the reference point on
/// every level, clipped to the map. r = 0 gives the 2x2 block holding the point.
LineSet prefetch_region(NormPoint ref, std::span<const int> radii, const PyramidShape& shape);

/// Per-level radius ceil(max pixel offset) + 1 over the whole batch.
std::vector<int> region_radii(const QueryBatch& queries, const PyramidShape& shape);

/// prefetch_region for the query at every step of the schedule.
std::vector<LineSet> step_regions(const Schedule& schedule, const QueryBatch& queries, std::span<const int> radii,
                                  const PyramidShape& shape);

/// Throws ConfigError naming the level and radius at which the largest possible
/// region stops fitting in one ping-pong buffer.
void check_region_capacity(std::span<const int> radii, const PyramidShape& shape, const CacheGeometry& geometry);

/// In-range taps of one 2x2 interpolation on one level.
struct TapGroup {
    std::array<int, 4> xs{};
    std::array<int, 4> ys{};
    int count = 0;
};

int bank_of(int x, int y, int banks);
/// Pairs of taps inside each group that map to the same bank.
std::uint64_t bank_conflict_count(std::span<const TapGroup> groups, int banks);
/// One group per sample of the query.
std::vector<TapGroup> tap_groups(const Query& query, SamplingDims dims, const PyramidShape& shape);
/// Every complete 2x2 block contained in a line set.
std::vector<TapGroup> tap_groups(const LineSet& lines);

}  // namespace deformsim
