#include "deformsim/cache_model.hpp"

#include <algorithm>
#include <cmath>
#include <iterator>
#include <limits>
#include <string>

#include "deformsim/errors.hpp"

namespace deformsim {

namespace {

void sort_unique(LineSet& lines) {
    std::sort(lines.begin(), lines.end());
    lines.erase(std::unique(lines.begin(), lines.end()), lines.end());
}

bool contains(const LineSet& set, const LineId& line) { return std::binary_search(set.begin(), set.end(), line); }

LineSet intersection(const LineSet& a, const LineSet& b) {
    LineSet out;
    std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
    return out;
}

void finish_report(SimReport& r, std::size_t steps, const CacheGeometry& geometry, const TimingConfig& timing) {
    r.hit_rate = r.accesses ? static_cast<double>(r.hits) / static_cast<double>(r.accesses) : 0.0;
    r.stall_cycles = r.cold_start_cycles + r.residual_stall_cycles + r.victim_cycles;
    r.total_cycles = static_cast<std::int64_t>(steps) * timing.t_comp_per_query + r.stall_cycles;
    r.energy_pj = fetch_energy_pj(r.fetched_lines, geometry.bytes_per_line(), timing.energy_per_bit_pj);
}

}  // namespace

std::size_t line_address(const LineId& line, const PyramidShape& shape) {
    const auto& s = shape.levels[static_cast<std::size_t>(line.level)];
    return shape.level_offset(static_cast<std::size_t>(line.level)) +
           static_cast<std::size_t>(line.y) * static_cast<std::size_t>(s.width) + static_cast<std::size_t>(line.x);
}

Footprint footprint(const Query& query, SamplingDims dims, const PyramidShape& shape) {
    Footprint lines;
    lines.reserve(dims.per_query() * 4);
    for (int m = 0; m < dims.heads; ++m) {
        for (int l = 0; l < dims.levels; ++l) {
            const auto level = shape.levels[static_cast<std::size_t>(l)];
            for (int k = 0; k < dims.points; ++k) {
                const auto st = bilinear_stencil(sample_location(query.ref_point, query.offsets[dims.index(m, l, k)],
                                                                 level));
                // All four taps are kept even when a weight is zero: the 2x2 block is fetched as a unit.
                for (int t = 0; t < 4; ++t) {
                    if (BilinearStencil::in_range(st.tap_x(t), st.tap_y(t), level)) {
                        lines.push_back({l, st.tap_y(t), st.tap_x(t)});
                    }
                }
            }
        }
    }
    sort_unique(lines);
    return lines;
}

std::vector<Footprint> footprints(const QueryBatch& queries, const PyramidShape& shape) {
    std::vector<Footprint> out;
    out.reserve(queries.size());
    for (const auto& q : queries.queries) out.push_back(footprint(q, queries.dims, shape));
    return out;
}

std::size_t difference_size(const LineSet& a, const LineSet& b) {
    std::size_t count = 0;
    auto ib = b.begin();
    for (const auto& line : a) {
        while (ib != b.end() && *ib < line) ++ib;
        if (ib == b.end() || *ib != line) ++count;
    }
    return count;
}

void CacheGeometry::validate() const {
    if (capacity_lines < 1) throw ConfigError("cache.capacity_lines", "must be at least 1");
    if (policy == CachePolicy::dooq_pingpong && capacity_lines < 2) {
        throw ConfigError("cache.capacity_lines", "ping-pong needs at least 2 lines");
    }
    if (banks < 1) throw ConfigError("cache.banks", "must be at least 1");
    if (channels < 1) throw ConfigError("cache.channels", "must be at least 1");
    if (bytes_per_element < 1) throw ConfigError("cache.bytes_per_element", "must be at least 1");
}

TimingConfig TimingConfig::defaults(SamplingDims dims, int channels, int parallelism, std::size_t bytes_per_line) {
    TimingConfig t;
    const std::int64_t slices = (channels + parallelism - 1) / parallelism;
    t.t_comp_per_query = static_cast<std::int64_t>(dims.levels) * dims.points * slices;
    t.t_fetch_per_line = std::max<std::int64_t>(
        1, static_cast<std::int64_t>((bytes_per_line + kDefaultBytesPerCycle - 1) / kDefaultBytesPerCycle));
    return t;
}

void TimingConfig::validate() const {
    if (t_fetch_per_line < 1) throw ConfigError("timing.t_fetch_per_line", "must be positive");
    if (t_comp_per_query < 0) throw ConfigError("timing.t_comp_per_query", "must not be negative");
    if (!(energy_per_bit_pj > 0.0)) throw ConfigError("timing.energy_per_bit_pj", "must be positive");
    if (bank_conflict_penalty < 0) throw ConfigError("timing.bank_conflict_penalty", "must not be negative");
}

double fetch_energy_pj(std::uint64_t fetched_lines, std::size_t bytes_per_line, double energy_per_bit_pj) {
    return static_cast<double>(fetched_lines * bytes_per_line * 8) * energy_per_bit_pj;
}

std::int64_t t_stall_analytic(const Schedule& schedule, std::span<const Footprint> footprints,
                              const TimingConfig& timing) {
    std::int64_t lines = 0;
    for (std::size_t i = 0; i + 1 < schedule.order.size(); ++i) {
        lines += static_cast<std::int64_t>(
            difference_size(footprints[schedule.order[i + 1]], footprints[schedule.order[i]]));
    }
    return lines * timing.t_fetch_per_line;
}

SimReport simulate_baseline(std::span<const Footprint> trace, const PyramidShape& shape,
                            const CacheGeometry& geometry, const TimingConfig& timing,
                            std::vector<AccessRecord>* log) {
    geometry.validate();
    timing.validate();
    constexpr auto empty = std::numeric_limits<std::size_t>::max();
    std::vector<std::size_t> tags(geometry.capacity_lines, empty);
    SimReport r;
    for (std::size_t step = 0; step < trace.size(); ++step) {
        for (const auto& line : trace[step]) {
            const auto addr = line_address(line, shape);
            auto& tag = tags[addr % geometry.capacity_lines];
            const bool hit = tag == addr;
            ++r.accesses;
            if (hit) {
                ++r.hits;
            } else {
                ++r.misses;
                ++r.fetched_lines;
                r.victim_cycles += timing.t_fetch_per_line;
                tag = addr;
            }
            if (log) log->push_back({static_cast<std::uint32_t>(step), line, hit});
        }
    }
    // Demand misses are the only stall source without prefetch; they are
    // reported through the victim counter, which is the demand-fetch path.
    finish_report(r, trace.size(), geometry, timing);
    r.regional_reuse = r.hit_rate;
    return r;
}

SimReport simulate_dooq_pingpong(const Schedule& schedule, std::span<const Footprint> footprints,
                                 std::span<const LineSet> regions, const CacheGeometry& geometry,
                                 const TimingConfig& timing, std::vector<AccessRecord>* log) {
    geometry.validate();
    timing.validate();
    const std::size_t n = schedule.order.size();
    if (regions.size() != n) {
        throw ConfigError("simulate_dooq_pingpong: " + std::to_string(regions.size()) + " regions for " +
                          std::to_string(n) + " steps");
    }
    const std::size_t buffer = geometry.buffer_lines();
    for (std::size_t i = 0; i < n; ++i) {
        if (regions[i].size() > buffer) {
            std::vector<std::size_t> per_level;
            for (const auto& line : regions[i]) {
                if (per_level.size() <= static_cast<std::size_t>(line.level)) per_level.resize(line.level + 1, 0);
                ++per_level[static_cast<std::size_t>(line.level)];
            }
            const auto worst = std::max_element(per_level.begin(), per_level.end()) - per_level.begin();
            throw ConfigError("cache.capacity_lines",
                              "region at step " + std::to_string(i) + " holds " + std::to_string(regions[i].size()) +
                                  " lines but a ping-pong buffer holds " + std::to_string(buffer) + " (level " +
                                  std::to_string(worst) + " contributes " + std::to_string(per_level[worst]) + ")");
        }
    }

    SimReport r;
    if (n == 0) {
        finish_report(r, 0, geometry, timing);
        return r;
    }

    LineSet active = regions[0];
    LineSet carried;  // lines of `active` that were already resident before this step
    r.fetched_lines += active.size();
    r.cold_start_cycles = static_cast<std::int64_t>(active.size()) * timing.t_fetch_per_line;
    std::uint64_t reuse_hits = 0;
    std::uint64_t reuse_total = 0;

    for (std::size_t i = 0; i < n; ++i) {
        for (const auto& line : footprints[schedule.order[i]]) {
            ++r.accesses;
            bool hit = false;
            if (contains(active, line)) {
                hit = contains(carried, line);
            } else {
                ++r.fetched_lines;
                r.victim_cycles += timing.t_fetch_per_line;
            }
            if (hit) {
                ++r.hits;
            } else {
                ++r.misses;
            }
            if (log) log->push_back({static_cast<std::uint32_t>(i), line, hit});
        }
        if (i + 1 == n) break;

        // Fill the alternate buffer while step i computes.
        const auto& next = regions[i + 1];
        carried = intersection(next, active);
        const auto incoming = next.size() - carried.size();
        const std::int64_t fetch = static_cast<std::int64_t>(incoming) * timing.t_fetch_per_line;
        r.fetched_lines += incoming;
        r.residual_stall_cycles += std::max<std::int64_t>(0, fetch - timing.t_comp_per_query);
        r.covered_cycles += std::min(timing.t_comp_per_query, fetch);
        reuse_hits += carried.size();
        reuse_total += next.size();
        active = next;
    }
    finish_report(r, n, geometry, timing);
    r.regional_reuse = reuse_total ? static_cast<double>(reuse_hits) / static_cast<double>(reuse_total) : 0.0;
    return r;
}

LineSet prefetch_region(NormPoint ref, std::span<const int> radii, const PyramidShape& shape) {
    if (radii.size() != shape.num_levels()) throw ConfigError("prefetch_region: one radius per level required");
    LineSet lines;
    for (std::size_t l = 0; l < shape.num_levels(); ++l) {
        const auto s = shape.levels[l];
        const int r = radii[l];
        if (r < 0) throw ConfigError("prefetch_region: radius must not be negative");
        const int cx = static_cast<int>(std::floor(ref.u * static_cast<double>(s.width - 1)));
        const int cy = static_cast<int>(std::floor(ref.v * static_cast<double>(s.height - 1)));
        const int x_lo = std::max(0, cx - r);
        const int x_hi = std::min(s.width - 1, cx + 1 + r);
        const int y_lo = std::max(0, cy - r);
        const int y_hi = std::min(s.height - 1, cy + 1 + r);
        for (int y = y_lo; y <= y_hi; ++y) {
            for (int x = x_lo; x <= x_hi; ++x) lines.push_back({static_cast<std::int32_t>(l), y, x});
        }
    }
    // Levels are emitted in order and each box row-major, so the set is already sorted.
    return lines;
}

std::vector<int> region_radii(const QueryBatch& queries, const PyramidShape& shape) {
    std::vector<double> peak(shape.num_levels(), 0.0);
    const auto& dims = queries.dims;
    for (const auto& q : queries.queries) {
        for (int m = 0; m < dims.heads; ++m) {
            for (int l = 0; l < dims.levels; ++l) {
                const auto s = shape.levels[static_cast<std::size_t>(l)];
                for (int k = 0; k < dims.points; ++k) {
                    const auto& off = q.offsets[dims.index(m, l, k)];
                    const double px = std::max(std::abs(off.u) * static_cast<double>(s.width - 1),
                                               std::abs(off.v) * static_cast<double>(s.height - 1));
                    peak[static_cast<std::size_t>(l)] = std::max(peak[static_cast<std::size_t>(l)], px);
                }
            }
        }
    }
    std::vector<int> radii(peak.size());
    for (std::size_t l = 0; l < peak.size(); ++l) radii[l] = static_cast<int>(std::ceil(peak[l])) + 1;
    return radii;
}

std::vector<LineSet> step_regions(const Schedule& schedule, const QueryBatch& queries, std::span<const int> radii,
                                  const PyramidShape& shape) {
    std::vector<LineSet> out;
    out.reserve(schedule.size());
    for (const auto pos : schedule.order) out.push_back(prefetch_region(queries.queries[pos].ref_point, radii, shape));
    return out;
}

void check_region_capacity(std::span<const int> radii, const PyramidShape& shape, const CacheGeometry& geometry) {
    std::size_t total = 0;
    for (std::size_t l = 0; l < shape.num_levels() && l < radii.size(); ++l) {
        const auto side = static_cast<std::size_t>(2 * radii[l] + 2);
        total += std::min(side, static_cast<std::size_t>(shape.levels[l].width)) *
                 std::min(side, static_cast<std::size_t>(shape.levels[l].height));
        if (total > geometry.buffer_lines()) {
            throw ConfigError("cache.capacity_lines",
                              "prefetch region overflows a ping-pong buffer of " +
                                  std::to_string(geometry.buffer_lines()) + " lines at level " + std::to_string(l) +
                                  " with radius " + std::to_string(radii[l]) + " (" + std::to_string(total) +
                                  " lines so far)");
        }
    }
}

int bank_of(int x, int y, int banks) {
    const int b = (x + 2 * y) % banks;
    return b < 0 ? b + banks : b;
}

std::uint64_t bank_conflict_count(std::span<const TapGroup> groups, int banks) {
    if (banks < 1) throw ConfigError("bank_conflict_count: banks must be at least 1");
    std::uint64_t conflicts = 0;
    for (const auto& g : groups) {
        for (int i = 0; i < g.count; ++i) {
            for (int j = i + 1; j < g.count; ++j) {
                const auto a = static_cast<std::size_t>(i);
                const auto b = static_cast<std::size_t>(j);
                if (bank_of(g.xs[a], g.ys[a], banks) == bank_of(g.xs[b], g.ys[b], banks)) ++conflicts;
            }
        }
    }
    return conflicts;
}

std::vector<TapGroup> tap_groups(const Query& query, SamplingDims dims, const PyramidShape& shape) {
    std::vector<TapGroup> groups;
    groups.reserve(dims.per_query());
    for (int m = 0; m < dims.heads; ++m) {
        for (int l = 0; l < dims.levels; ++l) {
            const auto level = shape.levels[static_cast<std::size_t>(l)];
            for (int k = 0; k < dims.points; ++k) {
                const auto st = bilinear_stencil(sample_location(query.ref_point, query.offsets[dims.index(m, l, k)],
                                                                 level));
                TapGroup g;
                for (int t = 0; t < 4; ++t) {
                    if (!BilinearStencil::in_range(st.tap_x(t), st.tap_y(t), level)) continue;
                    g.xs[static_cast<std::size_t>(g.count)] = st.tap_x(t);
                    g.ys[static_cast<std::size_t>(g.count)] = st.tap_y(t);
                    ++g.count;
                }
                if (g.count > 0) groups.push_back(g);
            }
        }
    }
    return groups;
}

std::vector<TapGroup> tap_groups(const LineSet& lines) {
    std::vector<TapGroup> groups;
    for (const auto& line : lines) {
        const LineId right{line.level, line.y, line.x + 1};
        const LineId below{line.level, line.y + 1, line.x};
        const LineId diag{line.level, line.y + 1, line.x + 1};
        if (contains(lines, right) && contains(lines, below) && contains(lines, diag)) {
            groups.push_back({{line.x, line.x + 1, line.x, line.x + 1}, {line.y, line.y, line.y + 1, line.y + 1}, 4});
        }
    }
    return groups;
}

}  // namespace deformsim
