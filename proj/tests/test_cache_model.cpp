#include <doctest.h>

#include <algorithm>
#include <numeric>
#include <string>

#include "deformsim/cache_model.hpp"
#include "deformsim/errors.hpp"
#include "deformsim/oracle/instances.hpp"
#include "deformsim/oracle/oracle.hpp"
#include "deformsim/scheduler.hpp"
#include "deformsim/workload.hpp"

using namespace deformsim;

namespace {

const PyramidShape kSmall{{{8, 8}, {4, 4}}, 4};

Query query_at(NormPoint ref, std::vector<NormPoint> offsets) {
    Query q;
    q.ref_point = ref;
    q.offsets = std::move(offsets);
    q.logits.assign(q.offsets.size(), 0.0);
    return q;
}

LineSet box(std::int32_t level, int y0, int x0, int side) {
    LineSet s;
    for (int y = y0; y < y0 + side; ++y) {
        for (int x = x0; x < x0 + side; ++x) s.push_back({level, y, x});
    }
    return s;
}

Schedule shuffled(std::size_t n, Rng& rng) {
    Schedule s = identity_schedule(n);
    rng.shuffle(s.order.begin(), s.order.end());
    if (n > 1) s.lookahead.assign(s.order.begin() + 1, s.order.end());
    return s;
}

CacheGeometry pingpong_geometry(std::size_t capacity) {
    CacheGeometry g;
    g.policy = CachePolicy::dooq_pingpong;
    g.capacity_lines = capacity;
    return g;
}

}  // namespace

TEST_CASE("footprint definition") {
    const SamplingDims one{1, 1, 1};
    const PyramidShape shape{{{9, 9}}, 4};
    SUBCASE("a sample on a grid point keeps its full 2x2 block") {
        const auto f = footprint(query_at({0.5, 0.5}, {{0.0, 0.0}}), one, shape);
        CHECK(f == box(0, 4, 4, 2));
    }
    SUBCASE("two samples in one neighbourhood share lines") {
        const SamplingDims two{1, 1, 2};
        const auto f = footprint(query_at({0.5, 0.5}, {{0.01, 0.01}, {0.05, 0.06}}), two, shape);
        CHECK(f.size() == 4);
    }
    SUBCASE("out-of-range taps are dropped") {
        const auto f = footprint(query_at({1.0, 1.0}, {{0.0, 0.0}}), one, shape);
        CHECK(f == LineSet{{0, 8, 8}});
        CHECK(footprint(query_at({0.0, 0.0}, {{-0.5, 0.0}}), one, shape).empty());
    }
}

TEST_CASE("footprints agree with per-tap enumeration") {
    for (std::uint64_t seed = 1; seed <= 30; ++seed) {
        oracle::InstanceShape s;
        s.levels = 2;
        s.queries = 5;
        s.heads = 3;
        s.channels = 6;
        const auto inst = oracle::attention_instance(seed, s);
        const auto shape = inst.pyramid.shape();
        const auto all = footprints(inst.queries, shape);
        for (std::size_t i = 0; i < inst.queries.size(); ++i) {
            CHECK(all[i] == oracle::footprint(inst.queries.queries[i], inst.queries.dims, shape));
            for (const auto& line : all[i]) {
                const auto lv = shape.levels[static_cast<std::size_t>(line.level)];
                CHECK(BilinearStencil::in_range(line.x, line.y, lv));
            }
        }
    }
}

TEST_CASE("line addresses are dense and level-major") {
    std::vector<std::size_t> seen;
    for (std::int32_t l = 0; l < 2; ++l) {
        const auto s = kSmall.levels[static_cast<std::size_t>(l)];
        for (int y = 0; y < s.height; ++y) {
            for (int x = 0; x < s.width; ++x) seen.push_back(line_address({l, y, x}, kSmall));
        }
    }
    for (std::size_t i = 0; i < seen.size(); ++i) CHECK(seen[i] == i);
}

TEST_CASE("t_stall_analytic") {
    TimingConfig t;
    SUBCASE("identical queries stall nothing") {
        const std::vector<Footprint> fps(5, box(0, 1, 1, 3));
        CHECK(t_stall_analytic(identity_schedule(5), fps, t) == 0);
    }
    SUBCASE("two disjoint footprints of 16 lines at 4 cycles per line") {
        t.t_fetch_per_line = 4;
        const std::vector<Footprint> fps{box(0, 0, 0, 4), box(0, 4, 4, 4)};
        CHECK(t_stall_analytic(identity_schedule(2), fps, t) == 64);
    }
    SUBCASE("random eight-query instances equal set arithmetic") {
        Rng rng(21);
        for (int i = 0; i < 100; ++i) {
            const auto fps = oracle::random_footprints(rng, kSmall, 8, 12);
            const auto s = shuffled(8, rng);
            t.t_fetch_per_line = 1 + static_cast<std::int64_t>(rng.below(6));
            CHECK(t_stall_analytic(s, fps, t) == oracle::stall_set_difference(s.order, fps, t.t_fetch_per_line));
        }
    }
}

TEST_CASE("direct-mapped baseline") {
    CacheGeometry g;
    g.capacity_lines = 16;
    g.channels = kSmall.channels;
    TimingConfig t;
    t.t_fetch_per_line = 3;
    SUBCASE("one line touched repeatedly misses once") {
        const std::vector<Footprint> trace(10, LineSet{{0, 2, 3}});
        const auto r = simulate_baseline(trace, kSmall, g, t);
        CHECK(r.misses == 1);
        CHECK(r.hits == 9);
        CHECK(r.stall_cycles == 3);
        CHECK(r.total_cycles == 10 * t.t_comp_per_query + 3);
    }
    SUBCASE("capacity + 1 lines in one set thrash") {
        const PyramidShape big{{{32, 32}}, 4};
        std::vector<Footprint> trace;
        for (int round = 0; round < 2; ++round) {
            for (std::size_t k = 0; k <= g.capacity_lines; ++k) {
                const auto addr = 5 + k * g.capacity_lines;
                trace.push_back({LineId{0, static_cast<std::int32_t>(addr / 32), static_cast<std::int32_t>(addr % 32)}});
            }
        }
        const auto r = simulate_baseline(trace, big, g, t);
        CHECK(r.hits == 0);
        CHECK(r.misses == trace.size());
    }
    SUBCASE("random traces match the map-based simulator access by access") {
        Rng rng(5);
        for (int i = 0; i < 120; ++i) {
            g.capacity_lines = 4 + rng.below(61);
            const auto trace = oracle::random_footprints(rng, kSmall, 30, 8);
            std::vector<AccessRecord> log;
            const auto r = simulate_baseline(trace, kSmall, g, t, &log);
            const auto expected = oracle::direct_mapped_hits(oracle::flatten(trace, kSmall), g.capacity_lines);
            REQUIRE(log.size() == expected.size());
            for (std::size_t k = 0; k < log.size(); ++k) CHECK(log[k].hit == expected[k]);
            CHECK(r.hits + r.misses == r.accesses);
            CHECK(r.fetched_lines == r.misses);
            CHECK(r.energy_pj == fetch_energy_pj(r.fetched_lines, g.bytes_per_line(), t.energy_per_bit_pj));
        }
    }
}

TEST_CASE("ping-pong region buffers") {
    const auto g = pingpong_geometry(256);
    SUBCASE("compute that covers every fetch leaves only the cold start") {
        Rng rng(3);
        const auto regions = oracle::random_footprints(rng, kSmall, 12, 20);
        TimingConfig t;
        t.t_fetch_per_line = 2;
        t.t_comp_per_query = 40;  // >= 20 lines * 2 cycles
        const auto r = simulate_dooq_pingpong(identity_schedule(12), regions, regions, g, t);
        CHECK(r.residual_stall_cycles == 0);
        CHECK(r.victim_cycles == 0);
        CHECK(r.stall_cycles == r.cold_start_cycles);
        CHECK(r.cold_start_cycles == static_cast<std::int64_t>(regions[0].size()) * 2);
        CHECK(r.total_cycles == 12 * 40 + r.cold_start_cycles);
    }
    SUBCASE("with no compute to hide behind, residual stall is the analytic stall") {
        Rng rng(4);
        for (int i = 0; i < 100; ++i) {
            const auto fps = oracle::random_footprints(rng, kSmall, 10, 16);
            const auto s = shuffled(10, rng);
            TimingConfig t;
            t.t_fetch_per_line = 1 + static_cast<std::int64_t>(rng.below(4));
            t.t_comp_per_query = 0;
            std::vector<LineSet> regions;
            for (const auto pos : s.order) regions.push_back(fps[pos]);
            const auto r = simulate_dooq_pingpong(s, fps, regions, g, t);
            CHECK(r.residual_stall_cycles == t_stall_analytic(s, fps, t));
            CHECK(r.victim_cycles == 0);
            CHECK(r.covered_cycles == 0);
        }
    }
    SUBCASE("queries inside one region miss only at the first step") {
        const auto w = generate_workload([] {
            auto spec = oracle::planted_cluster_spec(2, 20);
            spec.clusters = 1;
            spec.cluster_spread = 0.0;
            return spec;
        }());
        const auto shape = w.pyramid.shape();
        const auto radii = region_radii(w.queries, shape);
        const auto s = identity_schedule(w.queries.size());
        const auto regions = step_regions(s, w.queries, radii, shape);
        auto geom = pingpong_geometry(4096);
        geom.channels = shape.channels;
        std::vector<AccessRecord> log;
        const auto r = simulate_dooq_pingpong(s, footprints(w.queries, shape), regions, geom, TimingConfig{}, &log);
        CHECK(r.victim_cycles == 0);
        for (const auto& a : log) CHECK(a.hit == (a.step > 0));
        CHECK(r.regional_reuse == 1.0);
    }
    SUBCASE("off-region taps take the victim path") {
        const std::vector<Footprint> fps{LineSet{{0, 0, 0}, {0, 7, 7}}, LineSet{{0, 0, 0}}};
        const std::vector<LineSet> regions{LineSet{{0, 0, 0}}, LineSet{{0, 0, 0}}};
        TimingConfig t;
        t.t_fetch_per_line = 5;
        t.t_comp_per_query = 0;
        const auto r = simulate_dooq_pingpong(identity_schedule(2), fps, regions, g, t);
        CHECK(r.victim_cycles == 5);
        CHECK(r.hits == 1);
        CHECK(r.misses == 2);
        CHECK(r.fetched_lines == 2);
    }
    SUBCASE("a region larger than one buffer is a configuration error") {
        const std::vector<LineSet> regions{box(0, 0, 0, 4), box(0, 0, 0, 6)};
        try {
            simulate_dooq_pingpong(identity_schedule(2), regions, regions, pingpong_geometry(40), TimingConfig{});
            FAIL("expected a configuration error");
        } catch (const ConfigError& e) {
            CHECK(e.field_path() == "cache.capacity_lines");
            CHECK(std::string(e.what()).find("level 0") != std::string::npos);
        }
    }
    SUBCASE("misaligned regions are rejected") {
        const std::vector<LineSet> regions{box(0, 0, 0, 2)};
        CHECK_THROWS_AS(simulate_dooq_pingpong(identity_schedule(2), regions, regions, g, TimingConfig{}), ConfigError);
    }
}

TEST_CASE("prefetch regions") {
    const PyramidShape shape{{{21, 21}, {11, 11}}, 4};
    SUBCASE("radius zero is the 2x2 block holding the point") {
        const std::vector<int> r{0, 0};
        const auto lines = prefetch_region({0.52, 0.47}, r, shape);
        CHECK(lines.size() == 8);
        CHECK(std::count_if(lines.begin(), lines.end(), [](const LineId& l) { return l.level == 0; }) == 4);
    }
    SUBCASE("radius one at the centre is a 4x4 box") {
        const std::vector<int> r{1, 1};
        const auto lines = prefetch_region({0.5, 0.5}, r, shape);
        CHECK(lines.size() == 32);
        CHECK(lines == oracle::prefetch_region({0.5, 0.5}, r, shape));
    }
    SUBCASE("corners clip") {
        const std::vector<int> r{3, 7};
        for (const NormPoint p : {NormPoint{0.0, 0.0}, NormPoint{1.0, 1.0}, NormPoint{0.0, 1.0}}) {
            const auto lines = prefetch_region(p, r, shape);
            for (const auto& l : lines) CHECK(BilinearStencil::in_range(l.x, l.y, shape.levels[static_cast<std::size_t>(l.level)]));
            CHECK(lines == oracle::prefetch_region(p, r, shape));
        }
    }
    SUBCASE("random points and radii agree with the full scan") {
        Rng rng(6);
        for (int i = 0; i < 200; ++i) {
            const std::vector<int> r{static_cast<int>(rng.below(6)), static_cast<int>(rng.below(6))};
            const NormPoint p{rng.uniform(), rng.uniform()};
            const auto lines = prefetch_region(p, r, shape);
            CHECK(std::is_sorted(lines.begin(), lines.end()));
            CHECK(lines == oracle::prefetch_region(p, r, shape));
        }
    }
    SUBCASE("negative radius or wrong radius count is rejected") {
        CHECK_THROWS_AS(prefetch_region({0.5, 0.5}, std::vector<int>{1}, shape), ConfigError);
        CHECK_THROWS_AS(prefetch_region({0.5, 0.5}, std::vector<int>{1, -1}, shape), ConfigError);
    }
}

TEST_CASE("derived radii cover every sample's 2x2 block") {
    const auto w = generate_workload(oracle::planted_cluster_spec(9, 50));
    const auto shape = w.pyramid.shape();
    const auto radii = region_radii(w.queries, shape);
    for (const auto& q : w.queries.queries) {
        const auto region = prefetch_region(q.ref_point, radii, shape);
        for (const auto& line : footprint(q, w.queries.dims, shape)) CHECK(std::binary_search(region.begin(), region.end(), line));
    }
}

TEST_CASE("region capacity check names the level") {
    const auto shape = desk_pyramid();
    auto g = pingpong_geometry(220);
    CHECK_NOTHROW(check_region_capacity(std::vector<int>{2, 2, 1, 1}, shape, g));
    try {
        check_region_capacity(std::vector<int>{5, 5, 5, 5}, shape, g);
        FAIL("expected a configuration error");
    } catch (const ConfigError& e) {
        CHECK(e.field_path() == "cache.capacity_lines");
        CHECK(std::string(e.what()).find("level 0") != std::string::npos);
    }
}

TEST_CASE("bank conflicts") {
    SUBCASE("aligned 2x2 groups never conflict with four or more banks") {
        for (int banks = 4; banks <= 16; ++banks) {
            for (int y = 0; y < 6; ++y) {
                for (int x = 0; x < 6; ++x) {
                    const TapGroup g{{x, x + 1, x, x + 1}, {y, y, y + 1, y + 1}, 4};
                    CHECK(bank_conflict_count(std::span<const TapGroup>(&g, 1), banks) == 0);
                }
            }
        }
    }
    SUBCASE("one bank gives six pairs per full group") {
        const auto groups = tap_groups(box(0, 0, 0, 3));
        CHECK(groups.size() == 4);
        CHECK(bank_conflict_count(groups, 1) == 24);
    }
    SUBCASE("random footprints agree with pairwise counting") {
        for (std::uint64_t seed = 1; seed <= 20; ++seed) {
            oracle::InstanceShape s;
            s.queries = 3;
            const auto inst = oracle::attention_instance(seed, s);
            const auto shape = inst.pyramid.shape();
            for (const auto& q : inst.queries.queries) {
                const auto groups = tap_groups(q, inst.queries.dims, shape);
                std::vector<std::vector<std::pair<int, int>>> plain;
                for (const auto& g : groups) {
                    auto& v = plain.emplace_back();
                    for (int t = 0; t < g.count; ++t) v.emplace_back(g.xs[static_cast<std::size_t>(t)], g.ys[static_cast<std::size_t>(t)]);
                }
                for (const int banks : {1, 2, 3, 8}) CHECK(bank_conflict_count(groups, banks) == oracle::bank_conflicts(plain, banks));
            }
        }
    }
    SUBCASE("bank interleave") {
        CHECK(bank_of(1, 2, 8) == 5);
        CHECK(bank_of(7, 3, 4) == 1);
        CHECK_THROWS_AS(bank_conflict_count({}, 0), ConfigError);
    }
}

TEST_CASE("timing defaults and validation") {
    const auto t = TimingConfig::defaults({4, 4, 4}, 32, 8, 32);
    CHECK(t.t_comp_per_query == 4 * 4 * 4);
    CHECK(t.t_fetch_per_line == 1);
    CHECK(t.energy_per_bit_pj == 1.21);
    CHECK(TimingConfig::defaults({8, 4, 4}, 256, 8, 1024).t_fetch_per_line == 4);
    TimingConfig bad;
    bad.t_fetch_per_line = 0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    CacheGeometry g = pingpong_geometry(1);
    CHECK_THROWS_AS(g.validate(), ConfigError);
}

TEST_CASE("energy is fetched bits times energy per bit, exactly") {
    CHECK(fetch_energy_pj(10, 32, 1.21) == 10.0 * 32 * 8 * 1.21);
    CHECK(fetch_energy_pj(0, 32, 1.21) == 0.0);
}

TEST_CASE("DOOQ raises the ping-pong hit rate over a shuffled batch order on clustered workloads") {
    double dooq_sum = 0.0;
    double shuffled_sum = 0.0;
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        auto spec = oracle::planted_cluster_spec(seed, 128);
        spec.clusters = 8;
        spec.shared_offsets = false;
        const auto w = generate_workload(spec);
        const auto shape = w.pyramid.shape();
        const auto fps = footprints(w.queries, shape);
        const auto radii = region_radii(w.queries, shape);
        auto geom = pingpong_geometry(2048);
        geom.channels = shape.channels;
        SchedulerConfig c;
        c.window = 128;
        const auto d = dooq_schedule(w.queries, c);
        Rng rng(seed);
        const auto s = shuffled(w.queries.size(), rng);
        const TimingConfig t;
        const auto a = simulate_dooq_pingpong(d, fps, step_regions(d, w.queries, radii, shape), geom, t);
        const auto b = simulate_dooq_pingpong(s, fps, step_regions(s, w.queries, radii, shape), geom, t);
        for (const auto* r : {&a, &b}) {
            CHECK(r->hits + r->misses == r->accesses);
            CHECK(r->hit_rate >= 0.0);
            CHECK(r->hit_rate <= 1.0);
            CHECK(r->energy_pj == fetch_energy_pj(r->fetched_lines, geom.bytes_per_line(), t.energy_per_bit_pj));
        }
        dooq_sum += a.hit_rate;
        shuffled_sum += b.hit_rate;
    }
    CHECK(dooq_sum / 20 >= shuffled_sum / 20);
}
