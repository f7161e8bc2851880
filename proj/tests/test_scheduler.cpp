#include <doctest.h>

#include <algorithm>
#include <numeric>

#include "deformsim/cache_model.hpp"
#include "deformsim/errors.hpp"
#include "deformsim/oracle/instances.hpp"
#include "deformsim/oracle/oracle.hpp"
#include "deformsim/scheduler.hpp"
#include "deformsim/workload.hpp"

using namespace deformsim;

namespace {

std::vector<NormPoint> random_points(Rng& rng, std::size_t n) {
    std::vector<NormPoint> pts(n);
    for (auto& p : pts) p = {rng.uniform(), rng.uniform()};
    return pts;
}

std::vector<std::int64_t> positions(std::size_t n) {
    std::vector<std::int64_t> ids(n);
    std::iota(ids.begin(), ids.end(), 0);
    return ids;
}

void check_schedule_shape(const Schedule& s, std::size_t n) {
    CHECK(is_permutation_of_range(s.order, n));
    std::vector<std::size_t> sorted = s.order;
    std::sort(sorted.begin(), sorted.end());
    for (std::size_t i = 0; i < n; ++i) CHECK(sorted[i] == i);
    REQUIRE(s.lookahead.size() + 1 == n);
    for (std::size_t i = 0; i + 1 < n; ++i) CHECK(s.lookahead[i] == s.order[i + 1]);
    CHECK(s.sorter.size() == n);
}

}  // namespace

TEST_CASE("l1_distance") {
    CHECK(l1_distance({0.3, 0.7}, {0.3, 0.7}) == 0.0);
    CHECK(l1_distance({0.0, 0.0}, {1.0, 1.0}) == 2.0);
    CHECK(l1_distance({0.25, 0.5}, {0.5, 0.1}) == doctest::Approx(0.65).epsilon(1e-15));
    CHECK(l1_distance({0.5, 0.1}, {0.25, 0.5}) == l1_distance({0.25, 0.5}, {0.5, 0.1}));
}

TEST_CASE("scheduler config validation and slack") {
    SchedulerConfig c;
    c.channels = 256;
    c.parallelism = 8;
    CHECK(c.slack_cycles() == 32);
    c.parallelism = 3;
    CHECK(c.slack_cycles() == 86);
    c.window = 0;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c.window = 1;
    c.parallelism = 0;
    CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("a window of one keeps the batch order") {
    Rng rng(1);
    for (int t = 0; t < 20; ++t) {
        const auto n = 1 + rng.below(50);
        SchedulerConfig c;
        c.window = 1;
        const auto s = dooq_schedule(random_points(rng, n), positions(n), c);
        check_schedule_shape(s, n);
        for (std::size_t i = 0; i < n; ++i) CHECK(s.order[i] == i);
    }
}

TEST_CASE("four points on a line chain nearest first") {
    const std::vector<NormPoint> pts{{0.0, 0.0}, {0.9, 0.0}, {0.1, 0.0}, {0.8, 0.0}};
    SchedulerConfig c;
    c.window = 4;
    const auto s = dooq_schedule(pts, positions(4), c);
    // 0 -> 0.1 (id 2) -> 0.8 (id 3) -> 0.9 (id 1).
    CHECK(s.order == std::vector<std::size_t>{0, 2, 3, 1});
    CHECK(s.lookahead == std::vector<std::size_t>{2, 3, 1});
}

TEST_CASE("equal distances go to the lower id") {
    const std::vector<NormPoint> pts{{0.5, 0.5}, {0.75, 0.5}, {0.25, 0.5}, {0.5, 0.75}};
    SchedulerConfig c;
    c.window = 4;
    SUBCASE("ids follow positions") {
        CHECK(dooq_schedule(pts, positions(4), c).order[1] == 1);
    }
    SUBCASE("ids reversed") {
        const std::vector<std::int64_t> ids{40, 30, 20, 10};
        CHECK(dooq_schedule(pts, ids, c).order[1] == 3);
    }
}

TEST_CASE("the window refills one query per emission in batch order") {
    // With w = 2 the scheduler only ever compares two pending queries.
    const std::vector<NormPoint> pts{{0.0, 0.0}, {0.9, 0.0}, {0.8, 0.0}, {0.05, 0.0}, {0.85, 0.0}};
    SchedulerConfig c;
    c.window = 2;
    const auto s = dooq_schedule(pts, positions(5), c);
    // Window {1,2}: 0.8 wins; refill 3 -> {1,3}: 0.9 wins; refill 4 -> {3,4}: 0.85 wins; then 3.
    CHECK(s.order == std::vector<std::size_t>{0, 2, 1, 4, 3});
}

TEST_CASE("dooq agrees with the list-based greedy oracle") {
    Rng rng(12);
    for (int t = 0; t < 60; ++t) {
        const auto n = 1 + rng.below(120);
        const auto w = 1 + rng.below(40);
        const auto pts = random_points(rng, n);
        SchedulerConfig c;
        c.window = static_cast<int>(w);
        const auto s = dooq_schedule(pts, positions(n), c);
        check_schedule_shape(s, n);
        CHECK(s.order == oracle::greedy_window_order(pts, w));
    }
}

TEST_CASE("dooq on a query batch uses reference points and ids") {
    const auto w = generate_workload(oracle::planted_cluster_spec(4, 40));
    SchedulerConfig c;
    c.window = 16;
    const auto a = dooq_schedule(w.queries, c);
    std::vector<NormPoint> pts;
    std::vector<std::int64_t> ids;
    for (const auto& q : w.queries.queries) {
        pts.push_back(q.ref_point);
        ids.push_back(q.id);
    }
    CHECK(a.order == dooq_schedule(pts, ids, c).order);
    SUBCASE("deterministic") { CHECK(dooq_schedule(w.queries, c).order == a.order); }
}

TEST_CASE("a single query schedules trivially") {
    SchedulerConfig c;
    c.window = 8;
    const auto s = dooq_schedule(std::vector<NormPoint>{{0.2, 0.2}}, positions(1), c);
    CHECK(s.order == std::vector<std::size_t>{0});
    CHECK(s.lookahead.empty());
}

TEST_CASE("sorter cost examples") {
    SchedulerConfig c;
    c.window = 1024;
    c.channels = 256;
    c.parallelism = 8;
    CHECK(sorter_cost(1, c) == SorterCost{0, 1, true});
    CHECK(sorter_cost(2, c).stages == 1);
    CHECK(sorter_cost(2, c).comparators == 1);
    const auto big = sorter_cost(512, c);
    CHECK(big.stages == 45);
    CHECK(big.comparators == 256);
    CHECK(c.slack_cycles() == 32);
    CHECK_FALSE(big.fits_in_slack);
    c.parallelism = 4;
    CHECK(c.slack_cycles() == 64);
    CHECK(sorter_cost(512, c).fits_in_slack);
    CHECK(sorter_cost(3, c).stages == 3);
    CHECK(sorter_cost(5, c).comparators == 3);
}

TEST_CASE("sorter depth matches an explicit bitonic network") {
    SchedulerConfig c;
    c.window = 1024;
    for (int occ = 1; occ <= 1024; ++occ) CHECK(sorter_cost(occ, c).stages == oracle::bitonic_network_depth(occ));
}

TEST_CASE("per-emission sorter costs follow the window occupancy") {
    SchedulerConfig c;
    c.window = 4;
    Rng rng(2);
    const auto s = dooq_schedule(random_points(rng, 10), positions(10), c);
    // The first query is emitted without a selection; after that the window
    // holds min(w, remaining) candidates.
    for (std::size_t i = 1; i < s.size(); ++i) {
        const int occ = static_cast<int>(std::min<std::size_t>(4, s.size() - i));
        CHECK(s.sorter[i] == sorter_cost(occ, c));
    }
}

TEST_CASE("dooq never loses to batch order on planted clusters of eight") {
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        const auto w = generate_workload(oracle::planted_cluster_spec(seed, 8));
        const auto fps = footprints(w.queries, w.pyramid.shape());
        SchedulerConfig c;
        c.window = 8;
        const TimingConfig t;
        const auto dooq = t_stall_analytic(dooq_schedule(w.queries, c), fps, t);
        const auto ident = t_stall_analytic(identity_schedule(fps.size()), fps, t);
        const auto best = oracle::exhaustive_min_stall(fps, t.t_fetch_per_line);
        CHECK(best.orders_checked == 40320);
        CHECK(dooq <= ident);
        CHECK(best.best_stall <= dooq);
    }
}

TEST_CASE("larger windows help on average over clustered batches") {
    // Mean over 20 seeds; per-seed monotonicity is not expected of a greedy walk.
    std::vector<double> mean_stall;
    for (const int window : {1, 8, 64}) {
        double sum = 0.0;
        for (std::uint64_t seed = 1; seed <= 20; ++seed) {
            auto spec = oracle::planted_cluster_spec(seed, 64);
            spec.clusters = 4;
            const auto w = generate_workload(spec);
            const auto fps = footprints(w.queries, w.pyramid.shape());
            SchedulerConfig c;
            c.window = window;
            sum += static_cast<double>(t_stall_analytic(dooq_schedule(w.queries, c), fps, TimingConfig{}));
        }
        mean_stall.push_back(sum / 20);
    }
    CHECK(mean_stall[1] <= mean_stall[0]);
    CHECK(mean_stall[2] <= mean_stall[1]);
    CHECK(mean_stall[2] < mean_stall[0]);
}

TEST_CASE("is_permutation_of_range") {
    CHECK(is_permutation_of_range({2, 0, 1}, 3));
    CHECK_FALSE(is_permutation_of_range({2, 0, 0}, 3));
    CHECK_FALSE(is_permutation_of_range({0, 1}, 3));
    CHECK_FALSE(is_permutation_of_range({0, 3, 1}, 3));
    CHECK(is_permutation_of_range({}, 0));
}
