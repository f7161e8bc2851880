#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "deformsim/attention.hpp"
#include "deformsim/errors.hpp"
#include "deformsim/oracle/oracle.hpp"
#include "deformsim/random.hpp"
#include "deformsim/workload.hpp"

using namespace deformsim;

namespace {

QueryBatch id_batch(std::size_t n) {
    QueryBatch b;
    b.dims = {1, 1, 1};
    for (std::size_t i = 0; i < n; ++i) {
        Query q;
        q.id = static_cast<std::int64_t>(i);
        q.ref_point = {0.5, 0.5};
        q.offsets = {{0.0, 0.0}};
        q.logits = {0.0};
        b.queries.push_back(q);
    }
    return b;
}

AttentionOutput outputs_for(const QueryBatch& b) {
    AttentionOutput out;
    for (const auto& q : b.queries) out.push_back({q.id, {static_cast<double>(q.id) * 1.5}});
    return out;
}

WorkloadSpec encoder_spec(PyramidShape shape, WorkloadMode mode, double keep = 1.0) {
    WorkloadSpec s;
    s.mode = mode;
    s.shape = std::move(shape);
    s.keep_ratio = keep;
    s.seed = 77;
    return s;
}

}  // namespace

TEST_CASE("the dense encoder places one query per location") {
    SUBCASE("full-size pyramid gives 20097 queries") {
        const auto shape = full_scale_pyramid();
        CHECK(shape.total_locations() == 20097);
        auto spec = encoder_spec(shape, WorkloadMode::dense_encoder);
        spec.heads = 8;
        spec.points = 4;
        const auto w = generate_workload(spec);
        CHECK(w.queries.size() == 20097);
        CHECK(w.queries.dims == SamplingDims{8, 4, 4});
        CHECK(w.pyramid.channels() == 256);
    }
    SUBCASE("desk pyramid, raster order level by level") {
        const auto w = generate_workload(encoder_spec(desk_pyramid(), WorkloadMode::dense_encoder));
        CHECK(w.queries.size() == desk_pyramid().total_locations());
        CHECK(w.queries.queries[0].ref_point == NormPoint{0.0, 0.0});
        CHECK(w.queries.queries[63].ref_point == NormPoint{1.0, 0.0});
        CHECK(w.queries.queries[64 * 64].ref_point == NormPoint{0.0, 0.0});
        for (std::size_t i = 0; i < w.queries.size(); ++i) CHECK(w.queries.queries[i].id == static_cast<std::int64_t>(i));
        CHECK_NOTHROW(w.queries.validate());
    }
}

TEST_CASE("grid mode on a single 4x4 level gives the 16 grid points") {
    WorkloadSpec s;
    s.distribution = QueryDistribution::grid;
    s.shape = {{{4, 4}}, 8};
    s.heads = 2;
    const auto w = generate_workload(s);
    REQUIRE(w.queries.size() == 16);
    for (int y = 0; y < 4; ++y) {
        for (int x = 0; x < 4; ++x) {
            const auto& q = w.queries.queries[static_cast<std::size_t>(y * 4 + x)];
            CHECK(q.ref_point.u == doctest::Approx(x / 3.0));
            CHECK(q.ref_point.v == doctest::Approx(y / 3.0));
        }
    }
}

TEST_CASE("generation is deterministic in the seed") {
    WorkloadSpec s;
    s.shape = desk_pyramid();
    s.clusters = 4;
    s.seed = 1234;
    const auto a = generate_workload(s);
    const auto b = generate_workload(s);
    CHECK(a.queries.queries == b.queries.queries);
    CHECK(std::equal(a.pyramid.level(2).data().begin(), a.pyramid.level(2).data().end(), b.pyramid.level(2).data().begin()));
    s.seed = 1235;
    CHECK_FALSE(generate_workload(s).queries.queries == a.queries.queries);
}

TEST_CASE("generated values respect their ranges") {
    WorkloadSpec s;
    s.shape = desk_pyramid();
    s.offset_envelope = 0.05;
    s.decoder_queries = 500;
    const auto w = generate_workload(s);
    CHECK(w.queries.size() == 500);
    for (const auto& q : w.queries.queries) {
        CHECK(q.offsets.size() == s.dims().per_query());
        for (const auto& o : q.offsets) {
            CHECK(std::abs(o.u) <= 0.05);
            CHECK(std::abs(o.v) <= 0.05);
        }
        for (const double a : q.logits) CHECK(std::abs(a) <= 2.0);
    }
    for (const float v : w.pyramid.level(0).data()) CHECK(std::abs(v) <= 1.0F);
    CHECK_NOTHROW(w.queries.validate());
}

TEST_CASE("shared offsets repeat one pattern per cluster") {
    WorkloadSpec s;
    s.shape = desk_pyramid();
    s.clusters = 1;
    s.shared_offsets = true;
    s.decoder_queries = 10;
    const auto w = generate_workload(s);
    for (const auto& q : w.queries.queries) CHECK(q.offsets == w.queries.queries[0].offsets);
}

TEST_CASE("keep counts round up") {
    CHECK(keep_count(20097, 1.0) == 20097);
    CHECK(keep_count(20097, 0.5) == 10049);
    CHECK(keep_count(20097, 0.1) == 2010);
    CHECK(keep_count(100, 0.07) == 7);
    CHECK(keep_count(10, 0.001) == 1);
    CHECK(keep_count(20097, 0.1) + 300 == 2310);
    CHECK_THROWS_AS(keep_count(10, 0.0), ConfigError);
    CHECK_THROWS_AS(keep_count(10, 1.5), ConfigError);
}

TEST_CASE("the sparse encoder keeps ceil(n * rho) queries with original ids") {
    for (const double rho : {1.0, 0.5, 0.1}) {
        const auto w = generate_workload(encoder_spec(desk_pyramid(), WorkloadMode::sparse_encoder, rho));
        CHECK(w.queries.size() == keep_count(desk_pyramid().total_locations(), rho));
        CHECK_NOTHROW(w.queries.validate());
        for (const auto& q : w.queries.queries) CHECK(q.id < static_cast<std::int64_t>(desk_pyramid().total_locations()));
    }
}

TEST_CASE("prune_topk") {
    SUBCASE("keeping everything in score order is the identity remap") {
        const auto b = id_batch(6);
        const std::vector<double> scores{6, 5, 4, 3, 2, 1};
        const auto p = prune_topk(b, scores, 6);
        for (std::size_t i = 0; i < 6; ++i) {
            CHECK(p.remap.inverse[i] == i);
            CHECK(p.remap.forward[i] == static_cast<std::int64_t>(i));
        }
        CHECK(p.queries.queries == b.queries);
    }
    SUBCASE("scores equal to ids keep the top two, best first") {
        const auto b = id_batch(5);
        const std::vector<double> scores{0, 1, 2, 3, 4};
        const auto p = prune_topk(b, scores, 2);
        CHECK(p.remap.kept_ids == std::vector<std::int64_t>{4, 3});
        CHECK(p.remap.forward == std::vector<std::int64_t>{-1, -1, -1, 1, 0});
    }
    SUBCASE("equal scores go to the lower id") {
        const auto b = id_batch(4);
        const std::vector<double> scores{1, 2, 2, 2};
        CHECK(prune_topk(b, scores, 2).remap.kept_ids == std::vector<std::int64_t>{1, 2});
    }
    SUBCASE("forward and inverse are inverse maps") {
        Rng rng(3);
        const auto b = id_batch(100);
        std::vector<double> scores(100);
        for (auto& s : scores) s = std::floor(rng.uniform() * 20);
        const auto p = prune_topk(b, scores, 37);
        CHECK(p.remap.kept_ids.size() == 37);
        for (std::size_t k = 0; k < 37; ++k) CHECK(p.remap.forward[p.remap.inverse[k]] == static_cast<std::int64_t>(k));
        for (std::size_t k = 1; k < 37; ++k) CHECK(scores[p.remap.inverse[k - 1]] >= scores[p.remap.inverse[k]]);
    }
    SUBCASE("bad requests are rejected") {
        const auto b = id_batch(3);
        const std::vector<double> scores{1, 2, 3};
        CHECK_THROWS_AS(prune_topk(b, scores, 0), InputError);
        CHECK_THROWS_AS(prune_topk(b, scores, 4), InputError);
        CHECK_THROWS_AS(prune_topk(b, std::vector<double>{1, 2}, 1), InputError);
        CHECK_THROWS_AS(prune_topk(b, std::vector<double>{1, std::numeric_limits<double>::quiet_NaN(), 3}, 1), InputError);
    }
}

TEST_CASE("scatter_restore") {
    SUBCASE("identity remap leaves outputs unchanged") {
        const auto b = id_batch(5);
        const auto p = prune_topk(b, std::vector<double>{5, 4, 3, 2, 1}, 5);
        const auto out = outputs_for(p.queries);
        CHECK(scatter_restore(out, p.remap) == out);
    }
    SUBCASE("reversed packing is reversed back") {
        const auto b = id_batch(5);
        const auto p = prune_topk(b, std::vector<double>{1, 2, 3, 4, 5}, 5);
        const auto out = outputs_for(p.queries);
        auto reversed = out;
        std::reverse(reversed.begin(), reversed.end());
        CHECK(scatter_restore(out, p.remap) == reversed);
    }
    SUBCASE("random packing restores to id order") {
        Rng rng(4);
        for (int t = 0; t < 20; ++t) {
            const auto b = id_batch(50);
            std::vector<double> scores(50);
            for (auto& s : scores) s = rng.uniform();
            const auto p = prune_topk(b, scores, 1 + rng.below(50));
            auto out = outputs_for(p.queries);
            rng.shuffle(out.begin(), out.end());
            auto expected = out;
            std::sort(expected.begin(), expected.end(), [](const QueryOutput& a, const QueryOutput& c) { return a.id < c.id; });
            CHECK(scatter_restore(out, p.remap) == expected);
        }
    }
    SUBCASE("unknown or repeated ids are data corruption") {
        const auto b = id_batch(4);
        const auto p = prune_topk(b, std::vector<double>{1, 2, 3, 4}, 2);
        auto out = outputs_for(p.queries);
        auto repeated = out;
        repeated.push_back(out[0]);
        CHECK_THROWS_AS(scatter_restore(repeated, p.remap), DataCorruptionError);
        out[0].id = 99;
        CHECK_THROWS_AS(scatter_restore(out, p.remap), DataCorruptionError);
    }
}

TEST_CASE("pruning other queries does not change any output") {
    const auto spec = encoder_spec({{{12, 12}, {6, 6}}, 8}, WorkloadMode::dense_encoder);
    auto s = spec;
    s.heads = 2;
    s.points = 2;
    const auto w = generate_workload(s);
    const auto weights = random_projections(8, 2, 5);
    const auto full = msdeformattn_fused(w.pyramid, w.queries, weights);
    Rng rng(6);
    std::vector<double> scores(w.queries.size());
    for (auto& x : scores) x = rng.uniform();
    const auto p = prune_topk(w.queries, scores, 40);
    const auto pruned = msdeformattn_fused(w.pyramid, p.queries, weights);
    const auto restored = scatter_restore(pruned, p.remap);
    std::size_t prev = 0;
    for (std::size_t i = 0; i < restored.size(); ++i) {
        const auto pos = static_cast<std::size_t>(restored[i].id);
        if (i > 0) CHECK(pos > prev);
        prev = pos;
        CHECK(restored[i].values == full[pos].values);
    }
    CHECK(restored.size() == 40);
}

TEST_CASE("burst length statistics") {
    const PyramidShape shape{{{4, 8}}, 4};
    SUBCASE("contiguous packed lines form one run") {
        const std::vector<Footprint> fps{{{0, 0, 0}, {0, 0, 1}, {0, 0, 2}}, {{0, 0, 3}, {0, 0, 4}}, {{0, 0, 5}}};
        IndexRemap r;
        r.inverse = {0, 1, 2};
        const auto b = burst_length_stats(r, fps, shape);
        CHECK(b.runs == 1);
        CHECK(b.mean_run == 6.0);
    }
    SUBCASE("alternating distant lines give runs of one") {
        const std::vector<Footprint> fps{{{0, 0, 0}}, {{0, 3, 7}}};
        IndexRemap r;
        r.inverse = {0, 1, 0, 1, 0};
        const auto b = burst_length_stats(r, fps, shape);
        CHECK(b.runs == 5);
        CHECK(b.mean_run == 1.0);
    }
    SUBCASE("random remaps agree with a run-length scan") {
        Rng rng(7);
        for (int t = 0; t < 30; ++t) {
            std::vector<Footprint> fps(20);
            for (auto& f : fps) {
                const auto y = static_cast<std::int32_t>(rng.below(4));
                const auto x0 = static_cast<std::int32_t>(rng.below(6));
                for (std::int32_t k = 0; k < 1 + static_cast<std::int32_t>(rng.below(3)); ++k) f.push_back({0, y, x0 + k});
            }
            const auto b = id_batch(20);
            std::vector<double> scores(20);
            for (auto& s : scores) s = rng.uniform();
            const auto p = prune_topk(b, scores, 1 + rng.below(20));
            std::vector<std::size_t> stream;
            for (const auto pos : p.remap.inverse) {
                for (const auto& l : fps[pos]) stream.push_back(line_address(l, shape));
            }
            const auto expected = oracle::run_lengths(stream);
            const auto got = burst_length_stats(p.remap, fps, shape);
            CHECK(got.runs == expected.runs);
            CHECK(got.mean_run == doctest::Approx(expected.mean_run));
        }
    }
}

TEST_CASE("workload validation names the field") {
    const auto expect_path = [](WorkloadSpec s, const std::string& path) {
        try {
            s.validate();
            FAIL("expected a configuration error for " << path);
        } catch (const ConfigError& e) {
            CHECK(e.field_path() == path);
        }
    };
    WorkloadSpec s;
    s.shape = desk_pyramid();
    CHECK_NOTHROW(s.validate());
    auto bad = s;
    bad.keep_ratio = 0.0;
    expect_path(bad, "workload.keep_ratio");
    bad = s;
    bad.heads = 3;
    expect_path(bad, "workload.heads");
    bad = s;
    bad.decoder_queries = 0;
    expect_path(bad, "workload.decoder_queries");
    bad = s;
    bad.shape.levels[1].width = 0;
    expect_path(bad, "workload.levels[1]");
    bad = s;
    bad.cluster_spread = -1.0;
    expect_path(bad, "workload.cluster_spread");
}
