#include "deformsim/harness/verify.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "deformsim/attention.hpp"
#include "deformsim/cache_model.hpp"
#include "deformsim/fixed_point.hpp"
#include "deformsim/oracle/instances.hpp"
#include "deformsim/oracle/oracle.hpp"
#include "deformsim/scheduler.hpp"
#include "deformsim/workload.hpp"

namespace deformsim::harness {

namespace {

constexpr double kFusedTolerance = 1e-5;
constexpr double kReferenceTolerance = 1e-6;
constexpr double kQuantTolerance = 1e-2;
constexpr double kOptimalityRatioLimit = 1.5;

std::string fmt(const char* f, double a, double b = 0.0) {
    char buf[160];
    std::snprintf(buf, sizeof buf, f, a, b);
    return buf;
}

// max |a - b| / max |b| over all outputs of a batch.
double linf_relative(const AttentionOutput& a, const AttentionOutput& b) {
    double diff = 0.0;
    double peak = 0.0;
    for (std::size_t q = 0; q < b.size(); ++q) {
        for (std::size_t d = 0; d < b[q].values.size(); ++d) {
            diff = std::max(diff, std::abs(a[q].values[d] - b[q].values[d]));
            peak = std::max(peak, std::abs(b[q].values[d]));
        }
    }
    return peak > 0.0 ? diff / peak : diff;
}

double l2_relative(const AttentionOutput& a, const AttentionOutput& b) {
    double num = 0.0;
    double den = 0.0;
    for (std::size_t q = 0; q < b.size(); ++q) {
        for (std::size_t d = 0; d < b[q].values.size(); ++d) {
            num += (a[q].values[d] - b[q].values[d]) * (a[q].values[d] - b[q].values[d]);
            den += b[q].values[d] * b[q].values[d];
        }
    }
    return den > 0.0 ? std::sqrt(num / den) : std::sqrt(num);
}

SuiteResult attention_suite(std::uint64_t seed, int instances) {
    Rng rng(seed);
    double worst_fused = 0.0;
    double worst_ref = 0.0;
    for (int i = 0; i < instances; ++i) {
        const auto shape = oracle::random_instance_shape(rng, 32, 4, 4, 4, 16);
        const auto inst = oracle::attention_instance(rng.next_u64(), shape);
        const auto ref = msdeformattn_reference(inst.pyramid, inst.queries, inst.weights);
        const auto fused = msdeformattn_fused(inst.pyramid, inst.queries, inst.weights);
        const auto loops = oracle::deformable_attention(inst.pyramid, inst.queries, inst.weights);
        worst_fused = std::max(worst_fused, linf_relative(fused, ref));
        worst_ref = std::max(worst_ref, linf_relative(ref, loops));
    }
    return {"attention: fused vs reference vs loop nest",
            worst_fused <= kFusedTolerance && worst_ref <= kReferenceTolerance,
            fmt("worst fused/reference %.3g, worst reference/loop-nest %.3g", worst_fused, worst_ref)};
}

SuiteResult quant_suite(std::uint64_t seed, int seeds) {
    double worst = 0.0;
    for (int i = 0; i < seeds; ++i) {
        oracle::InstanceShape s;
        s.channels = 8;
        s.heads = 2;
        s.levels = 2;
        s.points = 2;
        s.queries = 8;
        const auto inst = oracle::attention_instance(seed + static_cast<std::uint64_t>(i), s);
        const auto exact = msdeformattn_fused(inst.pyramid, inst.queries, inst.weights);
        const auto approx =
            msdeformattn_fused_quantized(inst.pyramid, inst.queries, inst.weights, PrecisionPlan::standard()).output;
        worst = std::max(worst, l2_relative(approx, exact));
    }
    return {"fixed point: quantized vs floating fused pass", worst <= kQuantTolerance,
            fmt("worst relative L2 error %.3g over %g seeds", worst, seeds)};
}

SuiteResult saturation_suite(std::uint64_t seed) {
    oracle::InstanceShape s;
    s.channels = 32;
    s.heads = 4;
    s.levels = 2;
    s.points = 4;
    s.queries = 4;
    auto inst = oracle::attention_instance(seed, s);
    for (std::size_t l = 0; l < inst.pyramid.num_levels(); ++l) {
        for (auto& v : inst.pyramid.level(l).data()) v = 1.0F;
    }
    for (auto& h : inst.weights.heads) {
        for (auto& v : h.folded->data()) v = 1.0;
    }
    const auto exact = msdeformattn_fused(inst.pyramid, inst.queries, inst.weights);
    const auto result = msdeformattn_fused_quantized(inst.pyramid, inst.queries, inst.weights, PrecisionPlan::standard());
    // Clamping can only pull a positive result down; wraparound would flip signs or overshoot.
    bool bounded = true;
    for (std::size_t q = 0; q < exact.size(); ++q) {
        for (std::size_t d = 0; d < exact[q].values.size(); ++d) {
            const double f = exact[q].values[d];
            const double v = result.output[q].values[d];
            if (f > 0.0 && !(v >= 0.0 && v <= f * (1.0 + 1e-2))) bounded = false;
        }
    }
    const auto clamps = result.saturation.total();
    return {"fixed point: saturation on extreme inputs", bounded && clamps > 0,
            fmt("%g clamp events, outputs ", static_cast<double>(clamps)) + (bounded ? "bounded" : "NOT bounded")};
}

SuiteResult cache_suite(std::uint64_t seed, int traces) {
    Rng rng(seed);
    const PyramidShape shape{{{8, 8}, {4, 4}}, 4};
    int mismatches = 0;
    for (int i = 0; i < traces; ++i) {
        const auto capacity = 4 + rng.below(61);
        const auto trace = oracle::random_footprints(rng, shape, 40, 6);
        CacheGeometry g;
        g.capacity_lines = capacity;
        g.channels = shape.channels;
        std::vector<AccessRecord> log;
        simulate_baseline(trace, shape, g, TimingConfig{}, &log);
        const auto expected = oracle::direct_mapped_hits(oracle::flatten(trace, shape), capacity);
        bool same = log.size() == expected.size();
        for (std::size_t k = 0; same && k < log.size(); ++k) same = log[k].hit == expected[k];
        if (!same) ++mismatches;
    }
    return {"cache: direct-mapped vs map simulator", mismatches == 0,
            fmt("%g of %g traces differ", mismatches, traces)};
}

SuiteResult stall_suite(std::uint64_t seed, int schedules) {
    Rng rng(seed);
    const PyramidShape shape{{{6, 6}, {3, 3}}, 4};
    int mismatches = 0;
    for (int i = 0; i < schedules; ++i) {
        const auto fps = oracle::random_footprints(rng, shape, 12, 10);
        Schedule s = identity_schedule(fps.size());
        rng.shuffle(s.order.begin(), s.order.end());
        s.lookahead.assign(s.order.begin() + 1, s.order.end());
        TimingConfig t;
        t.t_fetch_per_line = 1 + static_cast<std::int64_t>(rng.below(5));
        t.t_comp_per_query = 0;
        const auto analytic = t_stall_analytic(s, fps, t);
        const auto expected = oracle::stall_set_difference(s.order, fps, t.t_fetch_per_line);
        std::vector<LineSet> regions;
        for (const auto pos : s.order) regions.push_back(fps[pos]);
        CacheGeometry g;
        g.policy = CachePolicy::dooq_pingpong;
        g.capacity_lines = 1024;
        const auto sim = simulate_dooq_pingpong(s, fps, regions, g, t);
        if (analytic != expected || sim.residual_stall_cycles != expected || sim.victim_cycles != 0) ++mismatches;
    }
    return {"cache: stall formula vs set arithmetic and ping-pong", mismatches == 0,
            fmt("%g of %g schedules differ", mismatches, schedules)};
}

SuiteResult schedule_suite(std::uint64_t seed, int instances) {
    double ratio_sum = 0.0;
    double worst = 0.0;
    int worse_than_identity = 0;
    for (int i = 0; i < instances; ++i) {
        const auto w = generate_workload(oracle::planted_cluster_spec(seed + static_cast<std::uint64_t>(i), 8));
        const auto shape = w.pyramid.shape();
        const auto fps = footprints(w.queries, shape);
        SchedulerConfig cfg;
        cfg.window = 8;
        TimingConfig t;
        const auto dooq = t_stall_analytic(dooq_schedule(w.queries, cfg), fps, t);
        const auto ident = t_stall_analytic(identity_schedule(fps.size()), fps, t);
        const auto best = oracle::exhaustive_min_stall(fps, t.t_fetch_per_line).best_stall;
        if (dooq > ident) ++worse_than_identity;
        const double ratio = best > 0 ? static_cast<double>(dooq) / static_cast<double>(best) : 1.0;
        ratio_sum += ratio;
        worst = std::max(worst, ratio);
    }
    const double mean = ratio_sum / instances;
    return {"scheduler: DOOQ vs exhaustive search (n = 8)",
            worse_than_identity == 0 && mean <= kOptimalityRatioLimit,
            fmt("mean DOOQ/optimal %.4g, worst %.4g", mean, worst) +
                fmt(", %g instance(s) worse than batch order", worse_than_identity)};
}

SuiteResult sorter_suite() {
    int mismatches = 0;
    SchedulerConfig cfg;
    cfg.window = 1024;
    for (int occ = 1; occ <= 1024; ++occ) {
        if (sorter_cost(occ, cfg).stages != oracle::bitonic_network_depth(occ)) ++mismatches;
    }
    return {"scheduler: sorter depth vs explicit bitonic network", mismatches == 0,
            fmt("%g of 1024 occupancies differ", mismatches)};
}

SuiteResult footprint_suite(std::uint64_t seed) {
    int mismatches = 0;
    for (int i = 0; i < 20; ++i) {
        oracle::InstanceShape s;
        s.levels = 2;
        s.queries = 6;
        const auto inst = oracle::attention_instance(seed + static_cast<std::uint64_t>(i), s);
        const auto shape = inst.pyramid.shape();
        for (const auto& q : inst.queries.queries) {
            if (footprint(q, inst.queries.dims, shape) != oracle::footprint(q, inst.queries.dims, shape)) ++mismatches;
        }
    }
    return {"cache: footprints vs tap enumeration", mismatches == 0, fmt("%g footprints differ", mismatches)};
}

}  // namespace

bool VerifySummary::passed() const {
    return std::all_of(suites.begin(), suites.end(), [](const SuiteResult& s) { return s.passed; });
}

VerifySummary verify_kernels(std::uint64_t seed, const VerifySizes& sizes) {
    VerifySummary summary;
    summary.suites.push_back(attention_suite(seed, sizes.attention_instances));
    summary.suites.push_back(quant_suite(seed, sizes.quant_seeds));
    summary.suites.push_back(saturation_suite(seed));
    summary.suites.push_back(footprint_suite(seed));
    summary.suites.push_back(cache_suite(seed, sizes.cache_traces));
    summary.suites.push_back(stall_suite(seed, sizes.cache_traces));
    summary.suites.push_back(schedule_suite(seed, sizes.schedule_instances));
    summary.suites.push_back(sorter_suite());
    return summary;
}

}  // namespace deformsim::harness
