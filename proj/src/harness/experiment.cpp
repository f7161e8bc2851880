#include "deformsim/harness/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <thread>

#include "deformsim/errors.hpp"
#include "deformsim/fixed_point.hpp"

namespace deformsim::harness {

namespace {

constexpr std::uint64_t kProjectionSeedSalt = 0x9e3779b97f4a7c15ULL;

ReportRow make_row(const ExperimentConfig& c, std::size_t point, std::uint64_t seed, const char* policy,
                   const SimReport& r, std::size_t queries) {
    ReportRow row;
    row.point_index = point;
    if (!c.sweep.parameter.empty()) row.sweep_value = c.sweep.values[point];
    row.seed = seed;
    row.policy = policy;
    row.window = c.window;
    row.keep_ratio = c.workload.keep_ratio;
    row.queries = queries;
    row.accesses = r.accesses;
    row.hits = r.hits;
    row.misses = r.misses;
    row.hit_rate = r.hit_rate;
    row.fetched_lines = r.fetched_lines;
    row.stall_cycles = r.stall_cycles;
    row.covered_cycles = r.covered_cycles;
    row.total_cycles = r.total_cycles;
    row.energy_pj = r.energy_pj;
    row.regional_reuse = r.regional_reuse;
    row.bank_conflicts = r.bank_conflicts;
    return row;
}

}  // namespace

double quantization_error(const Workload& workload, int queries, std::uint64_t seed) {
    const auto& pyramid = workload.pyramid;
    QueryBatch subset;
    subset.dims = workload.queries.dims;
    const auto n = std::min<std::size_t>(static_cast<std::size_t>(queries), workload.queries.size());
    subset.queries.assign(workload.queries.queries.begin(), workload.queries.queries.begin() + static_cast<std::ptrdiff_t>(n));
    const auto weights = random_projections(pyramid.channels(), subset.dims.heads, seed ^ kProjectionSeedSalt);
    const auto exact = msdeformattn_fused(pyramid, subset, weights);
    const auto approx = msdeformattn_fused_quantized(pyramid, subset, weights, PrecisionPlan::standard()).output;
    double num = 0.0;
    double den = 0.0;
    for (std::size_t q = 0; q < exact.size(); ++q) {
        for (std::size_t d = 0; d < exact[q].values.size(); ++d) {
            const double e = approx[q].values[d] - exact[q].values[d];
            num += e * e;
            den += exact[q].values[d] * exact[q].values[d];
        }
    }
    return den > 0.0 ? std::sqrt(num / den) : std::sqrt(num);
}

PointResult evaluate_point(const ExperimentConfig& config, std::uint64_t seed, std::vector<AccessRecord>* baseline_log,
                           std::vector<AccessRecord>* pingpong_log) {
    auto spec = config.workload;
    spec.seed = seed;
    PointResult r{generate_workload(spec), {}, {}, {}, {}, {}, 0, std::nullopt};
    const auto& batch = r.workload.queries;
    const auto shape = r.workload.pyramid.shape();
    const auto timing = config.timing();

    r.footprints = footprints(batch, shape);
    r.baseline = simulate_baseline(r.footprints, shape, config.geometry(CachePolicy::direct_mapped), timing,
                                   baseline_log);

    r.radii = config.region_radii.empty() ? region_radii(batch, shape) : config.region_radii;
    const auto pp_geometry = config.geometry(CachePolicy::dooq_pingpong);
    try {
        check_region_capacity(r.radii, shape, pp_geometry);
    } catch (const ConfigError& e) {
        // what() already starts with "<path>: ".
        const std::string message = std::string(e.what()).substr(e.field_path().size() + 2);
        throw ConfigError(e.field_path(), message + " [seed " + std::to_string(seed) + ", window " +
                                              std::to_string(config.window) + "]");
    }
    r.dooq = dooq_schedule(batch, config.scheduler());
    const auto regions = step_regions(r.dooq, batch, r.radii, shape);
    r.pingpong = simulate_dooq_pingpong(r.dooq, r.footprints, regions, pp_geometry, timing, pingpong_log);

    for (const auto& q : batch.queries) {
        const auto groups = tap_groups(q, batch.dims, shape);
        r.bank_conflicts += bank_conflict_count(groups, config.banks);
    }
    // Conflicts depend on the samples, not on the order, so both policies pay the same.
    const auto penalty = static_cast<std::int64_t>(r.bank_conflicts) * timing.bank_conflict_penalty;
    for (auto* rep : {&r.baseline, &r.pingpong}) {
        rep->bank_conflicts = r.bank_conflicts;
        rep->total_cycles += penalty;
    }
    if (config.precision_enabled) r.quant_error = quantization_error(r.workload, config.precision_queries, seed);
    return r;
}

std::vector<ReportRow> run_experiment(const Json& config_doc) {
    const auto base = parse_config(config_doc);
    const std::size_t points = base.sweep.parameter.empty() ? 1 : base.sweep.values.size();
    std::vector<ExperimentConfig> configs;
    configs.reserve(points);
    for (std::size_t p = 0; p < points; ++p) configs.push_back(config_for_point(config_doc, p));

    const std::size_t seeds = base.seeds.size();
    const std::size_t tasks = points * seeds;
    std::vector<std::vector<ReportRow>> slots(tasks);
    std::vector<std::exception_ptr> errors(tasks);
    std::atomic<std::size_t> next{0};

    const auto worker = [&] {
        for (std::size_t t = next++; t < tasks; t = next++) {
            const std::size_t p = t / seeds;
            const auto seed = base.seeds[t % seeds];
            try {
                const auto& c = configs[p];
                const auto r = evaluate_point(c, seed);
                auto b = make_row(c, p, seed, "baseline", r.baseline, r.workload.queries.size());
                auto d = make_row(c, p, seed, "dooq_pingpong", r.pingpong, r.workload.queries.size());
                b.speedup_vs_baseline = 1.0;
                d.speedup_vs_baseline = r.pingpong.total_cycles > 0
                                            ? static_cast<double>(r.baseline.total_cycles) /
                                                  static_cast<double>(r.pingpong.total_cycles)
                                            : 0.0;
                b.quant_error = r.quant_error;
                d.quant_error = r.quant_error;
                canonicalize(b);
                canonicalize(d);
                slots[t] = {std::move(b), std::move(d)};
            } catch (...) {
                errors[t] = std::current_exception();
            }
        }
    };

    std::size_t threads = base.threads > 0 ? static_cast<std::size_t>(base.threads)
                                           : std::max(1u, std::thread::hardware_concurrency());
    threads = std::min(threads, tasks);
    std::vector<std::thread> pool;
    for (std::size_t i = 1; i < threads; ++i) pool.emplace_back(worker);
    worker();
    for (auto& th : pool) th.join();

    for (const auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }
    std::vector<ReportRow> rows;
    rows.reserve(tasks * 2);
    for (auto& s : slots) {
        for (auto& row : s) rows.push_back(std::move(row));
    }
    return rows;
}

}  // namespace deformsim::harness
