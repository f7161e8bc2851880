#include "deformsim/workload.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <unordered_map>

#include "deformsim/errors.hpp"
#include "deformsim/random.hpp"

namespace deformsim {

namespace {

double axis_coord(int i, int extent) { return extent > 1 ? static_cast<double>(i) / (extent - 1) : 0.5; }

std::vector<NormPoint> draw_offsets(Rng& rng, std::size_t count, double envelope) {
    std::vector<NormPoint> out(count);
    for (auto& p : out) {
        p.u = rng.uniform(-envelope, envelope);
        p.v = rng.uniform(-envelope, envelope);
    }
    return out;
}

FeaturePyramid random_pyramid(const PyramidShape& shape, Rng& rng) {
    std::vector<FeatureMap> maps;
    maps.reserve(shape.num_levels());
    for (const auto& s : shape.levels) {
        std::vector<float> data(static_cast<std::size_t>(s.height) * static_cast<std::size_t>(s.width) *
                                static_cast<std::size_t>(shape.channels));
        for (auto& v : data) v = static_cast<float>(rng.uniform(-1.0, 1.0));
        maps.emplace_back(s.height, s.width, shape.channels, std::move(data));
    }
    return FeaturePyramid(std::move(maps));
}

std::vector<NormPoint> cluster_centres(Rng& rng, int k) {
    std::vector<NormPoint> centres(static_cast<std::size_t>(k));
    for (auto& c : centres) {
        c.u = rng.uniform(0.1, 0.9);
        c.v = rng.uniform(0.1, 0.9);
    }
    return centres;
}

}  // namespace

void WorkloadSpec::validate() const {
    if (shape.levels.empty()) throw ConfigError("workload.levels", "at least one level required");
    for (std::size_t l = 0; l < shape.levels.size(); ++l) {
        if (shape.levels[l].height < 1 || shape.levels[l].width < 1) {
            throw ConfigError("workload.levels[" + std::to_string(l) + "]", "height and width must be positive");
        }
    }
    if (shape.channels < 1) throw ConfigError("workload.channels", "must be positive");
    if (heads < 1) throw ConfigError("workload.heads", "must be positive");
    if (shape.channels % heads != 0) throw ConfigError("workload.heads", "must divide channels");
    if (points < 1) throw ConfigError("workload.points", "must be positive");
    if (!(keep_ratio > 0.0 && keep_ratio <= 1.0)) throw ConfigError("workload.keep_ratio", "must lie in (0, 1]");
    if (decoder_queries < 1) throw ConfigError("workload.decoder_queries", "must be at least 1");
    if (distribution == QueryDistribution::clustered && clusters < 1) {
        throw ConfigError("workload.clusters", "must be at least 1");
    }
    if (!(cluster_spread >= 0.0) || !std::isfinite(cluster_spread)) {
        throw ConfigError("workload.cluster_spread", "must be finite and non-negative");
    }
    if (!(offset_envelope >= 0.0) || !std::isfinite(offset_envelope)) {
        throw ConfigError("workload.offset_envelope", "must be finite and non-negative");
    }
}

PyramidShape desk_pyramid() { return {{{64, 64}, {32, 32}, {16, 16}, {8, 8}}, 32}; }

PyramidShape full_scale_pyramid() { return {{{100, 151}, {50, 76}, {25, 38}, {13, 19}}, 256}; }

ProjectionWeights random_projections(int channels, int heads, std::uint64_t seed) {
    if (channels < 1 || heads < 1 || channels % heads != 0) {
        throw ConfigError("random_projections: heads must divide a positive channel count");
    }
    Rng rng(seed);
    const auto d = static_cast<std::size_t>(channels);
    const auto dh = d / static_cast<std::size_t>(heads);
    ProjectionWeights w;
    w.channels = channels;
    for (int m = 0; m < heads; ++m) {
        HeadProjection h{Matrix(dh, d), Matrix(d, dh), std::nullopt};
        for (auto& v : h.value_proj.data()) v = rng.uniform(-1.0, 1.0);
        for (auto& v : h.output_proj.data()) v = rng.uniform(-1.0, 1.0);
        w.heads.push_back(std::move(h));
    }
    return fold_projections(std::move(w));
}

std::size_t keep_count(std::size_t n, double ratio) {
    if (!(ratio > 0.0 && ratio <= 1.0)) throw ConfigError("keep_ratio", "must lie in (0, 1]");
    const double exact = static_cast<double>(n) * ratio;
    // Shave a few ulps so that e.g. 100 * 0.07 = 7.000000000000001 keeps 7.
    const auto k = static_cast<std::size_t>(std::ceil(exact * (1.0 - 1e-12)));
    return std::min(n, std::max<std::size_t>(k, n > 0 ? 1 : 0));
}

Workload generate_workload(const WorkloadSpec& spec) {
    spec.validate();
    Rng rng(spec.seed);
    auto pyramid = random_pyramid(spec.shape, rng);
    const auto dims = spec.dims();
    const auto per_query = dims.per_query();

    QueryBatch batch;
    batch.dims = dims;
    std::vector<std::size_t> cluster_of;  // per query, for shared offset patterns
    std::vector<NormPoint> centres;

    const bool encoder = spec.mode != WorkloadMode::decoder;
    if (encoder) {
        for (const auto& s : spec.shape.levels) {
            for (int y = 0; y < s.height; ++y) {
                for (int x = 0; x < s.width; ++x) {
                    Query q;
                    q.ref_point = {axis_coord(x, s.width), axis_coord(y, s.height)};
                    batch.queries.push_back(std::move(q));
                }
            }
        }
    } else if (spec.distribution == QueryDistribution::grid) {
        const auto s = spec.shape.levels.front();
        for (int y = 0; y < s.height; ++y) {
            for (int x = 0; x < s.width; ++x) {
                Query q;
                q.ref_point = {axis_coord(x, s.width), axis_coord(y, s.height)};
                batch.queries.push_back(std::move(q));
            }
        }
    } else if (spec.distribution == QueryDistribution::uniform) {
        for (int i = 0; i < spec.decoder_queries; ++i) {
            Query q;
            q.ref_point.u = rng.uniform();
            q.ref_point.v = rng.uniform();
            batch.queries.push_back(std::move(q));
        }
    } else {
        centres = cluster_centres(rng, spec.clusters);
        for (int i = 0; i < spec.decoder_queries; ++i) {
            const auto c = static_cast<std::size_t>(rng.below(centres.size()));
            Query q;
            q.ref_point.u = std::clamp(rng.normal(centres[c].u, spec.cluster_spread), 0.0, 1.0);
            q.ref_point.v = std::clamp(rng.normal(centres[c].v, spec.cluster_spread), 0.0, 1.0);
            cluster_of.push_back(c);
            batch.queries.push_back(std::move(q));
        }
    }

    std::vector<std::vector<NormPoint>> patterns;
    if (spec.shared_offsets) {
        const std::size_t count = centres.empty() ? 1 : centres.size();
        for (std::size_t c = 0; c < count; ++c) patterns.push_back(draw_offsets(rng, per_query, spec.offset_envelope));
    }
    for (std::size_t i = 0; i < batch.queries.size(); ++i) {
        auto& q = batch.queries[i];
        q.id = static_cast<std::int64_t>(i);
        if (spec.shared_offsets) {
            q.offsets = patterns[cluster_of.empty() ? 0 : cluster_of[i]];
        } else {
            q.offsets = draw_offsets(rng, per_query, spec.offset_envelope);
        }
        q.logits.resize(per_query);
        for (auto& a : q.logits) a = rng.uniform(-2.0, 2.0);
    }

    if (spec.mode == WorkloadMode::sparse_encoder) {
        std::vector<double> scores(batch.size());
        if (spec.distribution == QueryDistribution::clustered) {
            const auto sc = cluster_centres(rng, spec.clusters);
            const double width = std::max(spec.cluster_spread, 1e-6);
            for (std::size_t i = 0; i < scores.size(); ++i) {
                double best = 0.0;
                for (const auto& c : sc) {
                    const double du = batch.queries[i].ref_point.u - c.u;
                    const double dv = batch.queries[i].ref_point.v - c.v;
                    best = std::max(best, std::exp(-(du * du + dv * dv) / (2.0 * width * width)));
                }
                scores[i] = best + 1e-3 * rng.uniform();
            }
        } else {
            for (auto& s : scores) s = rng.uniform();
        }
        auto pruned = prune_topk(batch, scores, keep_count(batch.size(), spec.keep_ratio));
        batch = std::move(pruned.queries);
    }
    return {std::move(pyramid), std::move(batch)};
}

PrunedBatch prune_topk(const QueryBatch& queries, std::span<const double> scores, std::size_t keep) {
    const std::size_t n = queries.size();
    if (keep == 0) throw InputError("prune_topk: keep must be at least 1");
    if (keep > n) throw InputError("prune_topk: keep " + std::to_string(keep) + " exceeds " + std::to_string(n));
    if (scores.size() != n) throw InputError("prune_topk: one score per query required");
    for (const double s : scores) {
        if (!std::isfinite(s)) throw InputError("prune_topk: non-finite score");
    }
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    const auto better = [&](std::size_t a, std::size_t b) {
        if (scores[a] != scores[b]) return scores[a] > scores[b];
        return queries.queries[a].id < queries.queries[b].id;
    };
    std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(keep), idx.end(), better);
    idx.resize(keep);

    PrunedBatch out;
    out.queries.dims = queries.dims;
    out.queries.queries.reserve(keep);
    out.remap.forward.assign(n, -1);
    for (std::size_t p = 0; p < keep; ++p) {
        out.queries.queries.push_back(queries.queries[idx[p]]);
        out.remap.kept_ids.push_back(queries.queries[idx[p]].id);
        out.remap.inverse.push_back(idx[p]);
        out.remap.forward[idx[p]] = static_cast<std::int64_t>(p);
    }
    return out;
}

AttentionOutput scatter_restore(const AttentionOutput& outputs, const IndexRemap& remap) {
    std::unordered_map<std::int64_t, std::size_t> original_pos;
    original_pos.reserve(remap.kept_ids.size());
    for (std::size_t p = 0; p < remap.kept_ids.size(); ++p) original_pos.emplace(remap.kept_ids[p], remap.inverse[p]);

    std::vector<std::pair<std::size_t, std::size_t>> keyed;  // (original position, row)
    keyed.reserve(outputs.size());
    for (std::size_t r = 0; r < outputs.size(); ++r) {
        const auto it = original_pos.find(outputs[r].id);
        if (it == original_pos.end()) {
            throw DataCorruptionError("scatter_restore: output id " + std::to_string(outputs[r].id) +
                                      " is not in the remap");
        }
        keyed.emplace_back(it->second, r);
    }
    std::sort(keyed.begin(), keyed.end());
    for (std::size_t i = 1; i < keyed.size(); ++i) {
        if (keyed[i].first == keyed[i - 1].first) {
            throw DataCorruptionError("scatter_restore: id " + std::to_string(outputs[keyed[i].second].id) +
                                      " appears twice");
        }
    }
    AttentionOutput restored;
    restored.reserve(outputs.size());
    for (const auto& [pos, row] : keyed) restored.push_back(outputs[row]);
    return restored;
}

BurstStats burst_length_stats(const IndexRemap& remap, std::span<const Footprint> footprints,
                              const PyramidShape& shape) {
    BurstStats stats;
    std::size_t total = 0;
    bool have_prev = false;
    std::size_t prev = 0;
    for (const auto pos : remap.inverse) {
        if (pos >= footprints.size()) {
            throw DataCorruptionError("burst_length_stats: remap points past the footprint list");
        }
        for (const auto& line : footprints[pos]) {
            const auto addr = line_address(line, shape);
            if (!have_prev || addr != prev + 1) ++stats.runs;
            prev = addr;
            have_prev = true;
            ++total;
        }
    }
    stats.mean_run = stats.runs ? static_cast<double>(total) / static_cast<double>(stats.runs) : 0.0;
    return stats;
}

}  // namespace deformsim
