#include "deformsim/oracle/instances.hpp"

#include <algorithm>
#include <set>

namespace deformsim::oracle {

AttentionInstance attention_instance(std::uint64_t seed, const InstanceShape& s) {
    Rng rng(seed);
    std::vector<FeatureMap> maps;
    for (int l = 0; l < s.levels; ++l) {
        const int h = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(s.max_side)));
        const int w = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(s.max_side)));
        FeatureMap map(h, w, s.channels);
        for (auto& v : map.data()) v = static_cast<float>(rng.uniform(-1.0, 1.0));
        maps.push_back(std::move(map));
    }
    QueryBatch batch;
    batch.dims = {s.heads, s.levels, s.points};
    for (int i = 0; i < s.queries; ++i) {
        Query q;
        q.id = 1000 + 7 * i;
        q.ref_point = {rng.uniform(), rng.uniform()};
        for (std::size_t j = 0; j < batch.dims.per_query(); ++j) {
            q.offsets.push_back({rng.uniform(-0.3, 0.3), rng.uniform(-0.3, 0.3)});
            q.logits.push_back(rng.uniform(-3.0, 3.0));
        }
        batch.queries.push_back(std::move(q));
    }
    ProjectionWeights w;
    w.channels = s.channels;
    const auto d = static_cast<std::size_t>(s.channels);
    const auto dh = d / static_cast<std::size_t>(s.heads);
    for (int m = 0; m < s.heads; ++m) {
        HeadProjection h{Matrix(dh, d), Matrix(d, dh), std::nullopt};
        for (auto& v : h.value_proj.data()) v = rng.uniform(-1.0, 1.0);
        for (auto& v : h.output_proj.data()) v = rng.uniform(-1.0, 1.0);
        w.heads.push_back(std::move(h));
    }
    // Fold with the oracle product so the instance does not lean on the library's fold.
    for (auto& h : w.heads) h.folded = matmul(h.output_proj, h.value_proj);
    return {FeaturePyramid(std::move(maps)), std::move(batch), std::move(w)};
}

InstanceShape random_instance_shape(Rng& rng, int max_channels, int max_heads, int max_levels, int max_points,
                                    int max_queries) {
    InstanceShape s;
    s.heads = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(max_heads)));
    const int per_head_max = std::max(1, max_channels / s.heads);
    s.channels = s.heads * (1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(per_head_max))));
    s.levels = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(max_levels)));
    s.points = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(max_points)));
    s.queries = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(max_queries)));
    return s;
}

std::vector<Footprint> random_footprints(Rng& rng, const PyramidShape& shape, std::size_t steps,
                                         std::size_t max_lines) {
    std::vector<Footprint> out;
    for (std::size_t i = 0; i < steps; ++i) {
        std::set<LineId> lines;
        const auto count = 1 + rng.below(max_lines);
        for (std::uint64_t j = 0; j < count; ++j) {
            const auto l = static_cast<std::int32_t>(rng.below(shape.levels.size()));
            const auto s = shape.levels[static_cast<std::size_t>(l)];
            lines.insert({l, static_cast<std::int32_t>(rng.below(static_cast<std::uint64_t>(s.height))),
                          static_cast<std::int32_t>(rng.below(static_cast<std::uint64_t>(s.width)))});
        }
        out.emplace_back(lines.begin(), lines.end());
    }
    return out;
}

std::vector<std::size_t> flatten(const std::vector<Footprint>& trace, const PyramidShape& shape) {
    std::vector<std::size_t> out;
    for (const auto& f : trace) {
        for (const auto& l : f) {
            std::size_t base = 0;
            for (std::int32_t k = 0; k < l.level; ++k) {
                base += static_cast<std::size_t>(shape.levels[static_cast<std::size_t>(k)].height) *
                        static_cast<std::size_t>(shape.levels[static_cast<std::size_t>(k)].width);
            }
            out.push_back(base + static_cast<std::size_t>(l.y) *
                                     static_cast<std::size_t>(shape.levels[static_cast<std::size_t>(l.level)].width) +
                          static_cast<std::size_t>(l.x));
        }
    }
    return out;
}

WorkloadSpec planted_cluster_spec(std::uint64_t seed, int n) {
    WorkloadSpec spec;
    spec.mode = WorkloadMode::decoder;
    spec.shape = desk_pyramid();
    spec.heads = 4;
    spec.points = 4;
    spec.distribution = QueryDistribution::clustered;
    spec.decoder_queries = n;
    spec.clusters = 3;
    spec.cluster_spread = 0.01;
    spec.offset_envelope = 0.03;
    spec.shared_offsets = true;
    spec.seed = seed;
    return spec;
}

}  // namespace deformsim::oracle
