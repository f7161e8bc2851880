#include "deformsim/attention.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <unordered_set>

#include "deformsim/errors.hpp"

namespace deformsim {

std::size_t PyramidShape::total_locations() const {
    std::size_t total = 0;
    for (const auto& s : levels) {
        total += static_cast<std::size_t>(s.height) * static_cast<std::size_t>(s.width);
    }
    return total;
}

std::size_t PyramidShape::level_offset(std::size_t level) const {
    std::size_t offset = 0;
    for (std::size_t l = 0; l < level; ++l) {
        offset += static_cast<std::size_t>(levels[l].height) * static_cast<std::size_t>(levels[l].width);
    }
    return offset;
}

void PyramidShape::validate() const {
    if (levels.empty()) throw ConfigError("pyramid has no levels");
    if (channels < 1) throw ConfigError("pyramid channels must be positive");
    for (std::size_t l = 0; l < levels.size(); ++l) {
        if (levels[l].height < 1 || levels[l].width < 1) {
            throw ConfigError("pyramid level " + std::to_string(l) + " has a non-positive dimension");
        }
    }
}

FeatureMap::FeatureMap(int height, int width, int channels)
    : FeatureMap(height, width, channels,
                 std::vector<float>(static_cast<std::size_t>(std::max(height, 0)) *
                                    static_cast<std::size_t>(std::max(width, 0)) *
                                    static_cast<std::size_t>(std::max(channels, 0)))) {}

FeatureMap::FeatureMap(int height, int width, int channels, std::vector<float> data)
    : height_(height), width_(width), channels_(channels), data_(std::move(data)) {
    if (height < 1 || width < 1 || channels < 1) {
        throw ConfigError("feature map dimensions must be positive");
    }
    const auto expected = static_cast<std::size_t>(height) * static_cast<std::size_t>(width) *
                          static_cast<std::size_t>(channels);
    if (data_.size() != expected) {
        throw ConfigError("feature map data holds " + std::to_string(data_.size()) +
                          " values, expected " + std::to_string(expected));
    }
}

std::span<const float> FeatureMap::at(int y, int x) const {
    const auto base = (static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) +
                       static_cast<std::size_t>(x)) *
                      static_cast<std::size_t>(channels_);
    return std::span<const float>(data_).subspan(base, static_cast<std::size_t>(channels_));
}

std::span<float> FeatureMap::at(int y, int x) {
    const auto base = (static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) +
                       static_cast<std::size_t>(x)) *
                      static_cast<std::size_t>(channels_);
    return std::span<float>(data_).subspan(base, static_cast<std::size_t>(channels_));
}

FeaturePyramid::FeaturePyramid(std::vector<FeatureMap> levels) : levels_(std::move(levels)) {
    if (levels_.empty()) throw ConfigError("feature pyramid needs at least one level");
    for (const auto& level : levels_) {
        if (level.channels() != levels_.front().channels()) {
            throw ConfigError("feature pyramid levels disagree on channel count");
        }
    }
}

PyramidShape FeaturePyramid::shape() const {
    PyramidShape s;
    s.channels = channels();
    for (const auto& level : levels_) s.levels.push_back(level.shape());
    return s;
}

void QueryBatch::validate() const {
    if (dims.heads < 1 || dims.levels < 1 || dims.points < 1) {
        throw ConfigError("sampling dims must be positive");
    }
    std::unordered_set<std::int64_t> seen;
    seen.reserve(queries.size());
    for (const auto& q : queries) {
        if (q.offsets.size() != dims.per_query() || q.logits.size() != dims.per_query()) {
            throw ConfigError("query " + std::to_string(q.id) + " has " +
                              std::to_string(q.offsets.size()) + " offsets and " +
                              std::to_string(q.logits.size()) + " logits, expected " +
                              std::to_string(dims.per_query()));
        }
        if (!seen.insert(q.id).second) {
            throw InputError("duplicate query id " + std::to_string(q.id));
        }
        const auto& p = q.ref_point;
        if (!(p.u >= 0.0 && p.u <= 1.0 && p.v >= 0.0 && p.v <= 1.0)) {
            throw InputError("query " + std::to_string(q.id) + " reference point outside [0,1]^2");
        }
    }
}

Matrix::Matrix(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols), data_(rows * cols, 0.0) {}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows * cols) throw ConfigError("matrix data size does not match its shape");
}

Matrix Matrix::identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
}

void Matrix::apply(std::span<const double> x, std::span<double> y) const {
    std::fill(y.begin(), y.end(), 0.0);
    apply_add(x, y);
}

void Matrix::apply_add(std::span<const double> x, std::span<double> y) const {
    for (std::size_t r = 0; r < rows_; ++r) {
        const double* row = data_.data() + r * cols_;
        double acc = 0.0;
        for (std::size_t c = 0; c < cols_; ++c) acc += row[c] * x[c];
        y[r] += acc;
    }
}

Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.rows()) throw ConfigError("matmul inner dimensions differ");
    Matrix out(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        for (std::size_t k = 0; k < a.cols(); ++k) {
            const double aik = a(i, k);
            for (std::size_t j = 0; j < b.cols(); ++j) out(i, j) += aik * b(k, j);
        }
    }
    return out;
}

bool ProjectionWeights::is_folded() const {
    return !heads.empty() &&
           std::all_of(heads.begin(), heads.end(), [](const HeadProjection& h) { return h.folded.has_value(); });
}

void ProjectionWeights::validate() const {
    if (heads.empty()) throw ConfigError("projection weights have no heads");
    const auto d = static_cast<std::size_t>(channels);
    const auto m = heads.size();
    if (channels < 1 || d % m != 0) {
        throw ConfigError("channels " + std::to_string(channels) + " not divisible by heads " +
                          std::to_string(m));
    }
    const auto dh = d / m;
    for (std::size_t i = 0; i < m; ++i) {
        const auto& h = heads[i];
        const bool value_ok = h.value_proj.rows() == dh && h.value_proj.cols() == d;
        const bool output_ok = h.output_proj.rows() == d && h.output_proj.cols() == dh;
        const bool value_absent = h.value_proj.rows() == 0 && h.output_proj.rows() == 0;
        if (!(value_ok && output_ok) && !(value_absent && h.folded)) {
            throw ConfigError("head " + std::to_string(i) + " projection shapes do not match D=" +
                              std::to_string(d) + ", M=" + std::to_string(m));
        }
        if (h.folded && (h.folded->rows() != d || h.folded->cols() != d)) {
            throw ConfigError("head " + std::to_string(i) + " folded projection is not D x D");
        }
    }
}

BilinearStencil bilinear_stencil(PixelCoord coord) {
    if (!std::isfinite(coord.x) || !std::isfinite(coord.y)) {
        throw InputError("bilinear sample coordinate is not finite");
    }
    // Far-away coordinates collapse to a stencil whose taps are all out of range.
    constexpr double lo = -4.0;
    constexpr double hi = 1.0e9;
    const double x = std::clamp(coord.x, lo, hi);
    const double y = std::clamp(coord.y, lo, hi);
    const double xf = std::floor(x);
    const double yf = std::floor(y);
    const double fx = x - xf;
    const double fy = y - yf;
    BilinearStencil s;
    s.x0 = static_cast<int>(xf);
    s.y0 = static_cast<int>(yf);
    s.weights = {(1.0 - fx) * (1.0 - fy), fx * (1.0 - fy), (1.0 - fx) * fy, fx * fy};
    return s;
}

PixelCoord sample_location(NormPoint ref, NormPoint offset, LevelShape level) {
    return {(ref.u + offset.u) * static_cast<double>(level.width - 1),
            (ref.v + offset.v) * static_cast<double>(level.height - 1)};
}

void bilinear_accumulate(const FeatureMap& map, PixelCoord coord, double scale, std::span<double> acc) {
    const auto s = bilinear_stencil(coord);
    const auto shape = map.shape();
    for (int t = 0; t < 4; ++t) {
        const int x = s.tap_x(t);
        const int y = s.tap_y(t);
        if (!BilinearStencil::in_range(x, y, shape) || s.weights[t] == 0.0) continue;
        const double w = scale * s.weights[t];
        const auto v = map.at(y, x);
        for (std::size_t c = 0; c < acc.size(); ++c) acc[c] += w * static_cast<double>(v[c]);
    }
}

std::vector<double> bilinear_sample(const FeatureMap& map, PixelCoord coord) {
    std::vector<double> out(static_cast<std::size_t>(map.channels()), 0.0);
    bilinear_accumulate(map, coord, 1.0, out);
    return out;
}

std::vector<double> softmax_weights(std::span<const double> logits, SamplingDims dims) {
    if (logits.size() != dims.per_query()) {
        throw ConfigError("softmax expects " + std::to_string(dims.per_query()) + " logits, got " +
                          std::to_string(logits.size()));
    }
    const auto group = static_cast<std::size_t>(dims.levels) * static_cast<std::size_t>(dims.points);
    std::vector<double> out(logits.size());
    for (std::size_t base = 0; base < logits.size(); base += group) {
        const auto head = logits.subspan(base, group);
        const double mx = *std::max_element(head.begin(), head.end());
        double sum = 0.0;
        for (std::size_t i = 0; i < group; ++i) {
            out[base + i] = std::exp(head[i] - mx);
            sum += out[base + i];
        }
        for (std::size_t i = 0; i < group; ++i) out[base + i] /= sum;
    }
    return out;
}

void check_attention_shapes(const FeaturePyramid& pyramid, const QueryBatch& queries,
                            const ProjectionWeights& weights) {
    weights.validate();
    queries.validate();
    if (weights.channels != pyramid.channels()) {
        throw ConfigError("weights expect D=" + std::to_string(weights.channels) + " but pyramid has D=" +
                          std::to_string(pyramid.channels()));
    }
    if (static_cast<std::size_t>(queries.dims.heads) != weights.num_heads()) {
        throw ConfigError("queries sample " + std::to_string(queries.dims.heads) + " heads but weights have " +
                          std::to_string(weights.num_heads()));
    }
    if (static_cast<std::size_t>(queries.dims.levels) != pyramid.num_levels()) {
        throw ConfigError("queries sample " + std::to_string(queries.dims.levels) +
                          " levels but pyramid has " + std::to_string(pyramid.num_levels()));
    }
}

AttentionOutput msdeformattn_reference(const FeaturePyramid& pyramid, const QueryBatch& queries,
                                       const ProjectionWeights& weights) {
    check_attention_shapes(pyramid, queries, weights);
    const auto& dims = queries.dims;
    const auto d = static_cast<std::size_t>(pyramid.channels());
    const auto dh = d / weights.num_heads();

    AttentionOutput result;
    result.reserve(queries.size());
    std::vector<double> sample(d);
    std::vector<double> projected(dh);
    std::vector<double> head_acc(dh);
    for (const auto& q : queries.queries) {
        const auto attn = softmax_weights(q.logits, dims);
        QueryOutput row{q.id, std::vector<double>(d, 0.0)};
        for (int m = 0; m < dims.heads; ++m) {
            const auto& head = weights.heads[static_cast<std::size_t>(m)];
            std::fill(head_acc.begin(), head_acc.end(), 0.0);
            for (int l = 0; l < dims.levels; ++l) {
                const auto& map = pyramid.level(static_cast<std::size_t>(l));
                for (int k = 0; k < dims.points; ++k) {
                    const auto idx = dims.index(m, l, k);
                    std::fill(sample.begin(), sample.end(), 0.0);
                    bilinear_accumulate(map, sample_location(q.ref_point, q.offsets[idx], map.shape()), 1.0,
                                        sample);
                    head.value_proj.apply(sample, projected);
                    for (std::size_t c = 0; c < dh; ++c) head_acc[c] += attn[idx] * projected[c];
                }
            }
            head.output_proj.apply_add(head_acc, row.values);
        }
        result.push_back(std::move(row));
    }
    return result;
}

ProjectionWeights fold_projections(ProjectionWeights weights) {
    for (auto& head : weights.heads) head.folded = matmul(head.output_proj, head.value_proj);
    return weights;
}

AttentionOutput msdeformattn_fused(const FeaturePyramid& pyramid, const QueryBatch& queries,
                                   const ProjectionWeights& weights) {
    if (!weights.is_folded()) throw ConfigError("fused attention requires folded projections");
    check_attention_shapes(pyramid, queries, weights);
    const auto& dims = queries.dims;
    const auto d = static_cast<std::size_t>(pyramid.channels());
    const auto heads = static_cast<std::size_t>(dims.heads);

    AttentionOutput result;
    result.reserve(queries.size());
    std::vector<double> workspace(heads * d);
    for (const auto& q : queries.queries) {
        const auto attn = softmax_weights(q.logits, dims);
        std::fill(workspace.begin(), workspace.end(), 0.0);
        for (int m = 0; m < dims.heads; ++m) {
            auto ws = std::span<double>(workspace).subspan(static_cast<std::size_t>(m) * d, d);
            for (int l = 0; l < dims.levels; ++l) {
                const auto& map = pyramid.level(static_cast<std::size_t>(l));
                for (int k = 0; k < dims.points; ++k) {
                    const auto idx = dims.index(m, l, k);
                    bilinear_accumulate(map, sample_location(q.ref_point, q.offsets[idx], map.shape()), attn[idx],
                                        ws);
                }
            }
        }
        QueryOutput row{q.id, std::vector<double>(d, 0.0)};
        for (std::size_t m = 0; m < heads; ++m) {
            weights.heads[m].folded->apply_add(std::span<const double>(workspace).subspan(m * d, d), row.values);
        }
        result.push_back(std::move(row));
    }
    return result;
}

}  // namespace deformsim
