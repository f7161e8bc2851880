#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace deformsim {

struct LevelShape {
    int height = 0;
    int width = 0;

    bool operator==(const LevelShape&) const = default;
};

/// Spatial layout of a feature pyramid without the feature data.
struct PyramidShape {
    std::vector<LevelShape> levels;
    int channels = 0;

    std::size_t num_levels() const { return levels.size(); }
    /// Sum of H_l * W_l over all levels.
    std::size_t total_locations() const;
    /// Index of the first location of `level` when all levels are laid out back to back.
    std::size_t level_offset(std::size_t level) const;
    /// Throws ConfigError when a dimension is not positive or there are no levels.
    void validate() const;

    bool operator==(const PyramidShape&) const = default;
};

/// Fractional position in pixel units. x runs along the width, y along the height.
struct PixelCoord {
    double x = 0.0;
    double y = 0.0;
};

/// Normalized position; u runs along the width, v along the height. Reference
/// points live in [0,1]^2, offsets use the same units.
struct NormPoint {
    double u = 0.0;
    double v = 0.0;

    bool operator==(const NormPoint&) const = default;
};

/// Row-major H x W grid of D-channel vectors.
class FeatureMap {
public:
    FeatureMap(int height, int width, int channels);
    FeatureMap(int height, int width, int channels, std::vector<float> data);

    int height() const { return height_; }
    int width() const { return width_; }
    int channels() const { return channels_; }
    LevelShape shape() const { return {height_, width_}; }

    std::span<const float> at(int y, int x) const;
    std::span<float> at(int y, int x);
    std::span<const float> data() const { return data_; }
    std::span<float> data() { return data_; }

private:
    int height_;
    int width_;
    int channels_;
    std::vector<float> data_;
};

class FeaturePyramid {
public:
    /// Throws ConfigError when levels is empty or channel counts disagree.
    explicit FeaturePyramid(std::vector<FeatureMap> levels);

    std::size_t num_levels() const { return levels_.size(); }
    int channels() const { return levels_.front().channels(); }
    const FeatureMap& level(std::size_t l) const { return levels_.at(l); }
    FeatureMap& level(std::size_t l) { return levels_.at(l); }
    PyramidShape shape() const;

private:
    std::vector<FeatureMap> levels_;
};

/// Sampling axes shared by every query of a batch: M heads, L levels, K points.
struct SamplingDims {
    int heads = 0;
    int levels = 0;
    int points = 0;

    std::size_t per_query() const {
        return static_cast<std::size_t>(heads) * static_cast<std::size_t>(levels) *
               static_cast<std::size_t>(points);
    }
    /// Flat index of (m, l, k); head-major, then level, then point.
    std::size_t index(int m, int l, int k) const {
        return (static_cast<std::size_t>(m) * static_cast<std::size_t>(levels) +
                static_cast<std::size_t>(l)) *
                   static_cast<std::size_t>(points) +
               static_cast<std::size_t>(k);
    }

    bool operator==(const SamplingDims&) const = default;
};

struct Query {
    std::int64_t id = 0;
    NormPoint ref_point;
    std::vector<NormPoint> offsets;  ///< M*L*K entries, SamplingDims::index order
    std::vector<double> logits;      ///< pre-Softmax scores, same layout as offsets

    bool operator==(const Query&) const = default;
};

struct QueryBatch {
    SamplingDims dims;
    std::vector<Query> queries;

    std::size_t size() const { return queries.size(); }
    bool empty() const { return queries.empty(); }
    /// Unique ids, per-query entry counts, reference points inside [0,1]^2.
    void validate() const;
};

/// Dense row-major matrix of doubles.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols);
    Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);

    static Matrix identity(std::size_t n);

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
    double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    std::span<const double> data() const { return data_; }
    std::span<double> data() { return data_; }

    /// y = this * x.
    void apply(std::span<const double> x, std::span<double> y) const;
    /// y += this * x.
    void apply_add(std::span<const double> x, std::span<double> y) const;

    bool operator==(const Matrix&) const = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

Matrix matmul(const Matrix& a, const Matrix& b);

/// Per-head projections. value_proj is (D/M) x D, output_proj is D x (D/M),
/// folded (when present) is D x D and equals output_proj * value_proj.
struct HeadProjection {
    Matrix value_proj;
    Matrix output_proj;
    std::optional<Matrix> folded;
};

struct ProjectionWeights {
    int channels = 0;
    std::vector<HeadProjection> heads;

    std::size_t num_heads() const { return heads.size(); }
    bool is_folded() const;
    /// D mod M == 0 and every matrix has the expected shape.
    void validate() const;
};

struct QueryOutput {
    std::int64_t id = 0;
    std::vector<double> values;  ///< D entries

    bool operator==(const QueryOutput&) const = default;
};

/// One row per query, carrying the query id so any execution order can be undone.
using AttentionOutput = std::vector<QueryOutput>;

/// 2x2 interpolation stencil. Taps are ordered (y0,x0), (y0,x0+1), (y0+1,x0), (y0+1,x0+1).
struct BilinearStencil {
    int x0 = 0;
    int y0 = 0;
    std::array<double, 4> weights{};

    int tap_x(int t) const { return x0 + (t & 1); }
    int tap_y(int t) const { return y0 + (t >> 1); }
    static bool in_range(int x, int y, LevelShape s) {
        return x >= 0 && y >= 0 && x < s.width && y < s.height;
    }
};

/// Throws InputError for a non-finite coordinate. Coordinates far outside any
/// map are clamped so that every tap lies out of range.
BilinearStencil bilinear_stencil(PixelCoord coord);

/// Pixel position of reference point plus offset on one level:
/// ((u + du) * (W - 1), (v + dv) * (H - 1)).
PixelCoord sample_location(NormPoint ref, NormPoint offset, LevelShape level);

/// Zero-padded bilinear interpolation; out-of-range taps contribute nothing.
std::vector<double> bilinear_sample(const FeatureMap& map, PixelCoord coord);

/// acc += scale * bilinear_sample(map, coord), without allocating.
void bilinear_accumulate(const FeatureMap& map, PixelCoord coord, double scale,
                         std::span<double> acc);

/// Per-head Softmax over the L*K entries of each head, max-subtracted.
std::vector<double> softmax_weights(std::span<const double> logits, SamplingDims dims);

/// Two-stage evaluation: value projection per sample, weighted sum per head,
/// output projection per head, sum over heads.
AttentionOutput msdeformattn_reference(const FeaturePyramid& pyramid, const QueryBatch& queries,
                                       const ProjectionWeights& weights);

/// Returns a copy with folded = output_proj * value_proj for every head.
ProjectionWeights fold_projections(ProjectionWeights weights);

/// Single pass with folded projections: accumulate A * x into an M x D
/// workspace per query, then apply each folded matrix and sum over heads.
AttentionOutput msdeformattn_fused(const FeaturePyramid& pyramid, const QueryBatch& queries,
                                   const ProjectionWeights& weights);

/// Throws ConfigError unless pyramid, batch and weights agree on D, M and L.
void check_attention_shapes(const FeaturePyramid& pyramid, const QueryBatch& queries,
                            const ProjectionWeights& weights);

}  // namespace deformsim
