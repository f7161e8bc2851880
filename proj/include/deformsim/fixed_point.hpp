#pragma once

#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "deformsim/attention.hpp"

namespace deformsim {

/// Integer storage descriptor. The native scale of a format is 2^-frac_bits;
/// tensors may carry any other positive real scale.
struct FixedPointFormat {
    int total_bits = 8;
    int frac_bits = 7;
    bool is_signed = true;
    bool saturating = true;

    /// Throws ConfigError unless 0 < frac_bits < total_bits <= 32.
    void validate() const;
    std::int64_t max_int() const;
    std::int64_t min_int() const;
    double native_scale() const;
    bool fits(std::int64_t v) const { return v >= min_int() && v <= max_int(); }

    bool operator==(const FixedPointFormat&) const = default;
};

/// Round-to-nearest, ties to even.
std::int64_t round_half_even(double v);

/// Shift right by `shift` bits rounding to nearest, ties to even. shift >= 0.
std::int64_t shift_round_half_even(std::int64_t v, int shift);

struct ScalePolicy {
    enum class Kind { max_abs, explicit_scale };
    Kind kind = Kind::max_abs;
    double scale = 0.0;

    static ScalePolicy max_abs() { return {}; }
    static ScalePolicy fixed(double s) { return {Kind::explicit_scale, s}; }
};

struct QuantizedTensor {
    std::vector<std::int64_t> values;
    double scale = 1.0;
    FixedPointFormat format;

    double dequantize(std::size_t i) const { return static_cast<double>(values[i]) * scale; }
    std::vector<double> dequantize() const;
};

/// Clamp events (saturating formats) per pipeline stage.
struct SaturationCounters {
    std::uint64_t input_quantize = 0;
    std::uint64_t bilinear_accum = 0;
    std::uint64_t bilinear_requant = 0;
    std::uint64_t aggregation_accum = 0;
    std::uint64_t aggregation_requant = 0;
    std::uint64_t projection_accum = 0;
    std::uint64_t head_accum = 0;
    std::uint64_t softmax = 0;

    std::uint64_t total() const {
        return input_quantize + bilinear_accum + bilinear_requant + aggregation_accum + aggregation_requant +
               projection_accum + head_accum + softmax;
    }
    SaturationCounters& operator+=(const SaturationCounters& o);
};

/// Brings v into the format's range. Saturating formats clamp and bump
/// `clamp_count`; others throw OverflowError naming `stage`.
std::int64_t fit_to_format(std::int64_t v, const FixedPointFormat& fmt, std::string_view stage,
                           std::uint64_t& clamp_count);

/// acc + v evaluated against the accumulator range; never wraps.
std::int64_t accumulate(std::int64_t acc, std::int64_t v, const FixedPointFormat& fmt, std::string_view stage,
                        std::uint64_t& clamp_count);

/// Per-tensor symmetric quantization with round-half-even. Under max_abs the
/// largest magnitude maps to max_int(). An all-zero tensor gets the native scale.
QuantizedTensor quantize(std::span<const double> values, const FixedPointFormat& fmt, ScalePolicy policy,
                         std::uint64_t* clamp_count = nullptr);

/// (2,2) Padé approximant of e^r, (12 + 6r + r^2) / (12 - 6r + r^2), for a raw
/// value r in `fmt` lying in [-ln 2, 0]. Returns a raw value in the same format.
/// Throws ContractViolation outside the reduced range.
std::int64_t pade_exp(std::int64_t r_raw, const FixedPointFormat& fmt);

/// e^x as mantissa * 2^exponent, mantissa raw in `fmt` and in [0.5, 1].
struct ExpParts {
    std::int64_t mantissa = 0;
    int exponent = 0;
    int frac_bits = 0;

    double value() const;
};

/// Range reduction e^x = 2^k * e^r with k = ceil(x / ln 2), then pade_exp(r).
/// x_raw must be <= 0.
ExpParts fixed_exp(std::int64_t x_raw, const FixedPointFormat& fmt);

/// Bit widths of the two arithmetic paths: weights/activations/accumulators of
/// 8/8/18 bits for bilinear and projection, 16/8/28 bits for Softmax and
/// attention-weighted aggregation.
struct PrecisionPlan {
    FixedPointFormat weight_fmt_linear{8, 7, true, true};
    FixedPointFormat act_fmt_linear{8, 7, true, true};
    FixedPointFormat accum_fmt_linear{18, 14, true, true};
    FixedPointFormat weight_fmt_agg{16, 15, false, true};
    FixedPointFormat act_fmt_agg{8, 7, true, true};
    FixedPointFormat accum_fmt_agg{28, 20, true, true};

    static PrecisionPlan standard() { return {}; }
    /// Same widths with every format non-saturating; overflow raises instead of clamping.
    static PrecisionPlan non_saturating();

    /// Throws ConfigError unless the widths are 8/8/18 and 16/8/28.
    void validate() const;

    /// Bilinear coefficients: unsigned, linear-path weight width, one integer bit so 1.0 is exact.
    FixedPointFormat bilinear_coeff_format() const {
        return {weight_fmt_linear.total_bits, weight_fmt_linear.total_bits - 1, false,
                weight_fmt_linear.saturating};
    }
};

/// Softmax over each head's L*K quantized logits: max subtraction, fixed_exp,
/// division in the aggregation accumulator. Result is in weight_fmt_agg at its
/// native scale.
QuantizedTensor quantized_softmax(const QuantizedTensor& logits, SamplingDims dims, const PrecisionPlan& plan,
                                  SaturationCounters* counters = nullptr);

/// Scale choices for each quantized tensor of the fused pass. `bilinear` with
/// kind max_abs means "reuse the pyramid scale" (interpolation cannot grow magnitudes).
struct QuantizationOptions {
    ScalePolicy pyramid = ScalePolicy::max_abs();
    ScalePolicy projection = ScalePolicy::max_abs();  ///< one scale per folded head matrix
    ScalePolicy logits = ScalePolicy::max_abs();      ///< one scale for the whole batch
    ScalePolicy bilinear = ScalePolicy::max_abs();
    ScalePolicy aggregated = ScalePolicy::max_abs();  ///< per query and head
};

struct QuantizedAttentionResult {
    AttentionOutput output;  ///< dequantized
    SaturationCounters saturation;
};

/// Bit-true fixed-point version of msdeformattn_fused. Re-quantization points:
/// after bilinear interpolation (to 8 bits) and after attention-weighted
/// aggregation (to 8 bits, before the projection).
QuantizedAttentionResult msdeformattn_fused_quantized(const FeaturePyramid& pyramid, const QueryBatch& queries,
                                                      const ProjectionWeights& weights, const PrecisionPlan& plan,
                                                      const QuantizationOptions& options = {});

}  // namespace deformsim
