#include "deformsim/fixed_point.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "deformsim/errors.hpp"

namespace deformsim {

namespace {

__extension__ using int128 = __int128;

/// num / den rounded to nearest, ties to even. den > 0.
int128 div_round_half_even(int128 num, int128 den) {
    int128 q = num / den;
    int128 r = num % den;
    if (r < 0) {  // make it a floor division
        q -= 1;
        r += den;
    }
    const int128 twice = 2 * r;
    if (twice > den || (twice == den && (q & 1) != 0)) q += 1;
    return q;
}

std::int64_t ln2_raw(int frac_bits) { return round_half_even(std::numbers::ln2 * std::ldexp(1.0, frac_bits)); }

template <typename T>
QuantizedTensor quantize_impl(std::span<const T> values, const FixedPointFormat& fmt, ScalePolicy policy,
                              std::uint64_t* clamp_count) {
    fmt.validate();
    double scale = 0.0;
    if (policy.kind == ScalePolicy::Kind::max_abs) {
        if (values.empty()) throw InputError("cannot choose a max-abs scale for an empty tensor");
        double peak = 0.0;
        for (const T v : values) {
            if (!std::isfinite(static_cast<double>(v))) throw InputError("quantize: non-finite value");
            peak = std::max(peak, std::abs(static_cast<double>(v)));
        }
        scale = peak > 0.0 ? peak / static_cast<double>(fmt.max_int()) : fmt.native_scale();
    } else {
        scale = policy.scale;
        if (!(scale > 0.0) || !std::isfinite(scale)) throw InputError("quantize: explicit scale must be positive");
    }

    std::uint64_t local = 0;
    std::uint64_t& clamps = clamp_count ? *clamp_count : local;
    QuantizedTensor out;
    out.scale = scale;
    out.format = fmt;
    out.values.reserve(values.size());
    for (const T v : values) {
        const double x = static_cast<double>(v);
        if (!std::isfinite(x)) throw InputError("quantize: non-finite value");
        out.values.push_back(fit_to_format(round_half_even(x / scale), fmt, "quantize", clamps));
    }
    return out;
}

/// Largest magnitude among raw accumulator values.
std::int64_t peak_abs(std::span<const std::int64_t> v) {
    std::int64_t peak = 0;
    for (const auto x : v) peak = std::max(peak, x < 0 ? -x : x);
    return peak;
}

}  // namespace

void FixedPointFormat::validate() const {
    if (!(frac_bits > 0 && frac_bits < total_bits && total_bits <= 32)) {
        throw ConfigError("fixed-point format needs 0 < frac_bits < total_bits <= 32, got total=" +
                          std::to_string(total_bits) + " frac=" + std::to_string(frac_bits));
    }
}

std::int64_t FixedPointFormat::max_int() const {
    return is_signed ? (std::int64_t{1} << (total_bits - 1)) - 1 : (std::int64_t{1} << total_bits) - 1;
}

std::int64_t FixedPointFormat::min_int() const { return is_signed ? -(std::int64_t{1} << (total_bits - 1)) : 0; }

double FixedPointFormat::native_scale() const { return std::ldexp(1.0, -frac_bits); }

std::int64_t round_half_even(double v) {
    constexpr double limit = 9.0e18;
    return static_cast<std::int64_t>(std::nearbyint(std::clamp(v, -limit, limit)));
}

std::int64_t shift_round_half_even(std::int64_t v, int shift) {
    if (shift <= 0) return v;
    if (shift > 62) return 0;
    return static_cast<std::int64_t>(div_round_half_even(v, int128{1} << shift));
}

std::vector<double> QuantizedTensor::dequantize() const {
    std::vector<double> out(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) out[i] = dequantize(i);
    return out;
}

SaturationCounters& SaturationCounters::operator+=(const SaturationCounters& o) {
    input_quantize += o.input_quantize;
    bilinear_accum += o.bilinear_accum;
    bilinear_requant += o.bilinear_requant;
    aggregation_accum += o.aggregation_accum;
    aggregation_requant += o.aggregation_requant;
    projection_accum += o.projection_accum;
    head_accum += o.head_accum;
    softmax += o.softmax;
    return *this;
}

std::int64_t fit_to_format(std::int64_t v, const FixedPointFormat& fmt, std::string_view stage,
                           std::uint64_t& clamp_count) {
    if (fmt.fits(v)) return v;
    if (!fmt.saturating) {
        throw OverflowError(std::string(stage), "value " + std::to_string(v) + " exceeds " +
                                                    std::to_string(fmt.total_bits) + "-bit range");
    }
    ++clamp_count;
    return std::clamp(v, fmt.min_int(), fmt.max_int());
}

std::int64_t accumulate(std::int64_t acc, std::int64_t v, const FixedPointFormat& fmt, std::string_view stage,
                        std::uint64_t& clamp_count) {
    return fit_to_format(acc + v, fmt, stage, clamp_count);
}

QuantizedTensor quantize(std::span<const double> values, const FixedPointFormat& fmt, ScalePolicy policy,
                         std::uint64_t* clamp_count) {
    return quantize_impl(values, fmt, policy, clamp_count);
}

std::int64_t pade_exp(std::int64_t r_raw, const FixedPointFormat& fmt) {
    fmt.validate();
    const std::int64_t ln2 = ln2_raw(fmt.frac_bits);
    if (r_raw > 0 || r_raw < -ln2) {
        throw ContractViolation("pade_exp argument " + std::to_string(std::ldexp(static_cast<double>(r_raw),
                                                                                 -fmt.frac_bits)) +
                                " outside the reduced range [-ln 2, 0]");
    }
    const int128 one = int128{1} << fmt.frac_bits;
    const int128 r = r_raw;
    const int128 num = 12 * one * one + 6 * r * one + r * r;
    const int128 den = 12 * one * one - 6 * r * one + r * r;
    return static_cast<std::int64_t>(div_round_half_even(num * one, den));
}

double ExpParts::value() const { return std::ldexp(static_cast<double>(mantissa), exponent - frac_bits); }

ExpParts fixed_exp(std::int64_t x_raw, const FixedPointFormat& fmt) {
    if (x_raw > 0) throw ContractViolation("fixed_exp expects a non-positive argument");
    const std::int64_t ln2 = ln2_raw(fmt.frac_bits);
    // Truncating division rounds toward zero, which is ceil for x <= 0.
    const std::int64_t k = x_raw / ln2;
    const std::int64_t r = x_raw - k * ln2;
    return {pade_exp(r, fmt), static_cast<int>(k), fmt.frac_bits};
}

PrecisionPlan PrecisionPlan::non_saturating() {
    PrecisionPlan p;
    for (auto* f : {&p.weight_fmt_linear, &p.act_fmt_linear, &p.accum_fmt_linear, &p.weight_fmt_agg, &p.act_fmt_agg,
                    &p.accum_fmt_agg}) {
        f->saturating = false;
    }
    return p;
}

void PrecisionPlan::validate() const {
    const auto check = [](const FixedPointFormat& f, int bits, const char* name) {
        f.validate();
        if (f.total_bits != bits) {
            throw ConfigError(std::string("precision.") + name,
                              "expected " + std::to_string(bits) + " bits, got " + std::to_string(f.total_bits));
        }
    };
    check(weight_fmt_linear, 8, "weight_fmt_linear");
    check(act_fmt_linear, 8, "act_fmt_linear");
    check(accum_fmt_linear, 18, "accum_fmt_linear");
    check(weight_fmt_agg, 16, "weight_fmt_agg");
    check(act_fmt_agg, 8, "act_fmt_agg");
    check(accum_fmt_agg, 28, "accum_fmt_agg");
}

QuantizedTensor quantized_softmax(const QuantizedTensor& logits, SamplingDims dims, const PrecisionPlan& plan,
                                  SaturationCounters* counters) {
    if (logits.values.size() != dims.per_query()) {
        throw ConfigError("quantized_softmax expects " + std::to_string(dims.per_query()) + " logits");
    }
    SaturationCounters local;
    auto& sat = counters ? *counters : local;
    const auto& acc_fmt = plan.accum_fmt_agg;
    const auto& out_fmt = plan.weight_fmt_agg;
    const auto group = static_cast<std::size_t>(dims.levels) * static_cast<std::size_t>(dims.points);
    const double to_acc = logits.scale * std::ldexp(1.0, acc_fmt.frac_bits);

    QuantizedTensor out;
    out.format = out_fmt;
    out.scale = out_fmt.native_scale();
    out.values.resize(logits.values.size());
    std::vector<std::int64_t> e(group);
    for (std::size_t base = 0; base < logits.values.size(); base += group) {
        const auto head = std::span<const std::int64_t>(logits.values).subspan(base, group);
        const std::int64_t mx = *std::max_element(head.begin(), head.end());
        std::int64_t sum = 0;
        for (std::size_t i = 0; i < group; ++i) {
            const auto x = fit_to_format(round_half_even(static_cast<double>(head[i] - mx) * to_acc), acc_fmt,
                                         "softmax", sat.softmax);
            const auto parts = fixed_exp(x, acc_fmt);
            e[i] = shift_round_half_even(parts.mantissa, -parts.exponent);
            sum = accumulate(sum, e[i], acc_fmt, "softmax", sat.softmax);
        }
        // The maximum contributes exactly 1.0, so sum > 0.
        for (std::size_t i = 0; i < group; ++i) {
            const auto a = div_round_half_even(static_cast<int128>(e[i]) << out_fmt.frac_bits, sum);
            out.values[base + i] = fit_to_format(static_cast<std::int64_t>(a), out_fmt, "softmax", sat.softmax);
        }
    }
    return out;
}

QuantizedAttentionResult msdeformattn_fused_quantized(const FeaturePyramid& pyramid, const QueryBatch& queries,
                                                      const ProjectionWeights& weights, const PrecisionPlan& plan,
                                                      const QuantizationOptions& options) {
    if (!weights.is_folded()) throw ConfigError("quantized fused attention requires folded projections");
    check_attention_shapes(pyramid, queries, weights);
    plan.validate();

    QuantizedAttentionResult result;
    auto& sat = result.saturation;
    const auto& dims = queries.dims;
    const auto d = static_cast<std::size_t>(pyramid.channels());
    const auto heads = static_cast<std::size_t>(dims.heads);

    // Feature pyramid: one tensor, one scale.
    double pyramid_scale = 0.0;
    if (options.pyramid.kind == ScalePolicy::Kind::max_abs) {
        float peak = 0.0F;
        for (std::size_t l = 0; l < pyramid.num_levels(); ++l) {
            for (const float v : pyramid.level(l).data()) {
                if (!std::isfinite(v)) throw InputError("pyramid holds a non-finite value");
                peak = std::max(peak, std::abs(v));
            }
        }
        pyramid_scale = peak > 0.0F ? static_cast<double>(peak) / static_cast<double>(plan.act_fmt_linear.max_int())
                                    : plan.act_fmt_linear.native_scale();
    } else {
        pyramid_scale = options.pyramid.scale;
    }
    std::vector<QuantizedTensor> levels;
    levels.reserve(pyramid.num_levels());
    for (std::size_t l = 0; l < pyramid.num_levels(); ++l) {
        levels.push_back(quantize_impl(pyramid.level(l).data(), plan.act_fmt_linear, ScalePolicy::fixed(pyramid_scale),
                                       &sat.input_quantize));
    }

    std::vector<QuantizedTensor> projections;
    projections.reserve(heads);
    for (const auto& head : weights.heads) {
        projections.push_back(quantize(head.folded->data(), plan.weight_fmt_linear, options.projection,
                                       &sat.input_quantize));
    }

    std::vector<double> all_logits;
    all_logits.reserve(queries.size() * dims.per_query());
    for (const auto& q : queries.queries) all_logits.insert(all_logits.end(), q.logits.begin(), q.logits.end());
    double logit_scale = 1.0;
    if (!all_logits.empty()) {
        logit_scale = quantize(all_logits, plan.act_fmt_agg, options.logits).scale;
    }

    const auto coeff_fmt = plan.bilinear_coeff_format();
    const double bilinear_scale =
        options.bilinear.kind == ScalePolicy::Kind::max_abs ? pyramid_scale : options.bilinear.scale;
    // Raw bilinear accumulator unit is coeff_unit * pyramid_scale.
    const double bilinear_requant = coeff_fmt.native_scale() * pyramid_scale / bilinear_scale;
    const double agg_unit = plan.weight_fmt_agg.native_scale() * bilinear_scale;

    // Heads are combined on a common scale with guard bits so the narrower
    // projection results keep their precision inside the wider accumulator.
    int head_bits = 0;
    while ((std::size_t{1} << head_bits) < heads) ++head_bits;
    const int guard = std::max(0, plan.accum_fmt_agg.total_bits - plan.accum_fmt_linear.total_bits - head_bits);

    std::vector<std::int64_t> agg(d);
    std::vector<std::int64_t> act(d);
    std::vector<std::int64_t> projected(heads * d);
    std::vector<double> head_scale(heads);
    std::vector<std::int64_t> out_acc(d);
    std::array<std::int64_t, 4> coeff{};

    result.output.reserve(queries.size());
    for (const auto& q : queries.queries) {
        const auto qlogits = quantize(q.logits, plan.act_fmt_agg, ScalePolicy::fixed(logit_scale), &sat.input_quantize);
        const auto attn = quantized_softmax(qlogits, dims, plan, &sat);

        for (std::size_t m = 0; m < heads; ++m) {
            std::fill(agg.begin(), agg.end(), 0);
            for (int l = 0; l < dims.levels; ++l) {
                const auto& map = pyramid.level(static_cast<std::size_t>(l));
                const auto& qmap = levels[static_cast<std::size_t>(l)].values;
                const auto shape = map.shape();
                for (int k = 0; k < dims.points; ++k) {
                    const auto idx = dims.index(static_cast<int>(m), l, k);
                    const auto st = bilinear_stencil(sample_location(q.ref_point, q.offsets[idx], shape));
                    for (int t = 0; t < 4; ++t) {
                        coeff[static_cast<std::size_t>(t)] =
                            fit_to_format(round_half_even(st.weights[static_cast<std::size_t>(t)] /
                                                          coeff_fmt.native_scale()),
                                          coeff_fmt, "bilinear", sat.bilinear_accum);
                    }
                    const std::int64_t a = attn.values[idx];
                    for (std::size_t c = 0; c < d; ++c) {
                        std::int64_t acc = 0;
                        for (int t = 0; t < 4; ++t) {
                            const int x = st.tap_x(t);
                            const int y = st.tap_y(t);
                            if (!BilinearStencil::in_range(x, y, shape)) continue;
                            const auto pos = (static_cast<std::size_t>(y) * static_cast<std::size_t>(shape.width) +
                                              static_cast<std::size_t>(x)) *
                                                 d +
                                             c;
                            acc = accumulate(acc, coeff[static_cast<std::size_t>(t)] * qmap[pos],
                                             plan.accum_fmt_linear, "bilinear", sat.bilinear_accum);
                        }
                        const auto v = fit_to_format(round_half_even(static_cast<double>(acc) * bilinear_requant),
                                                     plan.act_fmt_linear, "bilinear_requant", sat.bilinear_requant);
                        agg[c] = accumulate(agg[c], a * v, plan.accum_fmt_agg, "aggregation", sat.aggregation_accum);
                    }
                }
            }

            // Re-quantize the head's aggregated vector to 8 bits.
            double agg_scale = 0.0;
            if (options.aggregated.kind == ScalePolicy::Kind::max_abs) {
                const auto peak = peak_abs(agg);
                agg_scale = peak > 0 ? static_cast<double>(peak) * agg_unit /
                                           static_cast<double>(plan.act_fmt_linear.max_int())
                                     : agg_unit;
            } else {
                agg_scale = options.aggregated.scale;
            }
            const double agg_requant = agg_unit / agg_scale;
            for (std::size_t c = 0; c < d; ++c) {
                act[c] = fit_to_format(round_half_even(static_cast<double>(agg[c]) * agg_requant), plan.act_fmt_linear,
                                       "aggregation_requant", sat.aggregation_requant);
            }

            const auto& w = projections[m];
            for (std::size_t r = 0; r < d; ++r) {
                std::int64_t acc = 0;
                for (std::size_t c = 0; c < d; ++c) {
                    acc = accumulate(acc, w.values[r * d + c] * act[c], plan.accum_fmt_linear, "projection",
                                     sat.projection_accum);
                }
                projected[m * d + r] = acc;
            }
            head_scale[m] = w.scale * agg_scale;
        }

        const double out_scale = *std::max_element(head_scale.begin(), head_scale.end()) * std::ldexp(1.0, -guard);
        std::fill(out_acc.begin(), out_acc.end(), 0);
        for (std::size_t m = 0; m < heads; ++m) {
            const double ratio = head_scale[m] / out_scale;
            for (std::size_t r = 0; r < d; ++r) {
                const auto v = round_half_even(static_cast<double>(projected[m * d + r]) * ratio);
                out_acc[r] = accumulate(out_acc[r], v, plan.accum_fmt_agg, "head_sum", sat.head_accum);
            }
        }
        QueryOutput row{q.id, std::vector<double>(d)};
        for (std::size_t r = 0; r < d; ++r) row.values[r] = static_cast<double>(out_acc[r]) * out_scale;
        result.output.push_back(std::move(row));
    }
    return result;
}

}  // namespace deformsim
