#include "hls4pc/layers.hpp"

#include <cmath>

namespace hls4pc {

namespace {

// Kernel-size segment reorganization (im2col). Row p holds the K segments of
// position p with layout [c0k0, c0k1, .., c1k0, ..] to match the weight rows.
RawMatrix to_segments(const Eigen::Map<const RawMatrix>& input, int kernel) {
    const std::int64_t positions = input.rows() - kernel + 1;
    const std::int64_t c_in = input.cols();
    RawMatrix seg(positions, c_in * kernel);
    for (std::int64_t p = 0; p < positions; ++p) {
        for (std::int64_t c = 0; c < c_in; ++c) {
            for (int t = 0; t < kernel; ++t) {
                seg(p, c * kernel + t) = input(p + t, c);
            }
        }
    }
    return seg;
}

RealMatrix to_segments(const RealMatrix& input, int kernel) {
    const std::int64_t positions = input.rows() - kernel + 1;
    const std::int64_t c_in = input.cols();
    RealMatrix seg(positions, c_in * kernel);
    for (std::int64_t p = 0; p < positions; ++p) {
        for (std::int64_t c = 0; c < c_in; ++c) {
            for (int t = 0; t < kernel; ++t) {
                seg(p, c * kernel + t) = input(p + t, c);
            }
        }
    }
    return seg;
}

}  // namespace

ConvAccum conv_accumulate(const QuantConvLayer& layer, const FxpTensor& input) {
    if (input.dims.size() != 2 || input.dim(1) != layer.c_in) {
        throw Error(ErrorCategory::shape, "conv input must be positions x C_in");
    }
    if (layer.weight.dims != std::vector<std::int64_t>{layer.c_out, layer.c_in, layer.kernel}) {
        throw Error(ErrorCategory::shape, "conv weight dims inconsistent with layer");
    }
    if (layer.bias.dims != std::vector<std::int64_t>{layer.c_out}) {
        throw Error(ErrorCategory::shape, "conv bias dims inconsistent with layer");
    }
    const std::int64_t in_positions = input.dim(0);
    if (in_positions < layer.kernel) throw Error(ErrorCategory::shape, "too few positions for kernel");

    const std::int64_t terms = static_cast<std::int64_t>(layer.c_in) * layer.kernel;
    check_mac_width(input.format, layer.weight.format, terms + 1);  // +1 covers the bias term

    const auto in_view = input.as_matrix(in_positions, layer.c_in);
    const auto w = layer.weight.as_matrix(layer.c_out, terms);

    ConvAccum result;
    if (layer.kernel == 1) {
        result.acc.noalias() = in_view * w.transpose();  // exact int64 products and sums
    } else {
        result.acc.noalias() = to_segments(in_view, layer.kernel) * w.transpose();
    }
    result.frac_bits = input.format.frac_bits + layer.weight.format.frac_bits;

    // Bias joins the accumulator scale before the single requantization.
    const int bias_shift = result.frac_bits - layer.bias.format.frac_bits;
    if (bias_shift > 0 && layer.bias.format.total_bits + bias_shift > 63) {
        throw Error(ErrorCategory::config, "bias format " + layer.bias.format.str() +
                                               " cannot be aligned to the accumulator scale exactly");
    }
    for (std::int64_t o = 0; o < layer.c_out; ++o) {
        const RawWord b = layer.bias.data[static_cast<std::size_t>(o)];
        const RawWord aligned = bias_shift >= 0
                                    ? (b << bias_shift)
                                    : requantize_raw(b, layer.bias.format.frac_bits,
                                                     FxpFormat{63, result.frac_bits, true});
        result.acc.col(o).array() += aligned;
    }
    return result;
}

FxpTensor conv_forward(const QuantConvLayer& layer, const FxpTensor& input) {
    const ConvAccum accum = conv_accumulate(layer, input);
    FxpTensor out(layer.act_format, {accum.acc.rows(), static_cast<std::int64_t>(layer.c_out)});
    auto out_view = out.as_matrix(accum.acc.rows(), layer.c_out);
    for (std::int64_t p = 0; p < accum.acc.rows(); ++p) {
        for (std::int64_t o = 0; o < layer.c_out; ++o) {
            out_view(p, o) = requantize_raw(accum.acc(p, o), accum.frac_bits, layer.act_format);
        }
    }
    return out;
}

RealMatrix conv_forward(const RealConvLayer& layer, const RealMatrix& input) {
    if (input.cols() != layer.c_in) throw Error(ErrorCategory::shape, "conv input must be positions x C_in");
    if (layer.weight.rows() != layer.c_out ||
        layer.weight.cols() != static_cast<std::int64_t>(layer.c_in) * layer.kernel) {
        throw Error(ErrorCategory::shape, "conv weight dims inconsistent with layer");
    }
    RealMatrix acc;
    if (layer.kernel == 1) {
        acc.noalias() = input * layer.weight.transpose();
    } else {
        acc.noalias() = to_segments(input, layer.kernel) * layer.weight.transpose();
    }
    acc.rowwise() += layer.bias.transpose();
    return acc;
}

FxpTensor relu_forward(const FxpTensor& input, int simd) {
    if (input.dims.empty()) throw Error(ErrorCategory::shape, "relu on empty tensor");
    const std::int64_t channels = input.dims.back();
    if (simd < 1 || channels % simd != 0) {
        throw Error(ErrorCategory::config,
                    "relu simd " + std::to_string(simd) + " does not divide channels " +
                        std::to_string(channels));
    }
    FxpTensor out = input;
    for (RawWord& w : out.data) w = std::max<RawWord>(w, 0);
    return out;
}

RealMatrix relu_forward(const RealMatrix& input) { return input.cwiseMax(0.0); }

FxpTensor maxpool_group(const FxpTensor& input) {
    if (input.dims.size() != 3) throw Error(ErrorCategory::shape, "maxpool input must be S x k x C");
    const std::int64_t s = input.dim(0), k = input.dim(1), c = input.dim(2);
    if (k < 1) throw Error(ErrorCategory::shape, "maxpool needs k >= 1");
    FxpTensor out(input.format, {s, c});
    for (std::int64_t i = 0; i < s; ++i) {
        for (std::int64_t ch = 0; ch < c; ++ch) {
            RawWord best = input.data[static_cast<std::size_t>((i * k) * c + ch)];
            for (std::int64_t j = 1; j < k; ++j) {
                best = std::max(best, input.data[static_cast<std::size_t>((i * k + j) * c + ch)]);
            }
            out.data[static_cast<std::size_t>(i * c + ch)] = best;
        }
    }
    return out;
}

RealMatrix maxpool_group(const RealMatrix& input, std::int64_t k) {
    if (k < 1 || input.rows() % k != 0) throw Error(ErrorCategory::shape, "maxpool rows not divisible by k");
    const std::int64_t s = input.rows() / k;
    RealMatrix out(s, input.cols());
    for (std::int64_t i = 0; i < s; ++i) {
        out.row(i) = input.middleRows(i * k, k).colwise().maxCoeff();
    }
    return out;
}

RealMatrix batchnorm_forward(const BatchNormParams& params, const RealMatrix& input) {
    if (input.cols() != params.channels()) throw Error(ErrorCategory::shape, "batchnorm channel mismatch");
    RealMatrix out(input.rows(), input.cols());
    for (std::int64_t c = 0; c < input.cols(); ++c) {
        const double denom = std::sqrt(params.running_var(c) + params.epsilon);
        if (!(denom > 0.0)) throw Error(ErrorCategory::config, "batchnorm var + eps must be positive");
        const double scale = params.gamma(c) / denom;
        const double shift = params.beta(c) - params.running_mean(c) * scale;
        out.col(c) = input.col(c) * scale + RealVector::Constant(input.rows(), shift);
    }
    return out;
}

FxpTensor group_and_normalize(const FxpTensor& features, const SampleSet& samples,
                              const NeighborTable& table, const QuantAffine* affine,
                              const FxpFormat& grouped_format, bool concat_anchor) {
    if (features.dims.size() != 2) throw Error(ErrorCategory::shape, "features must be N x C");
    const std::int64_t n = features.dim(0), c = features.dim(1);
    if (table.rows() != samples.size()) throw Error(ErrorCategory::shape, "table rows != sample count");
    const std::int64_t s = table.rows(), k = table.k();
    const std::int64_t out_c = concat_anchor ? 2 * c : c;
    check_format(grouped_format, true);

    const auto feat = features.as_matrix(n, c);
    const int feat_frac = features.format.frac_bits;

    FxpTensor out(grouped_format, {s, k, out_c});
    for (std::int64_t i = 0; i < s; ++i) {
        const std::int64_t anchor = samples.indices[static_cast<std::size_t>(i)];
        for (std::int64_t j = 0; j < k; ++j) {
            const std::int64_t nb = table.indices(i, j);
            if (nb < 0 || nb >= n) throw Error(ErrorCategory::shape, "neighbor index out of range");
            RawWord* row = out.data.data() + (i * k + j) * out_c;
            for (std::int64_t ch = 0; ch < c; ++ch) {
                const RawWord diff = feat(nb, ch) - feat(anchor, ch);  // exact in 64 bits
                if (affine) {
                    const RawWord scaled = fxp_mul(diff, features.format,
                                                   affine->alpha.data[static_cast<std::size_t>(ch)],
                                                   affine->alpha.format);
                    const RawWord centered = requantize_raw(
                        scaled, feat_frac + affine->alpha.format.frac_bits, grouped_format);
                    const RawWord shift = requantize(affine->beta.data[static_cast<std::size_t>(ch)],
                                                     affine->beta.format, grouped_format);
                    row[ch] = saturate(centered + shift, grouped_format);
                } else {
                    row[ch] = requantize_raw(diff, feat_frac, grouped_format);
                }
                if (concat_anchor) {
                    row[c + ch] = requantize_raw(feat(anchor, ch), feat_frac, grouped_format);
                }
            }
        }
    }
    return out;
}

RealMatrix group_and_normalize(const RealMatrix& features, const SampleSet& samples,
                               const NeighborTable& table, const GeometricAffine* affine,
                               bool concat_anchor) {
    const std::int64_t n = features.rows(), c = features.cols();
    if (table.rows() != samples.size()) throw Error(ErrorCategory::shape, "table rows != sample count");
    const std::int64_t s = table.rows(), k = table.k();
    const std::int64_t out_c = concat_anchor ? 2 * c : c;
    const bool apply_affine = affine != nullptr && affine->enabled;

    RealMatrix out(s * k, out_c);
    for (std::int64_t i = 0; i < s; ++i) {
        const std::int64_t anchor = samples.indices[static_cast<std::size_t>(i)];
        for (std::int64_t j = 0; j < k; ++j) {
            const std::int64_t nb = table.indices(i, j);
            if (nb < 0 || nb >= n) throw Error(ErrorCategory::shape, "neighbor index out of range");
            for (std::int64_t ch = 0; ch < c; ++ch) {
                double centered = features(nb, ch) - features(anchor, ch);
                if (apply_affine) centered = affine->alpha(ch) * centered + affine->beta(ch);
                out(i * k + j, ch) = centered;
                if (concat_anchor) out(i * k + j, c + ch) = features(anchor, ch);
            }
        }
    }
    return out;
}

}  // namespace hls4pc
