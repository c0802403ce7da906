#pragma once

#include <optional>

#include "hls4pc/fxp.hpp"
#include "hls4pc/neighbors.hpp"
#include "hls4pc/sampling.hpp"

namespace hls4pc {

struct BatchNormParams {
    RealVector gamma;
    RealVector beta;
    RealVector running_mean;
    RealVector running_var;
    double epsilon = 1e-5;

    int channels() const { return static_cast<int>(gamma.size()); }
};

/// Learnable scale/shift applied to centered neighbor features. Disabled means
/// the identity on the normalization scale/shift.
struct GeometricAffine {
    RealVector alpha;
    RealVector beta;
    bool enabled = false;
};

/// Real-arithmetic convolution: weight is C_out x (C_in*K) with the kernel tap
/// varying fastest within a row.
struct RealConvLayer {
    int c_in = 0;
    int c_out = 0;
    int kernel = 1;
    RealMatrix weight;
    RealVector bias;
};

/// Fixed-point convolution unit. pe/simd are schedule parameters; the numeric
/// result is independent of them.
struct QuantConvLayer {
    int c_in = 0;
    int c_out = 0;
    int kernel = 1;
    FxpTensor weight;     // dims {C_out, C_in, K}
    FxpTensor bias;       // dims {C_out}, own narrow format
    FxpFormat act_format; // output activation format
    int pe = 1;
    int simd = 1;
};

/// Exact wide accumulator of one conv unit: products plus bias, no rounding.
struct ConvAccum {
    RawMatrix acc;  // positions x C_out
    int frac_bits;  // input frac + weight frac
};
ConvAccum conv_accumulate(const QuantConvLayer& layer, const FxpTensor& input);

/// positions x C_in -> positions-K+1 x C_out. Exact wide-accumulator MAC over
/// C_in*K products plus bias, then one requantization to act_format.
FxpTensor conv_forward(const QuantConvLayer& layer, const FxpTensor& input);

/// Real twin of conv_forward for the reference path.
RealMatrix conv_forward(const RealConvLayer& layer, const RealMatrix& input);

/// Elementwise max(0, x). simd must divide the channel count (last dim); it
/// only affects the perf model's folding factor.
FxpTensor relu_forward(const FxpTensor& input, int simd = 1);
RealMatrix relu_forward(const RealMatrix& input);

/// numSamp x k x C -> numSamp x C, maximum over the k neighbors.
FxpTensor maxpool_group(const FxpTensor& input);
RealMatrix maxpool_group(const RealMatrix& input, std::int64_t k);

/// gamma * (x - mean) / sqrt(var + eps) + beta, channelwise, real arithmetic.
RealMatrix batchnorm_forward(const BatchNormParams& params, const RealMatrix& input);

/// Quantized affine parameters for the fixed-point grouper path.
struct QuantAffine {
    FxpTensor alpha;  // per-channel scale
    FxpTensor beta;   // per-channel shift
};

/// Gather each sample's k neighbor feature rows, subtract the anchor's row,
/// optionally scale/shift by the affine parameters, and (when concat_anchor)
/// append the anchor features. Output dims {S, k, 2C} or {S, k, C}.
FxpTensor group_and_normalize(const FxpTensor& features, const SampleSet& samples,
                              const NeighborTable& table, const QuantAffine* affine,
                              const FxpFormat& grouped_format, bool concat_anchor = true);

/// Real twin; rows are (s * k + j), columns the grouped channels.
RealMatrix group_and_normalize(const RealMatrix& features, const SampleSet& samples,
                               const NeighborTable& table, const GeometricAffine* affine,
                               bool concat_anchor = true);

}  // namespace hls4pc
