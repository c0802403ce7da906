#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "hls4pc/layers.hpp"
#include "hls4pc/pcio.hpp"
#include "hls4pc/topology.hpp"

namespace hls4pc {

/// Real-arithmetic model: one entry per conv in topology.conv_layers() order.
struct RealLayer {
    std::string name;
    RealConvLayer conv;
    std::optional<BatchNormParams> bn;
};

struct RealModel {
    ModelTopology topology;
    std::vector<RealLayer> layers;
    std::vector<GeometricAffine> affines;  // one per stage; disabled entries are identity

    const RealLayer& at(const std::string& name) const;
};

/// Quantized batch-norm parameters (epsilon folded into var at quantization).
struct QuantBnParams {
    FxpTensor gamma;
    FxpTensor beta;
    FxpTensor mean;
    FxpTensor var;
};

struct QuantLayer {
    std::string name;
    QuantConvLayer conv;
    std::optional<QuantBnParams> bn;
};

struct QuantModel {
    ModelTopology topology;
    FxpFormat input_format;                    // x,y,z coordinate format
    std::vector<FxpFormat> grouped_formats;    // per stage
    std::vector<QuantLayer> layers;
    std::vector<std::optional<QuantAffine>> affines;  // per stage
};

/// Record of one batch-norm fusion, real arithmetic before quantization.
struct FusionRecord {
    std::string layer;
    RealConvLayer original;
    BatchNormParams bn;
    RealConvLayer fused;
};

/// Fold BN into the conv: w' = w * gamma/sqrt(var+eps), b' = (b-mean)*gamma/sqrt(var+eps) + beta.
RealConvLayer fuse_batchnorm(const RealConvLayer& conv, const BatchNormParams& bn);

/// Fuse every BN-carrying layer; appends one FusionRecord per fused layer when
/// records is non-null.
RealModel fuse_model(const RealModel& model, std::vector<FusionRecord>* records = nullptr);

/// Per-tensor max absolute activation value observed over a calibration set.
struct CalibrationStats {
    std::map<std::string, double> max_abs;

    double at(const std::string& name) const;
    void merge(const std::map<std::string, double>& observed);
};

/// Real-arithmetic forward passes over every calibration cloud, recording the
/// running max-abs of each streamed activation tensor.
CalibrationStats calibrate(const RealModel& model, const std::vector<PointCloud>& clouds);

/// Signed format with the largest frac_bits whose range still covers max_abs.
/// max_abs = 0 degenerates to the maximal frac_bits.
FxpFormat choose_format(double max_abs, int total_bits);

/// Quantize every weight/bias/activation tensor; per-layer format overrides
/// from the dataflow config win over the calibrated choice.
QuantModel quantize_model(const RealModel& model, int weight_bits, int act_bits,
                          const CalibrationStats& stats, const DataflowConfig* overrides = nullptr);

/// Archive round trips. Real archives persist tensors at 32 bits and carry no
/// activation-format entries; quantized archives add zero-element ".act"
/// carriers whose header stores each activation format.
WeightArchive to_archive(const QuantModel& model);
QuantModel quant_model_from_archive(const ModelTopology& topology, const WeightArchive& archive);
WeightArchive to_real_archive(const RealModel& model);
RealModel real_model_from_archive(const ModelTopology& topology, const WeightArchive& archive);

/// Deterministic random model for desk experiments (training is out of scope).
/// unit_scale keeps activations near unit magnitude for error-envelope studies.
RealModel random_real_model(const ModelTopology& topology, std::uint64_t seed, bool unit_scale = false);

}  // namespace hls4pc
