#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "hls4pc/fxp.hpp"

namespace hls4pc {

enum class SamplerType { urs, fps };

struct SamplerSpec {
    SamplerType type = SamplerType::urs;
    int lfsr_degree = 16;
    std::uint32_t lfsr_taps = 0;  // 0 = use the default primitive polynomial for the degree
    std::uint32_t seed = 1;
};

/// Distance-engine parameters: pe_count is the number of parallel distance
/// units (X); dist_format overrides the derived distance-buffer format.
struct KnnSpec {
    int pe_count = 4;
    std::optional<FxpFormat> dist_format;
};

struct StageSpec {
    int num_samples = 0;
    int k = 0;
    std::vector<int> pre_channels;
    std::vector<int> pos_channels;
};

/// Per-layer schedule assignment. Formats, when present, override the
/// quantizer's calibrated choice.
struct LayerDataflow {
    int pe = 1;
    int simd = 1;
    std::optional<FxpFormat> weight_format;
    std::optional<FxpFormat> act_format;
};

struct DataflowConfig {
    LayerDataflow defaults;
    std::map<std::string, LayerDataflow> per_layer;

    LayerDataflow at(const std::string& name) const {
        auto it = per_layer.find(name);
        return it == per_layer.end() ? defaults : it->second;
    }
};

/// One convolution unit in the flattened layer enumeration, with shape
/// information derived from the topology.
struct ConvSpec {
    std::string name;      // "stage{i}.{pre|pos}.{j}" or "classifier.{j}"
    int c_in = 0;
    int c_out = 0;
    int kernel = 1;
    std::int64_t positions = 0;  // output positions per inference
    bool has_relu = true;        // all but the final classifier layer
};

struct ModelTopology {
    int input_points = 0;
    std::vector<StageSpec> stages;
    std::vector<int> classifier_channels;
    SamplerSpec sampler;
    KnnSpec knn;
    bool geometric_affine = false;
    bool concat_anchor = true;    // grouped tensor is [centered || anchor] when set, else centered only
    bool truncate_input = true;   // clouds larger than input_points are truncated, never an error

    int num_classes() const { return classifier_channels.empty() ? 0 : classifier_channels.back(); }

    /// Feature width entering stage i (3 for stage 0: x,y,z).
    int stage_input_channels(int stage) const;

    /// Point count entering stage i (input_points for stage 0).
    int stage_input_points(int stage) const;

    int grouped_channels(int stage) const {
        return (concat_anchor ? 2 : 1) * stage_input_channels(stage);
    }

    /// Flattened conv enumeration in execution order, classifier included.
    std::vector<ConvSpec> conv_layers() const;

    int conv_count() const;        // stage convs only
    int classifier_count() const;  // classifier layers

    /// Structural validation: sample schedule monotone, channels positive,
    /// LFSR wide enough, k within reach. Throws ConfigError.
    void validate() const;
};

struct ModelConfig {
    ModelTopology topology;
    DataflowConfig dataflow;
};

/// Validates that every per-layer SIMD divides its layer's input channels and
/// every PE count is positive. Throws ConfigError naming the offending layer.
void validate_dataflow(const ModelTopology& topology, const DataflowConfig& dataflow);

}  // namespace hls4pc
