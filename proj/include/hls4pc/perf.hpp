#pragma once

#include <optional>
#include <string>
#include <vector>

#include "hls4pc/compress.hpp"
#include "hls4pc/topology.hpp"

namespace hls4pc {

struct LayerCost {
    std::string name;
    std::int64_t macs = 0;
    std::int64_t cycles = 1;
    std::int64_t params_bits = 0;
    std::int64_t buffer_bits = 0;
};

/// Steady-state throughput of the streaming pipeline: every layer is its own
/// stage at initiation interval 1, so the slowest stage sets the rate.
struct PerfReport {
    std::vector<LayerCost> layers;
    std::string bottleneck;
    double clock_hz = 0;
    double sps = 0;    // inferences per second = clock_hz / max layer cycles
    double gops = 0;   // 2 * total_macs * sps / 1e9
    std::int64_t total_macs = 0;
    std::int64_t memory_bits = 0;  // params + buffers
    std::int64_t bram18k = 0;      // ceil(memory_bits / 18Kb)
    std::optional<double> gops_per_watt;
};

/// Per-unit cycle formulas; pipelined at initiation interval 1.
std::int64_t conv_cycles(std::int64_t positions, int c_out, int c_in, int kernel, int pe, int simd);
std::int64_t relu_cycles(std::int64_t positions, int channels, int simd);
std::int64_t maxpool_cycles(std::int64_t positions, int k, int channels, int simd);
std::int64_t knn_cycles(int num_samples, std::int64_t num_points, int k, int pe_count);
std::int64_t urs_cycles(int num_samples, int overdraw_factor = 2);

/// Bottleneck aggregation over an explicit cost list.
PerfReport aggregate(std::vector<LayerCost> layers, double clock_hz, std::optional<double> power_watts);

/// Walk the topology's pipeline (urs, knn, convs, relus, pools, classifier) and
/// aggregate. Tensor bit widths come from the quantized model when given,
/// otherwise from the default weight/act widths.
PerfReport estimate(const ModelTopology& topology, const DataflowConfig& dataflow, double clock_hz,
                    std::optional<double> power_watts, const QuantModel* model = nullptr,
                    int default_weight_bits = 8, int default_act_bits = 8);

struct MemoryReport {
    std::vector<LayerCost> layers;  // macs unused here
    std::int64_t param_bits = 0;
    std::int64_t buffer_bits = 0;
    std::int64_t total_bits = 0;
    std::int64_t bram18k = 0;
    /// Parameter bits NOT stored because batch-norm was folded away:
    /// 4 * C_out * weight_bits per fused stage conv.
    std::int64_t fusion_savings_bits = 0;
};

MemoryReport memory_report(const ModelTopology& topology, const DataflowConfig& dataflow,
                           const QuantModel* model = nullptr, int default_weight_bits = 8,
                           int default_act_bits = 8);

}  // namespace hls4pc
