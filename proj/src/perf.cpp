#include "hls4pc/perf.hpp"

#include <algorithm>

#include "hls4pc/neighbors.hpp"

namespace hls4pc {

namespace {

std::int64_t ceil_div(std::int64_t a, std::int64_t b) { return (a + b - 1) / b; }

}  // namespace

std::int64_t conv_cycles(std::int64_t positions, int c_out, int c_in, int kernel, int pe, int simd) {
    if (pe < 1 || simd < 1 || c_in % simd != 0) {
        throw Error(ErrorCategory::config, "conv_cycles: invalid pe/simd");
    }
    return ceil_div(positions * c_out, pe) * (static_cast<std::int64_t>(c_in) * kernel / simd);
}

std::int64_t relu_cycles(std::int64_t positions, int channels, int simd) {
    if (simd < 1 || channels % simd != 0) {
        throw Error(ErrorCategory::config, "relu_cycles: simd must divide channels");
    }
    return positions * (channels / simd);  // folding factor F = C/N_SIMD per position
}

std::int64_t maxpool_cycles(std::int64_t positions, int k, int channels, int simd) {
    if (simd < 1 || channels % simd != 0) {
        throw Error(ErrorCategory::config, "maxpool_cycles: simd must divide channels");
    }
    return positions * k * (channels / simd);
}

std::int64_t knn_cycles(int num_samples, std::int64_t num_points, int k, int pe_count) {
    if (pe_count < 1) throw Error(ErrorCategory::config, "knn_cycles: pe_count must be >= 1");
    const std::int64_t groups = ceil_div(num_samples, pe_count);
    return groups * num_points            // distance phase
           + groups * k * num_points;     // selection phase
}

std::int64_t urs_cycles(int num_samples, int overdraw_factor) {
    return static_cast<std::int64_t>(num_samples) * overdraw_factor;
}

PerfReport aggregate(std::vector<LayerCost> layers, double clock_hz, std::optional<double> power_watts) {
    if (clock_hz <= 0) throw Error(ErrorCategory::config, "clock frequency must be positive");
    PerfReport report;
    report.layers = std::move(layers);
    report.clock_hz = clock_hz;
    std::int64_t max_cycles = 1;
    for (const LayerCost& l : report.layers) {
        report.total_macs += l.macs;
        report.memory_bits += l.params_bits + l.buffer_bits;
        if (l.cycles > max_cycles || (l.cycles == max_cycles && report.bottleneck.empty())) {
            max_cycles = l.cycles;
            report.bottleneck = l.name;
        }
    }
    report.sps = clock_hz / static_cast<double>(max_cycles);
    report.gops = 2.0 * static_cast<double>(report.total_macs) * report.sps / 1e9;
    report.bram18k = ceil_div(report.memory_bits, 18 * 1024);
    if (power_watts) {
        if (*power_watts <= 0) throw Error(ErrorCategory::config, "power must be positive");
        report.gops_per_watt = report.gops / *power_watts;
    }
    return report;
}

namespace {

struct BitSource {
    const QuantModel* model;
    int weight_bits;
    int act_bits;

    int weights(const std::string& layer) const {
        if (!model) return weight_bits;
        for (const QuantLayer& l : model->layers) {
            if (l.name == layer) return l.conv.weight.format.total_bits;
        }
        return weight_bits;
    }
    int bias(const std::string& layer) const {
        if (!model) return weight_bits;
        for (const QuantLayer& l : model->layers) {
            if (l.name == layer) return l.conv.bias.format.total_bits;
        }
        return weight_bits;
    }
    int act(const std::string& layer) const {
        if (!model) return act_bits;
        for (const QuantLayer& l : model->layers) {
            if (l.name == layer) return l.conv.act_format.total_bits;
        }
        return act_bits;
    }
    // BN tensors present only in unfused models.
    std::int64_t bn_bits(const std::string& layer, int c_out) const {
        if (!model) return 0;
        for (const QuantLayer& l : model->layers) {
            if (l.name != layer || !l.bn) continue;
            return static_cast<std::int64_t>(c_out) *
                   (l.bn->gamma.format.total_bits + l.bn->beta.format.total_bits +
                    l.bn->mean.format.total_bits + l.bn->var.format.total_bits);
        }
        return 0;
    }
    int dist(const FxpFormat& fallback_act) const {
        if (model && model->topology.knn.dist_format) return model->topology.knn.dist_format->total_bits;
        if (model) return default_dist_format(model->input_format).total_bits;
        return default_dist_format(fallback_act).total_bits;
    }
    int input_act() const { return model ? model->input_format.total_bits : act_bits; }
};

std::vector<LayerCost> pipeline_costs(const ModelTopology& topology, const DataflowConfig& dataflow,
                                      const BitSource& bits) {
    validate_dataflow(topology, dataflow);
    std::vector<LayerCost> costs;
    const std::vector<ConvSpec> specs = topology.conv_layers();
    std::size_t layer_idx = 0;

    const FxpFormat fallback_act{bits.act_bits, bits.act_bits - 1, true};
    for (std::size_t i = 0; i < topology.stages.size(); ++i) {
        const StageSpec& stage = topology.stages[i];
        const std::string prefix = "stage" + std::to_string(i) + ".";
        const std::int64_t n = topology.stage_input_points(static_cast<int>(i));

        LayerCost urs;
        urs.name = prefix + "urs";
        urs.cycles = urs_cycles(stage.num_samples);
        urs.buffer_bits = static_cast<std::int64_t>(stage.num_samples) * 32;  // index buffer
        costs.push_back(urs);

        LayerCost knn;
        knn.name = prefix + "knn";
        knn.cycles = knn_cycles(stage.num_samples, n, stage.k, topology.knn.pe_count);
        knn.macs = static_cast<std::int64_t>(stage.num_samples) * n * 3;  // squared-distance MACs on x,y,z
        knn.buffer_bits = static_cast<std::int64_t>(stage.num_samples) * n * bits.dist(fallback_act);
        costs.push_back(knn);

        const std::size_t stage_convs = stage.pre_channels.size() + stage.pos_channels.size();
        for (std::size_t j = 0; j < stage_convs; ++j, ++layer_idx) {
            const ConvSpec& spec = specs[layer_idx];
            const LayerDataflow df = dataflow.at(spec.name);

            LayerCost conv;
            conv.name = spec.name;
            conv.cycles = conv_cycles(spec.positions, spec.c_out, spec.c_in, spec.kernel, df.pe, df.simd);
            conv.macs = spec.positions * spec.c_out * spec.c_in * spec.kernel;
            conv.params_bits =
                static_cast<std::int64_t>(spec.c_out) * spec.c_in * spec.kernel * bits.weights(spec.name) +
                static_cast<std::int64_t>(spec.c_out) * bits.bias(spec.name) +
                bits.bn_bits(spec.name, spec.c_out);
            conv.buffer_bits = spec.positions * spec.c_in * bits.act(spec.name);
            costs.push_back(conv);

            if (spec.has_relu) {
                const LayerDataflow relu_df = dataflow.at(spec.name + ".relu");
                LayerCost relu;
                relu.name = spec.name + ".relu";
                relu.cycles = relu_cycles(spec.positions, spec.c_out, relu_df.simd);
                relu.buffer_bits = spec.positions * spec.c_out * bits.act(spec.name);
                costs.push_back(relu);
            }

            if (j + 1 == stage.pre_channels.size()) {
                const int channels = stage.pre_channels.back();
                const LayerDataflow pool_df = dataflow.at(prefix + "pool");
                LayerCost pool;
                pool.name = prefix + "pool";
                pool.cycles = maxpool_cycles(stage.num_samples, stage.k, channels, pool_df.simd);
                pool.buffer_bits = static_cast<std::int64_t>(stage.num_samples) * stage.k * channels *
                                   bits.act(spec.name);
                costs.push_back(pool);
            }
        }
    }

    // Global pool feeding the classifier.
    {
        const StageSpec& last = topology.stages.back();
        const int channels = topology.stage_input_channels(static_cast<int>(topology.stages.size()));
        const LayerDataflow pool_df = dataflow.at("global.pool");
        LayerCost pool;
        pool.name = "global.pool";
        pool.cycles = maxpool_cycles(1, last.num_samples, channels, pool_df.simd);
        pool.buffer_bits = static_cast<std::int64_t>(last.num_samples) * channels *
                           (specs.empty() ? bits.act_bits : bits.act(specs[layer_idx - 1].name));
        costs.push_back(pool);
    }

    for (; layer_idx < specs.size(); ++layer_idx) {
        const ConvSpec& spec = specs[layer_idx];
        const LayerDataflow df = dataflow.at(spec.name);
        LayerCost fc;
        fc.name = spec.name;
        fc.cycles = conv_cycles(spec.positions, spec.c_out, spec.c_in, spec.kernel, df.pe, df.simd);
        fc.macs = spec.positions * spec.c_out * spec.c_in * spec.kernel;
        fc.params_bits =
            static_cast<std::int64_t>(spec.c_out) * spec.c_in * spec.kernel * bits.weights(spec.name) +
            static_cast<std::int64_t>(spec.c_out) * bits.bias(spec.name);
        fc.buffer_bits = spec.positions * spec.c_in * bits.act(spec.name);
        costs.push_back(fc);
        if (spec.has_relu) {
            const LayerDataflow relu_df = dataflow.at(spec.name + ".relu");
            LayerCost relu;
            relu.name = spec.name + ".relu";
            relu.cycles = relu_cycles(spec.positions, spec.c_out, relu_df.simd);
            relu.buffer_bits = spec.positions * spec.c_out * bits.act(spec.name);
            costs.push_back(relu);
        }
    }
    return costs;
}

}  // namespace

PerfReport estimate(const ModelTopology& topology, const DataflowConfig& dataflow, double clock_hz,
                    std::optional<double> power_watts, const QuantModel* model, int default_weight_bits,
                    int default_act_bits) {
    topology.validate();
    const BitSource bits{model, default_weight_bits, default_act_bits};
    return aggregate(pipeline_costs(topology, dataflow, bits), clock_hz, power_watts);
}

MemoryReport memory_report(const ModelTopology& topology, const DataflowConfig& dataflow,
                           const QuantModel* model, int default_weight_bits, int default_act_bits) {
    topology.validate();
    const BitSource bits{model, default_weight_bits, default_act_bits};
    MemoryReport report;
    report.layers = pipeline_costs(topology, dataflow, bits);
    for (const LayerCost& l : report.layers) {
        report.param_bits += l.params_bits;
        report.buffer_bits += l.buffer_bits;
    }
    report.total_bits = report.param_bits + report.buffer_bits;
    report.bram18k = (report.total_bits + 18 * 1024 - 1) / (18 * 1024);

    // Savings from folding BN away: counted for every stage conv that carries
    // no BN tensors (classifier layers never have BN in this artifact).
    const std::vector<ConvSpec> specs = topology.conv_layers();
    const int stage_convs = topology.conv_count();
    for (int i = 0; i < stage_convs; ++i) {
        const ConvSpec& spec = specs[static_cast<std::size_t>(i)];
        const bool has_bn = model && bits.bn_bits(spec.name, spec.c_out) > 0;
        if (!has_bn) {
            report.fusion_savings_bits +=
                4LL * spec.c_out * bits.weights(spec.name);
        }
    }
    return report;
}

}  // namespace hls4pc
