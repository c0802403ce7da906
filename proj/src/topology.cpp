#include "hls4pc/topology.hpp"

namespace hls4pc {

int ModelTopology::stage_input_channels(int stage) const {
    int feat = 3;
    for (int i = 0; i < stage; ++i) {
        const StageSpec& s = stages.at(static_cast<std::size_t>(i));
        if (!s.pos_channels.empty()) {
            feat = s.pos_channels.back();
        } else if (!s.pre_channels.empty()) {
            feat = s.pre_channels.back();
        }
    }
    return feat;
}

int ModelTopology::stage_input_points(int stage) const {
    return stage == 0 ? input_points : stages.at(static_cast<std::size_t>(stage - 1)).num_samples;
}

std::vector<ConvSpec> ModelTopology::conv_layers() const {
    std::vector<ConvSpec> out;
    int feat = 3;
    for (std::size_t i = 0; i < stages.size(); ++i) {
        const StageSpec& stage = stages[i];
        int c = (concat_anchor ? 2 : 1) * feat;
        const std::int64_t pre_positions =
            static_cast<std::int64_t>(stage.num_samples) * stage.k;
        for (std::size_t j = 0; j < stage.pre_channels.size(); ++j) {
            out.push_back({"stage" + std::to_string(i) + ".pre." + std::to_string(j), c,
                           stage.pre_channels[j], 1, pre_positions, true});
            c = stage.pre_channels[j];
        }
        for (std::size_t j = 0; j < stage.pos_channels.size(); ++j) {
            out.push_back({"stage" + std::to_string(i) + ".pos." + std::to_string(j), c,
                           stage.pos_channels[j], 1, stage.num_samples, true});
            c = stage.pos_channels[j];
        }
        feat = c;
    }
    int c = feat;
    for (std::size_t j = 0; j < classifier_channels.size(); ++j) {
        const bool last = j + 1 == classifier_channels.size();
        out.push_back({"classifier." + std::to_string(j), c, classifier_channels[j], 1, 1, !last});
        c = classifier_channels[j];
    }
    return out;
}

int ModelTopology::conv_count() const {
    int n = 0;
    for (const StageSpec& s : stages) {
        n += static_cast<int>(s.pre_channels.size() + s.pos_channels.size());
    }
    return n;
}

int ModelTopology::classifier_count() const { return static_cast<int>(classifier_channels.size()); }

void ModelTopology::validate() const {
    if (input_points < 1) throw Error(ErrorCategory::config, "input_points must be >= 1");
    if (stages.empty()) throw Error(ErrorCategory::config, "topology needs at least one stage");
    if (classifier_channels.empty()) {
        throw Error(ErrorCategory::config, "classifier_channels must not be empty");
    }
    int prev = input_points;
    for (std::size_t i = 0; i < stages.size(); ++i) {
        const StageSpec& s = stages[i];
        const std::string where = "stage " + std::to_string(i);
        if (s.num_samples < 1) throw Error(ErrorCategory::config, where + ": num_samples must be >= 1");
        if (s.num_samples > prev) {
            throw Error(ErrorCategory::config,
                        where + ": num_samples " + std::to_string(s.num_samples) +
                            " exceeds available points " + std::to_string(prev));
        }
        if (s.k < 1 || s.k > prev) {
            throw Error(ErrorCategory::config, where + ": k must lie in [1, " + std::to_string(prev) + "]");
        }
        if (s.pre_channels.empty()) {
            throw Error(ErrorCategory::config, where + ": pre_block_channels must not be empty");
        }
        for (int c : s.pre_channels) {
            if (c < 1) throw Error(ErrorCategory::config, where + ": non-positive pre channel");
        }
        for (int c : s.pos_channels) {
            if (c < 1) throw Error(ErrorCategory::config, where + ": non-positive pos channel");
        }
        prev = s.num_samples;
    }
    for (int c : classifier_channels) {
        if (c < 1) throw Error(ErrorCategory::config, "non-positive classifier channel");
    }
    if (sampler.lfsr_degree < 3 || sampler.lfsr_degree > 32) {
        throw Error(ErrorCategory::config, "lfsr_degree must lie in [3, 32]");
    }
    const std::uint64_t period = (std::uint64_t{1} << sampler.lfsr_degree) - 1;
    if (period < static_cast<std::uint64_t>(input_points)) {
        throw Error(ErrorCategory::config,
                    "LFSR period 2^" + std::to_string(sampler.lfsr_degree) +
                        "-1 cannot reach every index of " + std::to_string(input_points) + " points");
    }
    if (knn.pe_count < 1) throw Error(ErrorCategory::config, "knn pe_count must be >= 1");
    if (knn.dist_format) check_format(*knn.dist_format, true);
}

void validate_dataflow(const ModelTopology& topology, const DataflowConfig& dataflow) {
    for (const ConvSpec& conv : topology.conv_layers()) {
        const LayerDataflow df = dataflow.at(conv.name);
        if (df.pe < 1) {
            throw Error(ErrorCategory::config, conv.name + ": pe must be >= 1");
        }
        if (df.simd < 1 || conv.c_in % df.simd != 0) {
            throw Error(ErrorCategory::config,
                        conv.name + ": simd " + std::to_string(df.simd) + " does not divide C_in " +
                            std::to_string(conv.c_in));
        }
        if (df.weight_format) check_format(*df.weight_format, true);
        if (df.act_format) check_format(*df.act_format, true);
        // ReLU and pool units carry their own entries; validate divisibility on C_out.
        const LayerDataflow relu = dataflow.at(conv.name + ".relu");
        if (relu.simd < 1 || conv.c_out % relu.simd != 0) {
            throw Error(ErrorCategory::config,
                        conv.name + ".relu: simd " + std::to_string(relu.simd) +
                            " does not divide channels " + std::to_string(conv.c_out));
        }
    }
    for (std::size_t i = 0; i < topology.stages.size(); ++i) {
        const std::string name = "stage" + std::to_string(i) + ".pool";
        const LayerDataflow df = dataflow.at(name);
        const int channels = topology.stages[i].pre_channels.back();
        if (df.simd < 1 || channels % df.simd != 0) {
            throw Error(ErrorCategory::config, name + ": simd " + std::to_string(df.simd) +
                                                   " does not divide channels " + std::to_string(channels));
        }
    }
}

}  // namespace hls4pc
