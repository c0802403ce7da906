#include "hls4pc/engine.hpp"

#include <algorithm>
#include <cmath>

namespace hls4pc {

namespace {

int argmax_lowest(const Eigen::VectorXd& v) {
    int best = 0;
    for (int i = 1; i < v.size(); ++i) {
        if (v(i) > v(best)) best = i;  // strict > keeps the lowest index on ties
    }
    return best;
}

FxpTensor reshape(FxpTensor t, std::vector<std::int64_t> dims) {
    std::int64_t n = 1;
    for (std::int64_t d : dims) n *= d;
    if (n != t.size()) throw Error(ErrorCategory::shape, "reshape size mismatch");
    t.dims = std::move(dims);
    return t;
}

FxpTensor gather_rows(const FxpTensor& t, const SampleSet& samples) {
    const std::int64_t cols = t.dim(1);
    FxpTensor out(t.format, {samples.size(), cols});
    for (std::int64_t i = 0; i < samples.size(); ++i) {
        const std::int64_t src = samples.indices[static_cast<std::size_t>(i)];
        std::copy_n(t.data.begin() + src * cols, cols, out.data.begin() + i * cols);
    }
    return out;
}

RealMatrix gather_rows(const RealMatrix& m, const SampleSet& samples) {
    RealMatrix out(samples.size(), m.cols());
    for (std::int64_t i = 0; i < samples.size(); ++i) {
        out.row(i) = m.row(samples.indices[static_cast<std::size_t>(i)]);
    }
    return out;
}

// Conv with trailing batch-norm emulated on the dequantized accumulator; the
// fused path never takes this branch.
FxpTensor conv_bn_forward(const QuantConvLayer& conv, const QuantBnParams& bn, const FxpTensor& input) {
    const ConvAccum accum = conv_accumulate(conv, input);
    FxpTensor out(conv.act_format, {accum.acc.rows(), static_cast<std::int64_t>(conv.c_out)});
    auto view = out.as_matrix(accum.acc.rows(), conv.c_out);
    for (std::int64_t o = 0; o < conv.c_out; ++o) {
        const double var = dequantize(bn.var.data[static_cast<std::size_t>(o)], bn.var.format);
        if (!(var > 0.0)) throw Error(ErrorCategory::config, "batchnorm var must be positive");
        const double scale =
            dequantize(bn.gamma.data[static_cast<std::size_t>(o)], bn.gamma.format) / std::sqrt(var);
        const double shift = dequantize(bn.beta.data[static_cast<std::size_t>(o)], bn.beta.format) -
                             dequantize(bn.mean.data[static_cast<std::size_t>(o)], bn.mean.format) * scale;
        for (std::int64_t p = 0; p < accum.acc.rows(); ++p) {
            const double real = std::ldexp(static_cast<double>(accum.acc(p, o)), -accum.frac_bits);
            view(p, o) = quantize_real(real * scale + shift, conv.act_format);
        }
    }
    return out;
}

RealMatrix truncated_xyz(const ModelTopology& topology, const PointCloud& cloud) {
    if (cloud.channels() < 3) throw Error(ErrorCategory::shape, "point cloud needs x,y,z channels");
    if (cloud.num_points() < topology.input_points) {
        throw Error(ErrorCategory::shape,
                    "cloud has " + std::to_string(cloud.num_points()) + " points, topology needs " +
                        std::to_string(topology.input_points));
    }
    if (cloud.num_points() > topology.input_points && !topology.truncate_input) {
        throw Error(ErrorCategory::shape, "cloud larger than input_points and truncation is disabled");
    }
    return cloud.data.topRows(topology.input_points).leftCols(3);
}

}  // namespace

NeighborTable knn_reference(const RealMatrix& positions, const SampleSet& samples, int k) {
    const std::int64_t n = positions.rows();
    if (k < 1 || k > n) throw Error(ErrorCategory::config, "k must lie in [1, N]");
    NeighborTable table;
    table.indices.resize(samples.size(), k);
    std::vector<std::pair<double, std::int64_t>> order(static_cast<std::size_t>(n));
    for (std::int64_t s = 0; s < samples.size(); ++s) {
        const std::int64_t anchor = samples.indices[static_cast<std::size_t>(s)];
        for (std::int64_t p = 0; p < n; ++p) {
            order[static_cast<std::size_t>(p)] = {(positions.row(anchor) - positions.row(p)).squaredNorm(), p};
        }
        std::sort(order.begin(), order.end());
        for (int j = 0; j < k; ++j) {
            table.indices(s, j) = static_cast<std::int32_t>(order[static_cast<std::size_t>(j)].second);
        }
    }
    return table;
}

Engine::Engine(QuantModel model, std::optional<std::uint32_t> seed_override)
    : model_(std::move(model)),
      lfsr_(model_.topology.sampler.lfsr_degree, model_.topology.sampler.lfsr_taps,
            seed_override.value_or(model_.topology.sampler.seed)),
      seed_(seed_override.value_or(model_.topology.sampler.seed)) {
    const std::vector<ConvSpec> specs = model_.topology.conv_layers();
    if (specs.size() != model_.layers.size()) {
        throw Error(ErrorCategory::config, "model layer count disagrees with topology");
    }
    for (std::size_t i = 0; i < specs.size(); ++i) {
        if (specs[i].name != model_.layers[i].name) {
            throw Error(ErrorCategory::config, "model layer order disagrees with topology");
        }
    }
    if (model_.grouped_formats.size() != model_.topology.stages.size() ||
        model_.affines.size() != model_.topology.stages.size()) {
        throw Error(ErrorCategory::config, "model per-stage metadata disagrees with topology");
    }
}

InferenceResult Engine::forward(const PointCloud& cloud) {
    const ModelTopology& topo = model_.topology;
    const std::vector<ConvSpec> specs = topo.conv_layers();

    RealMatrix positions_real = truncated_xyz(topo, cloud);
    FxpTensor positions = quantize_matrix(positions_real, model_.input_format);
    FxpTensor features = positions;

    InferenceResult result;
    result.seed = seed_;
    result.lfsr_degree = lfsr_.degree();
    result.lfsr_taps = lfsr_.taps();

    const FxpFormat dist_format =
        topo.knn.dist_format.value_or(default_dist_format(model_.input_format));

    std::size_t layer_idx = 0;
    for (std::size_t i = 0; i < topo.stages.size(); ++i) {
        const StageSpec& stage = topo.stages[i];
        const std::int64_t n = positions.dim(0);

        SampleSet samples;
        if (topo.sampler.type == SamplerType::urs) {
            samples = urs_sample(lfsr_, n, stage.num_samples);
        } else {
            samples = fps_sample(PointCloud{positions_real}, stage.num_samples, 0);
        }
        const NeighborTable table = knn(positions, samples, stage.k, topo.knn.pe_count, dist_format);

        const QuantAffine* affine = model_.affines[i] ? &*model_.affines[i] : nullptr;
        FxpTensor x = group_and_normalize(features, samples, table, affine, model_.grouped_formats[i],
                                          topo.concat_anchor);
        const std::int64_t grouped_c = x.dims.back();
        x = reshape(std::move(x), {static_cast<std::int64_t>(stage.num_samples) * stage.k, grouped_c});

        for (std::size_t j = 0; j < stage.pre_channels.size(); ++j, ++layer_idx) {
            const QuantLayer& layer = model_.layers[layer_idx];
            x = layer.bn ? conv_bn_forward(layer.conv, *layer.bn, x) : conv_forward(layer.conv, x);
            if (specs[layer_idx].has_relu) x = relu_forward(x, layer.conv.simd);
        }
        const std::int64_t pre_c = x.dims.back();
        x = reshape(std::move(x), {stage.num_samples, stage.k, pre_c});
        x = maxpool_group(x);
        for (std::size_t j = 0; j < stage.pos_channels.size(); ++j, ++layer_idx) {
            const QuantLayer& layer = model_.layers[layer_idx];
            x = layer.bn ? conv_bn_forward(layer.conv, *layer.bn, x) : conv_forward(layer.conv, x);
            if (specs[layer_idx].has_relu) x = relu_forward(x, layer.conv.simd);
        }

        positions = gather_rows(positions, samples);
        positions_real = gather_rows(positions_real, samples);
        features = std::move(x);

        result.stage_samples.push_back(stage.num_samples);
        result.stage_channels.push_back(static_cast<int>(features.dims.back()));
    }

    // Global max-pool over the remaining samples, then the classifier head.
    FxpTensor x = reshape(std::move(features),
                          {1, static_cast<std::int64_t>(result.stage_samples.back()),
                           static_cast<std::int64_t>(result.stage_channels.back())});
    x = maxpool_group(x);
    for (; layer_idx < model_.layers.size(); ++layer_idx) {
        const QuantLayer& layer = model_.layers[layer_idx];
        x = layer.bn ? conv_bn_forward(layer.conv, *layer.bn, x) : conv_forward(layer.conv, x);
        if (specs[layer_idx].has_relu) x = relu_forward(x, layer.conv.simd);
    }

    result.logits.resize(x.dims.back());
    for (std::int64_t c = 0; c < x.dims.back(); ++c) {
        result.logits(c) = dequantize(x.data[static_cast<std::size_t>(c)], x.format);
    }
    result.argmax = argmax_lowest(result.logits);
    return result;
}

InferenceResult forward_reference(const RealModel& model, const PointCloud& cloud, ReferenceTrace* trace,
                                  std::optional<std::uint32_t> seed_override) {
    const ModelTopology& topo = model.topology;
    const std::vector<ConvSpec> specs = topo.conv_layers();
    if (specs.size() != model.layers.size()) {
        throw Error(ErrorCategory::config, "model layer count disagrees with topology");
    }

    const std::uint32_t seed = seed_override.value_or(topo.sampler.seed);
    Lfsr lfsr(topo.sampler.lfsr_degree, topo.sampler.lfsr_taps, seed);

    RealMatrix positions = truncated_xyz(topo, cloud);
    RealMatrix features = positions;

    auto observe = [trace](const std::string& name, const RealMatrix& m) {
        if (!trace) return;
        const double value = m.size() == 0 ? 0.0 : m.cwiseAbs().maxCoeff();
        auto [it, inserted] = trace->max_abs.emplace(name, value);
        if (!inserted) it->second = std::max(it->second, value);
    };
    observe("input", positions);

    InferenceResult result;
    result.seed = seed;
    result.lfsr_degree = lfsr.degree();
    result.lfsr_taps = lfsr.taps();

    std::size_t layer_idx = 0;
    for (std::size_t i = 0; i < topo.stages.size(); ++i) {
        const StageSpec& stage = topo.stages[i];
        const std::int64_t n = positions.rows();

        SampleSet samples;
        if (topo.sampler.type == SamplerType::urs) {
            samples = urs_sample(lfsr, n, stage.num_samples);
        } else {
            samples = fps_sample(PointCloud{positions}, stage.num_samples, 0);
        }
        const NeighborTable table = knn_reference(positions, samples, stage.k);

        const GeometricAffine* affine = i < model.affines.size() ? &model.affines[i] : nullptr;
        RealMatrix x = group_and_normalize(features, samples, table, affine, topo.concat_anchor);
        observe("stage" + std::to_string(i) + ".grouped", x);

        for (std::size_t j = 0; j < stage.pre_channels.size(); ++j, ++layer_idx) {
            const RealLayer& layer = model.layers[layer_idx];
            x = conv_forward(layer.conv, x);
            if (layer.bn) x = batchnorm_forward(*layer.bn, x);
            if (specs[layer_idx].has_relu) x = relu_forward(x);
            observe(layer.name, x);
        }
        x = maxpool_group(x, stage.k);
        for (std::size_t j = 0; j < stage.pos_channels.size(); ++j, ++layer_idx) {
            const RealLayer& layer = model.layers[layer_idx];
            x = conv_forward(layer.conv, x);
            if (layer.bn) x = batchnorm_forward(*layer.bn, x);
            if (specs[layer_idx].has_relu) x = relu_forward(x);
            observe(layer.name, x);
        }

        positions = gather_rows(positions, samples);
        features = std::move(x);

        result.stage_samples.push_back(stage.num_samples);
        result.stage_channels.push_back(static_cast<int>(features.cols()));
    }

    RealMatrix x = maxpool_group(features, features.rows());
    for (; layer_idx < model.layers.size(); ++layer_idx) {
        const RealLayer& layer = model.layers[layer_idx];
        x = conv_forward(layer.conv, x);
        if (layer.bn) x = batchnorm_forward(*layer.bn, x);
        if (specs[layer_idx].has_relu) x = relu_forward(x);
        observe(layer.name, x);
    }

    result.logits = x.row(0).transpose();
    result.argmax = argmax_lowest(result.logits);
    return result;
}

}  // namespace hls4pc
