#include "hls4pc/compress.hpp"

#include <cmath>

#include "hls4pc/engine.hpp"
#include "hls4pc/prng.hpp"

namespace hls4pc {

const RealLayer& RealModel::at(const std::string& name) const {
    for (const RealLayer& l : layers) {
        if (l.name == name) return l;
    }
    throw Error(ErrorCategory::config, "model has no layer '" + name + "'");
}

RealConvLayer fuse_batchnorm(const RealConvLayer& conv, const BatchNormParams& bn) {
    if (bn.channels() != conv.c_out) throw Error(ErrorCategory::shape, "batchnorm channel mismatch");
    RealConvLayer fused = conv;
    for (int o = 0; o < conv.c_out; ++o) {
        const double denom_sq = bn.running_var(o) + bn.epsilon;
        if (!(denom_sq > 0.0)) throw Error(ErrorCategory::config, "batchnorm var + eps must be positive");
        const double scale = bn.gamma(o) / std::sqrt(denom_sq);
        fused.weight.row(o) *= scale;
        fused.bias(o) = (conv.bias(o) - bn.running_mean(o)) * scale + bn.beta(o);
    }
    return fused;
}

RealModel fuse_model(const RealModel& model, std::vector<FusionRecord>* records) {
    RealModel fused = model;
    for (RealLayer& layer : fused.layers) {
        if (!layer.bn) continue;
        RealConvLayer folded = fuse_batchnorm(layer.conv, *layer.bn);
        if (records) records->push_back({layer.name, layer.conv, *layer.bn, folded});
        layer.conv = std::move(folded);
        layer.bn.reset();
    }
    return fused;
}

double CalibrationStats::at(const std::string& name) const {
    auto it = max_abs.find(name);
    if (it == max_abs.end()) {
        throw Error(ErrorCategory::config, "no calibration stat for tensor '" + name + "'");
    }
    return it->second;
}

void CalibrationStats::merge(const std::map<std::string, double>& observed) {
    for (const auto& [name, value] : observed) {
        auto [it, inserted] = max_abs.emplace(name, value);
        if (!inserted) it->second = std::max(it->second, value);
    }
}

CalibrationStats calibrate(const RealModel& model, const std::vector<PointCloud>& clouds) {
    if (clouds.empty()) throw Error(ErrorCategory::config, "calibration set must not be empty");
    CalibrationStats stats;
    for (const PointCloud& cloud : clouds) {
        ReferenceTrace trace;
        forward_reference(model, cloud, &trace);
        stats.merge(trace.max_abs);
    }
    return stats;
}

FxpFormat choose_format(double max_abs, int total_bits) {
    if (max_abs < 0 || !std::isfinite(max_abs)) {
        throw Error(ErrorCategory::config, "max_abs must be finite and non-negative");
    }
    FxpFormat fmt{total_bits, total_bits - 1, true};
    check_format(fmt, true);
    if (max_abs == 0.0) return fmt;
    const double limit = static_cast<double>(fmt.raw_max());
    for (int frac = total_bits - 1; frac >= 0; --frac) {
        if (max_abs <= std::ldexp(limit, -frac)) {
            fmt.frac_bits = frac;
            return fmt;
        }
    }
    fmt.frac_bits = 0;  // range exceeded even at frac 0; saturation will absorb
    return fmt;
}

namespace {

double tensor_max_abs(const RealMatrix& m) { return m.size() == 0 ? 0.0 : m.cwiseAbs().maxCoeff(); }
double tensor_max_abs(const RealVector& v) { return v.size() == 0 ? 0.0 : v.cwiseAbs().maxCoeff(); }

FxpTensor quantize_vector(const RealVector& values, const FxpFormat& fmt) {
    FxpTensor t(fmt, {values.size()});
    for (Eigen::Index i = 0; i < values.size(); ++i) {
        t.data[static_cast<std::size_t>(i)] = quantize_real(values(i), fmt);
    }
    return t;
}

RealVector dequantize_vector(const FxpTensor& t) {
    RealVector v(t.size());
    for (std::int64_t i = 0; i < t.size(); ++i) {
        v(i) = dequantize(t.data[static_cast<std::size_t>(i)], t.format);
    }
    return v;
}

// Weight tensors with dims {C_out, C_in, K} from the C_out x (C_in*K) matrix
// layout used by the real path (kernel tap fastest in both).
FxpTensor quantize_weight(const RealConvLayer& conv, const FxpFormat& fmt) {
    FxpTensor t(fmt, {conv.c_out, conv.c_in, conv.kernel});
    for (std::int64_t i = 0; i < t.size(); ++i) {
        t.data[static_cast<std::size_t>(i)] =
            quantize_real(conv.weight(i / conv.weight.cols(), i % conv.weight.cols()), fmt);
    }
    return t;
}

}  // namespace

QuantModel quantize_model(const RealModel& model, int weight_bits, int act_bits,
                          const CalibrationStats& stats, const DataflowConfig* overrides) {
    if (weight_bits < 2 || weight_bits > 32 || act_bits < 2 || act_bits > 32) {
        throw Error(ErrorCategory::config, "bit widths must lie in [2, 32]");
    }
    QuantModel q;
    q.topology = model.topology;
    q.input_format = choose_format(stats.at("input"), act_bits);
    for (std::size_t i = 0; i < model.topology.stages.size(); ++i) {
        q.grouped_formats.push_back(
            choose_format(stats.at("stage" + std::to_string(i) + ".grouped"), act_bits));
    }
    for (const RealLayer& layer : model.layers) {
        QuantLayer ql;
        ql.name = layer.name;
        ql.conv.c_in = layer.conv.c_in;
        ql.conv.c_out = layer.conv.c_out;
        ql.conv.kernel = layer.conv.kernel;

        FxpFormat wfmt = choose_format(tensor_max_abs(layer.conv.weight), weight_bits);
        FxpFormat bfmt = choose_format(tensor_max_abs(layer.conv.bias), weight_bits);
        FxpFormat afmt = choose_format(stats.at(layer.name), act_bits);
        if (overrides) {
            const LayerDataflow df = overrides->at(layer.name);
            if (df.weight_format) wfmt = *df.weight_format;
            if (df.act_format) afmt = *df.act_format;
            ql.conv.pe = df.pe;
            ql.conv.simd = df.simd;
        }
        ql.conv.weight = quantize_weight(layer.conv, wfmt);
        ql.conv.bias = quantize_vector(layer.conv.bias, bfmt);
        ql.conv.act_format = afmt;

        if (layer.bn) {
            // Epsilon folds into var so the archive carries exactly four BN tensors.
            RealVector var_eff = layer.bn->running_var.array() + layer.bn->epsilon;
            QuantBnParams bn;
            bn.gamma = quantize_vector(layer.bn->gamma, choose_format(tensor_max_abs(layer.bn->gamma), weight_bits));
            bn.beta = quantize_vector(layer.bn->beta, choose_format(tensor_max_abs(layer.bn->beta), weight_bits));
            bn.mean = quantize_vector(layer.bn->running_mean,
                                      choose_format(tensor_max_abs(layer.bn->running_mean), weight_bits));
            bn.var = quantize_vector(var_eff, choose_format(tensor_max_abs(var_eff), weight_bits));
            ql.bn = std::move(bn);
        }
        q.layers.push_back(std::move(ql));
    }
    for (std::size_t i = 0; i < model.affines.size(); ++i) {
        const GeometricAffine& aff = model.affines[i];
        if (!aff.enabled) {
            q.affines.emplace_back();
            continue;
        }
        QuantAffine qa;
        qa.alpha = quantize_vector(aff.alpha, choose_format(tensor_max_abs(aff.alpha), weight_bits));
        qa.beta = quantize_vector(aff.beta, choose_format(tensor_max_abs(aff.beta), weight_bits));
        q.affines.emplace_back(std::move(qa));
    }
    return q;
}

namespace {

// Zero-element tensor whose header carries an activation format.
FxpTensor format_carrier(const FxpFormat& fmt) { return FxpTensor(fmt, {0}); }

}  // namespace

WeightArchive to_archive(const QuantModel& model) {
    WeightArchive archive;
    archive.add("input.act", format_carrier(model.input_format));
    for (std::size_t i = 0; i < model.grouped_formats.size(); ++i) {
        archive.add("stage" + std::to_string(i) + ".grouped.act", format_carrier(model.grouped_formats[i]));
    }
    for (const QuantLayer& layer : model.layers) {
        archive.add(layer.name + ".weight", layer.conv.weight);
        archive.add(layer.name + ".bias", layer.conv.bias);
        archive.add(layer.name + ".act", format_carrier(layer.conv.act_format));
        if (layer.bn) {
            archive.add(layer.name + ".bn.gamma", layer.bn->gamma);
            archive.add(layer.name + ".bn.beta", layer.bn->beta);
            archive.add(layer.name + ".bn.mean", layer.bn->mean);
            archive.add(layer.name + ".bn.var", layer.bn->var);
        }
    }
    for (std::size_t i = 0; i < model.affines.size(); ++i) {
        if (!model.affines[i]) continue;
        archive.add("stage" + std::to_string(i) + ".affine.alpha", model.affines[i]->alpha);
        archive.add("stage" + std::to_string(i) + ".affine.beta", model.affines[i]->beta);
    }
    return archive;
}

QuantModel quant_model_from_archive(const ModelTopology& topology, const WeightArchive& archive) {
    QuantModel model;
    model.topology = topology;
    const NamedTensor* input_act = archive.find("input.act");
    if (!input_act) {
        throw Error(ErrorCategory::config,
                    "archive lacks activation formats; quantize the model before inference");
    }
    model.input_format = input_act->tensor.format;
    for (std::size_t i = 0; i < topology.stages.size(); ++i) {
        model.grouped_formats.push_back(archive.at("stage" + std::to_string(i) + ".grouped.act").format);
    }
    for (const ConvSpec& spec : topology.conv_layers()) {
        QuantLayer layer;
        layer.name = spec.name;
        layer.conv.c_in = spec.c_in;
        layer.conv.c_out = spec.c_out;
        layer.conv.kernel = spec.kernel;
        layer.conv.weight = archive.at(spec.name + ".weight");
        layer.conv.bias = archive.at(spec.name + ".bias");
        layer.conv.act_format = archive.at(spec.name + ".act").format;
        if (layer.conv.weight.dims != std::vector<std::int64_t>{spec.c_out, spec.c_in, spec.kernel}) {
            throw Error(ErrorCategory::shape, spec.name + ".weight dims disagree with topology");
        }
        if (layer.conv.bias.dims != std::vector<std::int64_t>{spec.c_out}) {
            throw Error(ErrorCategory::shape, spec.name + ".bias dims disagree with topology");
        }
        if (archive.contains(spec.name + ".bn.gamma")) {
            QuantBnParams bn;
            bn.gamma = archive.at(spec.name + ".bn.gamma");
            bn.beta = archive.at(spec.name + ".bn.beta");
            bn.mean = archive.at(spec.name + ".bn.mean");
            bn.var = archive.at(spec.name + ".bn.var");
            layer.bn = std::move(bn);
        }
        model.layers.push_back(std::move(layer));
    }
    for (std::size_t i = 0; i < topology.stages.size(); ++i) {
        const std::string base = "stage" + std::to_string(i) + ".affine.";
        if (archive.contains(base + "alpha")) {
            QuantAffine qa;
            qa.alpha = archive.at(base + "alpha");
            qa.beta = archive.at(base + "beta");
            model.affines.emplace_back(std::move(qa));
        } else {
            model.affines.emplace_back();
        }
    }
    return model;
}

WeightArchive to_real_archive(const RealModel& model) {
    WeightArchive archive;
    auto add_matrix = [&archive](const std::string& name, const RealMatrix& values,
                                 std::vector<std::int64_t> dims) {
        FxpFormat fmt = choose_format(tensor_max_abs(values), 32);
        FxpTensor t(fmt, std::move(dims));
        for (std::int64_t i = 0; i < t.size(); ++i) {
            t.data[static_cast<std::size_t>(i)] =
                quantize_real(values(i / values.cols(), i % values.cols()), fmt);
        }
        archive.add(name, std::move(t));
    };
    auto add_vector = [&archive](const std::string& name, const RealVector& values) {
        FxpFormat fmt = choose_format(tensor_max_abs(values), 32);
        archive.add(name, quantize_vector(values, fmt));
    };
    for (const RealLayer& layer : model.layers) {
        add_matrix(layer.name + ".weight", layer.conv.weight,
                   {layer.conv.c_out, layer.conv.c_in, layer.conv.kernel});
        add_vector(layer.name + ".bias", layer.conv.bias);
        if (layer.bn) {
            RealVector var_eff = layer.bn->running_var.array() + layer.bn->epsilon;
            add_vector(layer.name + ".bn.gamma", layer.bn->gamma);
            add_vector(layer.name + ".bn.beta", layer.bn->beta);
            add_vector(layer.name + ".bn.mean", layer.bn->running_mean);
            add_vector(layer.name + ".bn.var", var_eff);
        }
    }
    for (std::size_t i = 0; i < model.affines.size(); ++i) {
        if (!model.affines[i].enabled) continue;
        add_vector("stage" + std::to_string(i) + ".affine.alpha", model.affines[i].alpha);
        add_vector("stage" + std::to_string(i) + ".affine.beta", model.affines[i].beta);
    }
    return archive;
}

RealModel real_model_from_archive(const ModelTopology& topology, const WeightArchive& archive) {
    RealModel model;
    model.topology = topology;
    for (const ConvSpec& spec : topology.conv_layers()) {
        RealLayer layer;
        layer.name = spec.name;
        layer.conv.c_in = spec.c_in;
        layer.conv.c_out = spec.c_out;
        layer.conv.kernel = spec.kernel;
        const FxpTensor& w = archive.at(spec.name + ".weight");
        if (w.dims != std::vector<std::int64_t>{spec.c_out, spec.c_in, spec.kernel}) {
            throw Error(ErrorCategory::shape, spec.name + ".weight dims disagree with topology");
        }
        layer.conv.weight = dequantize_matrix(w, spec.c_out, static_cast<std::int64_t>(spec.c_in) * spec.kernel);
        layer.conv.bias = dequantize_vector(archive.at(spec.name + ".bias"));
        if (archive.contains(spec.name + ".bn.gamma")) {
            BatchNormParams bn;
            bn.gamma = dequantize_vector(archive.at(spec.name + ".bn.gamma"));
            bn.beta = dequantize_vector(archive.at(spec.name + ".bn.beta"));
            bn.running_mean = dequantize_vector(archive.at(spec.name + ".bn.mean"));
            bn.running_var = dequantize_vector(archive.at(spec.name + ".bn.var"));
            bn.epsilon = 0.0;  // folded into var at export
            layer.bn = std::move(bn);
        }
        model.layers.push_back(std::move(layer));
    }
    for (std::size_t i = 0; i < topology.stages.size(); ++i) {
        const std::string base = "stage" + std::to_string(i) + ".affine.";
        GeometricAffine aff;
        if (archive.contains(base + "alpha")) {
            aff.alpha = dequantize_vector(archive.at(base + "alpha"));
            aff.beta = dequantize_vector(archive.at(base + "beta"));
            aff.enabled = true;
        }
        model.affines.push_back(std::move(aff));
    }
    return model;
}

RealModel random_real_model(const ModelTopology& topology, std::uint64_t seed, bool unit_scale) {
    topology.validate();
    SplitMix64 rng(seed);
    RealModel model;
    model.topology = topology;
    for (const ConvSpec& spec : topology.conv_layers()) {
        RealLayer layer;
        layer.name = spec.name;
        layer.conv.c_in = spec.c_in;
        layer.conv.c_out = spec.c_out;
        layer.conv.kernel = spec.kernel;
        const double bound = std::sqrt(6.0 / (static_cast<double>(spec.c_in) * spec.kernel));
        layer.conv.weight.resize(spec.c_out, static_cast<std::int64_t>(spec.c_in) * spec.kernel);
        for (std::int64_t i = 0; i < layer.conv.weight.size(); ++i) {
            layer.conv.weight(i / layer.conv.weight.cols(), i % layer.conv.weight.cols()) =
                rng.uniform(-bound, bound);
        }
        layer.conv.bias.resize(spec.c_out);
        for (int o = 0; o < spec.c_out; ++o) layer.conv.bias(o) = rng.uniform(-0.05, 0.05);

        const bool classifier = spec.name.starts_with("classifier.");
        if (!classifier) {
            BatchNormParams bn;
            bn.gamma.resize(spec.c_out);
            bn.beta.resize(spec.c_out);
            bn.running_mean.resize(spec.c_out);
            bn.running_var.resize(spec.c_out);
            bn.epsilon = 1e-5;
            for (int o = 0; o < spec.c_out; ++o) {
                if (unit_scale) {
                    bn.gamma(o) = rng.uniform(0.9, 1.1);
                    bn.beta(o) = rng.uniform(-0.05, 0.05);
                    bn.running_mean(o) = rng.uniform(-0.05, 0.05);
                    bn.running_var(o) = rng.uniform(0.9, 1.1);
                } else {
                    bn.gamma(o) = rng.uniform(0.5, 1.5);
                    bn.beta(o) = rng.uniform(-0.2, 0.2);
                    bn.running_mean(o) = rng.uniform(-0.2, 0.2);
                    bn.running_var(o) = rng.uniform(0.25, 1.0);
                }
            }
            layer.bn = std::move(bn);
        }
        model.layers.push_back(std::move(layer));
    }
    for (std::size_t i = 0; i < topology.stages.size(); ++i) {
        GeometricAffine aff;
        if (topology.geometric_affine) {
            const int c = topology.stage_input_channels(static_cast<int>(i));
            aff.alpha.resize(c);
            aff.beta.resize(c);
            for (int ch = 0; ch < c; ++ch) {
                aff.alpha(ch) = rng.uniform(0.8, 1.2);
                aff.beta(ch) = rng.uniform(-0.1, 0.1);
            }
            aff.enabled = true;
        }
        model.affines.push_back(std::move(aff));
    }
    return model;
}

}  // namespace hls4pc
