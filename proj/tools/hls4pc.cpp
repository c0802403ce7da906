#include <chrono>
#include <fstream>
#include <iostream>
#include <nlohmann/json.hpp>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "hls4pc/compress.hpp"
#include "hls4pc/engine.hpp"
#include "hls4pc/perf.hpp"
#include "hls4pc/sampling.hpp"

namespace {

using json = nlohmann::json;
using namespace hls4pc;

std::string hex(std::uint32_t v) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "0x%X", v);
    return buf;
}

void emit(const std::string& out_path, const std::string& content) {
    if (out_path.empty() || out_path == "-") {
        std::cout << content;
        if (!content.empty() && content.back() != '\n') std::cout << '\n';
        return;
    }
    std::ofstream out(out_path, std::ios::binary);
    if (!out) throw Error(ErrorCategory::io, "cannot open " + out_path + " for writing");
    out << content;
    if (!out) throw Error(ErrorCategory::io, "write failed: " + out_path);
}

json sampler_echo(const SamplerSpec& sampler, std::uint32_t seed_used) {
    const std::uint32_t taps =
        sampler.lfsr_taps ? sampler.lfsr_taps : Lfsr::default_taps(sampler.lfsr_degree);
    return {{"type", sampler.type == SamplerType::urs ? "urs" : "fps"},
            {"seed", seed_used},
            {"lfsr_degree", sampler.lfsr_degree},
            {"lfsr_taps", hex(taps)}};
}

// Real model from an archive, or generated deterministically when no archive
// is given (training is out of scope; init_seed makes desk runs reproducible).
RealModel load_or_init_real_model(const ModelTopology& topology, const std::string& weights_path,
                                  std::uint64_t init_seed) {
    if (!weights_path.empty()) {
        return real_model_from_archive(topology, read_weights_file(weights_path));
    }
    return random_real_model(topology, init_seed);
}

json size_report(const WeightArchive& archive, int wbits, int abits) {
    json tensors = json::array();
    std::int64_t elements = 0;
    for (const NamedTensor& t : archive.tensors) {
        tensors.push_back({{"name", t.name},
                           {"format", t.tensor.format.str()},
                           {"elements", t.tensor.size()},
                           {"bits", t.tensor.size() * t.tensor.format.total_bits}});
        elements += t.tensor.size();
    }
    const std::int64_t payload = archive.payload_bits();
    const std::int64_t baseline = elements * 32;
    json report;
    report["weight_bits"] = wbits;
    report["act_bits"] = abits;
    report["tensors"] = tensors;
    report["payload_bits"] = payload;
    report["payload_bytes"] = (payload + 7) / 8;
    report["baseline_32bit_bits"] = baseline;
    report["size_ratio_vs_32bit"] =
        payload == 0 ? 0.0 : static_cast<double>(baseline) / static_cast<double>(payload);
    return report;
}

json perf_to_json(const PerfReport& report, const ModelConfig& cfg) {
    json layers = json::array();
    for (const LayerCost& l : report.layers) {
        layers.push_back({{"name", l.name},
                          {"macs", l.macs},
                          {"cycles", l.cycles},
                          {"params_bits", l.params_bits},
                          {"buffer_bits", l.buffer_bits}});
    }
    json j;
    j["clock_hz"] = report.clock_hz;
    j["bottleneck"] = report.bottleneck;
    j["sps"] = report.sps;
    j["gops"] = report.gops;
    j["total_macs"] = report.total_macs;
    j["memory_bits"] = report.memory_bits;
    j["bram18k"] = report.bram18k;
    if (report.gops_per_watt) j["gops_per_watt"] = *report.gops_per_watt;
    j["layers"] = layers;
    j["sampler"] = sampler_echo(cfg.topology.sampler, cfg.topology.sampler.seed);
    return j;
}

std::string perf_to_csv(const PerfReport& report) {
    std::ostringstream out;
    out << "name,macs,cycles,params_bits,buffer_bits\n";
    for (const LayerCost& l : report.layers) {
        out << l.name << ',' << l.macs << ',' << l.cycles << ',' << l.params_bits << ','
            << l.buffer_bits << '\n';
    }
    return out.str();
}

json infer_to_json(const InferenceResult& result, const ModelConfig& cfg) {
    json j;
    j["logits"] = std::vector<double>(result.logits.data(), result.logits.data() + result.logits.size());
    j["argmax"] = result.argmax;
    j["num_classes"] = static_cast<int>(result.logits.size());
    j["stage_samples"] = result.stage_samples;
    j["stage_channels"] = result.stage_channels;
    SamplerSpec echo = cfg.topology.sampler;
    j["sampler"] = sampler_echo(echo, result.seed);
    return j;
}

int run(int argc, char** argv) {
    CLI::App app{"Bit-accurate functional simulator and performance estimator for "
                 "streaming point-cloud accelerators"};
    app.require_subcommand(1);

    std::string model_path, weights_path, input_path, out_path, report_path;
    std::string format = "json";
    std::uint32_t seed = 0;
    bool seed_given = false;
    std::uint64_t init_seed = 1;
    int wbits = 8, abits = 8;
    double clock_mhz = 100.0;
    std::optional<double> power_watts;
    int num_samples = 0;
    int runs = 10;

    auto add_model = [&](CLI::App* cmd) {
        cmd->add_option("--model", model_path, "Model configuration JSON")->required();
    };
    auto add_seed = [&](CLI::App* cmd) {
        cmd->add_option("--seed", seed, "Sampler seed override")->each([&](const std::string&) {
            seed_given = true;
        });
    };
    auto add_out = [&](CLI::App* cmd) { cmd->add_option("--out", out_path, "Output path (default stdout)"); };

    CLI::App* c_sample = app.add_subcommand("sample", "Run the stage-0 sampler, emit index CSV");
    add_model(c_sample);
    c_sample->add_option("--input", input_path, "Point cloud (.off or whitespace xyz)")->required();
    add_seed(c_sample);
    c_sample->add_option("--num-samples", num_samples, "Override stage-0 sample count");
    add_out(c_sample);

    CLI::App* c_knn = app.add_subcommand("knn", "Stage-0 sample + k-NN, emit neighbor-table CSV");
    add_model(c_knn);
    c_knn->add_option("--input", input_path)->required();
    add_seed(c_knn);
    c_knn->add_option("--abits", abits, "Coordinate quantization width (default 16)");
    add_out(c_knn);

    CLI::App* c_fuse = app.add_subcommand("fuse", "Fold batch-norm into convolutions (real arithmetic)");
    add_model(c_fuse);
    c_fuse->add_option("--weights", weights_path, "Real weight archive (generated when omitted)");
    c_fuse->add_option("--init-seed", init_seed, "Seed for generated weights");
    c_fuse->add_option("--out", out_path, "Fused archive path")->required();

    CLI::App* c_quant = app.add_subcommand("quantize", "Calibrate and quantize, emit weight archive");
    add_model(c_quant);
    c_quant->add_option("--weights", weights_path, "Real weight archive (generated when omitted)");
    c_quant->add_option("--init-seed", init_seed, "Seed for generated weights");
    std::vector<std::string> calib_paths;
    c_quant->add_option("--input", calib_paths, "Calibration cloud(s)")->required()->expected(-1);
    c_quant->add_option("--wbits", wbits, "Weight bits (default 8)");
    c_quant->add_option("--abits", abits, "Activation bits (default 8)");
    c_quant->add_option("--out", out_path, "Quantized archive path")->required();
    c_quant->add_option("--report", report_path, "Size report JSON path (default stdout)");

    CLI::App* c_infer = app.add_subcommand("infer", "Fixed-point forward pass, emit logits JSON");
    add_model(c_infer);
    c_infer->add_option("--weights", weights_path, "Quantized weight archive")->required();
    c_infer->add_option("--input", input_path)->required();
    add_seed(c_infer);
    add_out(c_infer);

    CLI::App* c_est = app.add_subcommand("estimate", "Analytical throughput/memory estimate");
    add_model(c_est);
    c_est->add_option("--weights", weights_path, "Quantized archive for exact bit widths");
    c_est->add_option("--clock-mhz", clock_mhz, "Clock (default 100 MHz)");
    double power_opt = 0;
    c_est->add_option("--power-watts", power_opt, "Measured board power")->each([&](const std::string&) {
        power_watts = power_opt;
    });
    c_est->add_option("--wbits", wbits, "Assumed weight bits without --weights");
    c_est->add_option("--abits", abits, "Assumed activation bits without --weights");
    c_est->add_option("--format", format, "json or csv")->check(CLI::IsMember({"json", "csv"}));
    add_out(c_est);

    CLI::App* c_bench = app.add_subcommand("bench", "Repeated host inference with wall-time stats");
    add_model(c_bench);
    c_bench->add_option("--weights", weights_path)->required();
    c_bench->add_option("--input", input_path)->required();
    add_seed(c_bench);
    c_bench->add_option("--runs", runs, "Repetitions (default 10)");
    add_out(c_bench);

    CLI11_PARSE(app, argc, argv);

    if (c_sample->parsed()) {
        const ModelConfig cfg = load_model_config_file(model_path);
        const PointCloud cloud = load_cloud(input_path);
        const ModelTopology& topo = cfg.topology;
        const int want = num_samples > 0 ? num_samples : topo.stages.front().num_samples;
        const std::uint32_t used_seed = seed_given ? seed : topo.sampler.seed;
        if (cloud.num_points() < topo.input_points) {
            throw Error(ErrorCategory::shape, "cloud smaller than input_points");
        }
        SampleSet samples;
        if (topo.sampler.type == SamplerType::urs) {
            Lfsr lfsr(topo.sampler.lfsr_degree, topo.sampler.lfsr_taps, used_seed);
            samples = urs_sample(lfsr, topo.input_points, want);
        } else {
            PointCloud head{cloud.data.topRows(topo.input_points)};
            samples = fps_sample(head, want, 0);
        }
        std::ostringstream out;
        out << "# seed=" << used_seed << " lfsr_degree=" << topo.sampler.lfsr_degree << " lfsr_taps="
            << hex(topo.sampler.lfsr_taps ? topo.sampler.lfsr_taps
                                          : Lfsr::default_taps(topo.sampler.lfsr_degree))
            << "\n";
        for (std::int32_t idx : samples.indices) out << idx << "\n";
        emit(out_path, out.str());
        return 0;
    }

    if (c_knn->parsed()) {
        const ModelConfig cfg = load_model_config_file(model_path);
        const PointCloud cloud = load_cloud(input_path);
        const ModelTopology& topo = cfg.topology;
        const std::uint32_t used_seed = seed_given ? seed : topo.sampler.seed;
        if (cloud.num_points() < topo.input_points) {
            throw Error(ErrorCategory::shape, "cloud smaller than input_points");
        }
        const RealMatrix xyz = cloud.data.topRows(topo.input_points).leftCols(3);
        const FxpFormat coord_fmt = choose_format(xyz.cwiseAbs().maxCoeff(), abits);
        const FxpTensor positions = quantize_matrix(xyz, coord_fmt);
        SampleSet samples;
        if (topo.sampler.type == SamplerType::urs) {
            Lfsr lfsr(topo.sampler.lfsr_degree, topo.sampler.lfsr_taps, used_seed);
            samples = urs_sample(lfsr, topo.input_points, topo.stages.front().num_samples);
        } else {
            PointCloud head{xyz};
            samples = fps_sample(head, topo.stages.front().num_samples, 0);
        }
        const FxpFormat dist_fmt = topo.knn.dist_format.value_or(default_dist_format(coord_fmt));
        const NeighborTable table =
            knn(positions, samples, topo.stages.front().k, topo.knn.pe_count, dist_fmt);
        std::ostringstream out;
        out << "# seed=" << used_seed << " coord_format=" << coord_fmt.str()
            << " dist_format=" << dist_fmt.str() << "\n";
        for (std::int64_t s = 0; s < table.rows(); ++s) {
            for (std::int64_t j = 0; j < table.k(); ++j) {
                out << table.indices(s, j) << (j + 1 == table.k() ? '\n' : ',');
            }
        }
        emit(out_path, out.str());
        return 0;
    }

    if (c_fuse->parsed()) {
        const ModelConfig cfg = load_model_config_file(model_path);
        const RealModel model = load_or_init_real_model(cfg.topology, weights_path, init_seed);
        std::vector<FusionRecord> records;
        const RealModel fused = fuse_model(model, &records);
        write_weights_file(out_path, to_real_archive(fused));
        json j;
        j["fused_layers"] = records.size();
        j["out"] = out_path;
        if (weights_path.empty()) j["init_seed"] = init_seed;
        j["sampler"] = sampler_echo(cfg.topology.sampler, cfg.topology.sampler.seed);
        std::cout << j.dump(2) << "\n";
        return 0;
    }

    if (c_quant->parsed()) {
        const ModelConfig cfg = load_model_config_file(model_path);
        const RealModel model = load_or_init_real_model(cfg.topology, weights_path, init_seed);
        std::vector<PointCloud> clouds;
        clouds.reserve(calib_paths.size());
        for (const std::string& p : calib_paths) clouds.push_back(load_cloud(p));
        const CalibrationStats stats = calibrate(model, clouds);
        const QuantModel quant = quantize_model(model, wbits, abits, stats, &cfg.dataflow);
        const WeightArchive archive = to_archive(quant);
        write_weights_file(out_path, archive);
        json report = size_report(archive, wbits, abits);
        report["out"] = out_path;
        if (weights_path.empty()) report["init_seed"] = init_seed;
        report["sampler"] = sampler_echo(cfg.topology.sampler, cfg.topology.sampler.seed);
        emit(report_path, report.dump(2));
        return 0;
    }

    if (c_infer->parsed()) {
        const ModelConfig cfg = load_model_config_file(model_path);
        const QuantModel quant = quant_model_from_archive(cfg.topology, read_weights_file(weights_path));
        const PointCloud cloud = load_cloud(input_path);
        Engine engine(quant, seed_given ? std::optional<std::uint32_t>(seed) : std::nullopt);
        const InferenceResult result = engine.forward(cloud);
        emit(out_path, infer_to_json(result, cfg).dump(2));
        return 0;
    }

    if (c_est->parsed()) {
        const ModelConfig cfg = load_model_config_file(model_path);
        std::optional<QuantModel> quant;
        if (!weights_path.empty()) {
            quant = quant_model_from_archive(cfg.topology, read_weights_file(weights_path));
        }
        const PerfReport report =
            estimate(cfg.topology, cfg.dataflow, clock_mhz * 1e6, power_watts,
                     quant ? &*quant : nullptr, wbits, abits);
        if (format == "csv") {
            emit(out_path, perf_to_csv(report));
        } else {
            emit(out_path, perf_to_json(report, cfg).dump(2));
        }
        return 0;
    }

    if (c_bench->parsed()) {
        const ModelConfig cfg = load_model_config_file(model_path);
        const QuantModel quant = quant_model_from_archive(cfg.topology, read_weights_file(weights_path));
        const PointCloud cloud = load_cloud(input_path);
        if (runs < 1) throw Error(ErrorCategory::config, "--runs must be >= 1");
        std::vector<double> times_ms;
        times_ms.reserve(static_cast<std::size_t>(runs));
        int argmax = -1;
        for (int r = 0; r < runs; ++r) {
            // Fresh engine per run: identical LFSR start, identical work.
            Engine engine(quant, seed_given ? std::optional<std::uint32_t>(seed) : std::nullopt);
            const auto t0 = std::chrono::steady_clock::now();
            const InferenceResult result = engine.forward(cloud);
            const auto t1 = std::chrono::steady_clock::now();
            times_ms.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
            argmax = result.argmax;
        }
        double total = 0, best = times_ms[0], worst = times_ms[0];
        for (double t : times_ms) {
            total += t;
            best = std::min(best, t);
            worst = std::max(worst, t);
        }
        json j;
        j["runs"] = runs;
        j["times_ms"] = times_ms;
        j["mean_ms"] = total / runs;
        j["min_ms"] = best;
        j["max_ms"] = worst;
        j["host_sps"] = 1000.0 * runs / total;  // host wall time, not a hardware figure
        j["argmax"] = argmax;
        j["sampler"] = sampler_echo(cfg.topology.sampler,
                                    seed_given ? seed : cfg.topology.sampler.seed);
        emit(out_path, j.dump(2));
        return 0;
    }

    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const hls4pc::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: internal: " << e.what() << "\n";
        return 2;
    }
}
