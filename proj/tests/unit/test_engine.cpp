#include "doctest.h"
#include "helpers.hpp"
#include "hls4pc/engine.hpp"

using namespace hls4pc;

namespace {

QuantModel quantized_tiny(std::uint64_t model_seed, int wbits = 16, int abits = 16,
                          bool fuse = true, ModelTopology topo = testutil::tiny_topology()) {
    RealModel model = random_real_model(topo, model_seed, true);
    if (fuse) model = fuse_model(model);
    testutil::SplitMix64 rng(model_seed ^ 0xC0FFEE);
    const PointCloud calib = testutil::grid_cloud(rng, topo.input_points);
    return quantize_model(model, wbits, abits, calibrate(model, {calib}));
}

}  // namespace

TEST_CASE("all-zero weights propagate the classifier bias to the logits") {
    const ModelTopology topo = testutil::tiny_topology();
    RealModel model = fuse_model(random_real_model(topo, 21, true));
    for (RealLayer& layer : model.layers) layer.conv.weight.setZero();

    testutil::SplitMix64 rng(21);
    const PointCloud cloud = testutil::grid_cloud(rng, topo.input_points);
    const QuantModel quant = quantize_model(model, 16, 16, calibrate(model, {cloud}));
    Engine engine(quant);
    const InferenceResult result = engine.forward(cloud);

    const QuantLayer& last = quant.layers.back();
    for (int c = 0; c < topo.num_classes(); ++c) {
        const double bias = dequantize(last.conv.bias.data[static_cast<std::size_t>(c)], last.conv.bias.format);
        CHECK(result.logits(c) == doctest::Approx(bias).epsilon(1e-3));
    }
}

TEST_CASE("identical seeds give bit-identical logits, different seeds differ") {
    const QuantModel quant = quantized_tiny(22);
    testutil::SplitMix64 rng(22);
    const PointCloud cloud = testutil::grid_cloud(rng, quant.topology.input_points);

    Engine a(quant, 7u);
    Engine b(quant, 7u);
    const InferenceResult ra = a.forward(cloud);
    const InferenceResult rb = b.forward(cloud);
    REQUIRE(ra.logits.size() == rb.logits.size());
    for (int i = 0; i < ra.logits.size(); ++i) {
        CHECK(std::memcmp(&ra.logits(i), &rb.logits(i), sizeof(double)) == 0);
    }

    Engine c(quant, 8u);
    const InferenceResult rc = c.forward(cloud);
    CHECK((ra.logits - rc.logits).cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("stage shape algebra") {
    const ModelTopology topo = testutil::tiny_topology(32, {16, 8}, 4, {8, 16}, 5);
    const QuantModel quant = quantized_tiny(23, 16, 16, true, topo);
    testutil::SplitMix64 rng(23);
    const PointCloud cloud = testutil::grid_cloud(rng, 32);
    Engine engine(quant);
    const InferenceResult result = engine.forward(cloud);
    CHECK(result.stage_samples == std::vector<int>{16, 8});
    CHECK(result.stage_channels == std::vector<int>{8, 16});
    CHECK(result.logits.size() == 5);
    CHECK(result.argmax >= 0);
    CHECK(result.argmax < 5);
}

TEST_CASE("engine consumes the LFSR across consecutive forwards") {
    const QuantModel quant = quantized_tiny(24);
    testutil::SplitMix64 rng(24);
    const PointCloud cloud = testutil::grid_cloud(rng, quant.topology.input_points);
    Engine engine(quant, 5u);
    const InferenceResult first = engine.forward(cloud);
    const InferenceResult second = engine.forward(cloud);
    // Stateful sampler: a second pass generally selects different points.
    CHECK((first.logits - second.logits).cwiseAbs().maxCoeff() >= 0.0);
    Engine fresh(quant, 5u);
    const InferenceResult again = fresh.forward(cloud);
    CHECK(first.logits == again.logits);
}

TEST_CASE("clouds smaller than input_points are rejected, larger ones truncated") {
    const QuantModel quant = quantized_tiny(25);
    testutil::SplitMix64 rng(25);
    PointCloud small = testutil::grid_cloud(rng, quant.topology.input_points - 1);
    Engine engine(quant);
    CHECK_THROWS_AS(engine.forward(small), Error);

    PointCloud big = testutil::grid_cloud(rng, quant.topology.input_points + 10);
    PointCloud head;
    head.data = big.data.topRows(quant.topology.input_points);
    Engine e1(quant, 3u), e2(quant, 3u);
    CHECK(e1.forward(big).logits == e2.forward(head).logits);
}

TEST_CASE("reference path: fused and unfused models agree within 1e-5") {
    const ModelTopology topo = testutil::tiny_topology();
    const RealModel model = random_real_model(topo, 26);
    const RealModel fused = fuse_model(model);
    testutil::SplitMix64 rng(26);
    const PointCloud cloud = testutil::grid_cloud(rng, topo.input_points);
    const InferenceResult a = forward_reference(model, cloud);
    const InferenceResult b = forward_reference(fused, cloud);
    CHECK((a.logits - b.logits).cwiseAbs().maxCoeff() <= 1e-5);
}

TEST_CASE("16/16 fixed point tracks the reference within 2^-8") {
    const ModelTopology topo = testutil::lite_shaped_topology(64, {32, 16, 8, 4}, {8, 16, 32, 64}, 4);
    RealModel model = fuse_model(random_real_model(topo, 27, true));
    testutil::SplitMix64 rng(27);
    const PointCloud cloud = testutil::grid_cloud(rng, topo.input_points);
    const QuantModel quant = quantize_model(model, 16, 16, calibrate(model, {cloud}));

    Engine engine(quant);
    const InferenceResult fxp = engine.forward(cloud);
    const InferenceResult ref = forward_reference(model, cloud);
    CHECK((fxp.logits - ref.logits).cwiseAbs().maxCoeff() <= std::ldexp(1.0, -8));
}

TEST_CASE("unfused quantized models run with emulated batch-norm") {
    const ModelTopology topo = testutil::tiny_topology();
    const RealModel model = random_real_model(topo, 28, true);
    testutil::SplitMix64 rng(28);
    const PointCloud cloud = testutil::grid_cloud(rng, topo.input_points);
    const QuantModel quant = quantize_model(model, 16, 16, calibrate(model, {cloud}));
    REQUIRE(quant.layers.front().bn.has_value());

    Engine engine(quant);
    const InferenceResult fxp = engine.forward(cloud);
    const InferenceResult ref = forward_reference(model, cloud);
    CHECK((fxp.logits - ref.logits).cwiseAbs().maxCoeff() <= 0.02);
}

TEST_CASE("permuting input points leaves FPS-driven logits unchanged") {
    ModelTopology topo = testutil::tiny_topology();
    topo.sampler.type = SamplerType::fps;
    RealModel model = fuse_model(random_real_model(topo, 29, true));
    // Continuous coordinates: geometric selections are tie-free in practice.
    testutil::SplitMix64 rng(29);
    PointCloud cloud;
    cloud.data.resize(topo.input_points, 3);
    for (std::int64_t i = 0; i < cloud.data.size(); ++i) {
        cloud.data(i / 3, i % 3) = rng.uniform(-1.0, 1.0);
    }
    const QuantModel quant = quantize_model(model, 16, 16, calibrate(model, {cloud}));

    PointCloud shuffled = cloud;
    for (std::int64_t i = topo.input_points - 1; i > 0; --i) {
        const std::int64_t j = static_cast<std::int64_t>(rng.below(static_cast<std::uint64_t>(i + 1)));
        shuffled.data.row(i).swap(shuffled.data.row(j));
    }

    Engine e1(quant), e2(quant);
    const InferenceResult a = e1.forward(cloud);
    const InferenceResult b = e2.forward(shuffled);
    CHECK(a.logits == b.logits);

    const InferenceResult ra = forward_reference(model, cloud);
    const InferenceResult rb = forward_reference(model, shuffled);
    CHECK(ra.logits == rb.logits);
}

TEST_CASE("reference trace covers every streamed tensor") {
    const ModelTopology topo = testutil::tiny_topology();
    const RealModel model = random_real_model(topo, 30);
    testutil::SplitMix64 rng(30);
    const PointCloud cloud = testutil::grid_cloud(rng, topo.input_points);
    ReferenceTrace trace;
    forward_reference(model, cloud, &trace);
    CHECK(trace.max_abs.count("input") == 1);
    for (std::size_t i = 0; i < topo.stages.size(); ++i) {
        CHECK(trace.max_abs.count("stage" + std::to_string(i) + ".grouped") == 1);
    }
    for (const ConvSpec& spec : topo.conv_layers()) {
        CHECK(trace.max_abs.count(spec.name) == 1);
    }
}
