#pragma once

#include <map>
#include <optional>

#include "hls4pc/compress.hpp"
#include "hls4pc/sampling.hpp"

namespace hls4pc {

struct InferenceResult {
    Eigen::VectorXd logits;
    int argmax = -1;
    std::vector<int> stage_samples;   // sample count per stage
    std::vector<int> stage_channels;  // output feature width per stage
    // RNG provenance, echoed into every emitted artifact.
    std::uint32_t seed = 0;
    int lfsr_degree = 0;
    std::uint32_t lfsr_taps = 0;
};

/// End-to-end fixed-point forward pass. One engine owns one LFSR; instances
/// are independent and an instance serves one caller at a time.
class Engine {
public:
    explicit Engine(QuantModel model, std::optional<std::uint32_t> seed_override = {});

    InferenceResult forward(const PointCloud& cloud);

    const QuantModel& model() const { return model_; }

private:
    QuantModel model_;
    Lfsr lfsr_;
    std::uint32_t seed_;
};

/// Max-abs observations from a reference pass, keyed by stored-tensor name.
struct ReferenceTrace {
    std::map<std::string, double> max_abs;
};

/// Same dataflow in double precision; the oracle for quantization error and
/// fusion equivalence. Sampling depends only on indices, so a given seed
/// selects identical points in both paths.
InferenceResult forward_reference(const RealModel& model, const PointCloud& cloud,
                                  ReferenceTrace* trace = nullptr,
                                  std::optional<std::uint32_t> seed_override = {});

/// Reference k-NN on real coordinates: argsort by (distance, index).
NeighborTable knn_reference(const RealMatrix& positions, const SampleSet& samples, int k);

}  // namespace hls4pc
