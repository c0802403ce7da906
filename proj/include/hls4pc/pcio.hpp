#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "hls4pc/fxp.hpp"
#include "hls4pc/topology.hpp"

namespace hls4pc {

/// N points x D channels; channels 0..2 are x,y,z.
struct PointCloud {
    RealMatrix data;

    std::int64_t num_points() const { return data.rows(); }
    std::int64_t channels() const { return data.cols(); }
    Eigen::Block<const RealMatrix> xyz() const { return data.leftCols(3); }
};

/// OFF vertex list (faces are skipped). Accepts the fused-header quirk
/// ("OFF3 1 0" on one line) found in public OFF corpora.
PointCloud parse_off(std::istream& in);

/// Whitespace-separated reals, one point per line.
PointCloud load_xyz(std::istream& in, int channels = 3);

/// Dispatch on extension: .off -> parse_off, anything else -> load_xyz.
PointCloud load_cloud(const std::string& path, int channels = 3);

struct NamedTensor {
    std::string name;
    FxpTensor tensor;
};

/// On-disk model container. Payload words are persisted as little-endian i32,
/// so stored formats are limited to 32 bits.
struct WeightArchive {
    static constexpr char kMagic[9] = "HLS4PC01";
    static constexpr std::uint32_t kVersion = 1;

    std::uint32_t version = kVersion;
    std::vector<NamedTensor> tensors;

    const NamedTensor* find(const std::string& name) const;
    const FxpTensor& at(const std::string& name) const;  // throws ConfigError when missing
    bool contains(const std::string& name) const { return find(name) != nullptr; }
    void add(std::string name, FxpTensor tensor);  // rejects duplicates

    /// Logical parameter payload: sum over tensors of elements * total_bits.
    std::int64_t payload_bits() const;
};

WeightArchive read_weights(std::istream& in);
void write_weights(std::ostream& out, const WeightArchive& archive);

WeightArchive read_weights_file(const std::string& path);
void write_weights_file(const std::string& path, const WeightArchive& archive);

/// Parse and validate the model configuration JSON document.
ModelConfig load_model_config(std::istream& in);
ModelConfig load_model_config_file(const std::string& path);

}  // namespace hls4pc
