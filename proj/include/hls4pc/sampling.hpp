#pragma once

#include <cstdint>
#include <vector>

#include "hls4pc/errors.hpp"
#include "hls4pc/pcio.hpp"

namespace hls4pc {

/// Galois-form linear feedback shift register. With primitive feedback taps the
/// nonzero state sequence has period exactly 2^degree - 1.
class Lfsr {
public:
    /// taps = 0 selects the default primitive polynomial for the degree.
    Lfsr(int degree, std::uint32_t taps, std::uint32_t seed);

    /// Default primitive polynomial feedback mask for degrees 3..32; bit e-1 is
    /// set for every polynomial term x^e (the +1 term is implicit).
    static std::uint32_t default_taps(int degree);

    /// Shift right; when the dropped bit is 1, XOR the taps in. Returns the new
    /// full state word.
    std::uint32_t step();

    std::uint32_t state() const { return state_; }
    std::uint32_t taps() const { return taps_; }
    int degree() const { return degree_; }

private:
    int degree_;
    std::uint32_t taps_;
    std::uint32_t mask_;
    std::uint32_t state_;
};

/// Distinct sample indices in order of first acceptance.
struct SampleSet {
    std::vector<std::int32_t> indices;

    std::int64_t size() const { return static_cast<std::int64_t>(indices.size()); }
};

/// Draw state mod num_points per step, rejecting duplicates, until num_samples
/// distinct indices are collected. Depends only on (taps, seed, N, numSamp).
SampleSet urs_sample(Lfsr& lfsr, std::int64_t num_points, std::int64_t num_samples);

/// Greedy farthest-point selection under squared Euclidean distance on x,y,z;
/// ties broken toward the lower index. Reference oracle, exact doubles.
SampleSet fps_sample(const PointCloud& cloud, std::int64_t num_samples, std::int64_t start_index = 0);

}  // namespace hls4pc
