#pragma once

#include <algorithm>
#include <utility>
#include <vector>

#include "hls4pc/compress.hpp"
#include "hls4pc/neighbors.hpp"
#include "hls4pc/pcio.hpp"
#include "hls4pc/prng.hpp"
#include "hls4pc/topology.hpp"

namespace testutil {

using namespace hls4pc;

// ---------------------------------------------------------------------------
// Independent oracles. These re-derive expected values through code paths
// deliberately different from the library implementation.
// ---------------------------------------------------------------------------

// Round-half-to-even division by 2^s via remainder comparison (no shifts).
inline RawWord oracle_div_round_half_even(RawWord v, int s) {
    if (s <= 0) return v;
    const __int128 denom = static_cast<__int128>(1) << s;
    __int128 q = static_cast<__int128>(v) / denom;
    __int128 r = static_cast<__int128>(v) % denom;
    if (r < 0) {  // floor division
        q -= 1;
        r += denom;
    }
    const __int128 twice = 2 * r;
    if (twice > denom || (twice == denom && (q % 2 != 0))) q += 1;
    return static_cast<RawWord>(q);
}

inline RawWord oracle_saturate(RawWord v, const FxpFormat& fmt) {
    return std::clamp(v, fmt.raw_min(), fmt.raw_max());
}

// Exact fixed-point squared distance between two raw rows, requantized into
// dist_fmt the way the distance units do.
inline RawWord oracle_distance(const FxpTensor& cloud, std::int64_t a, std::int64_t b,
                               const FxpFormat& dist_fmt) {
    const std::int64_t d = cloud.dims[1];
    __int128 acc = 0;
    for (std::int64_t c = 0; c < d; ++c) {
        const RawWord diff =
            cloud.data[static_cast<std::size_t>(a * d + c)] - cloud.data[static_cast<std::size_t>(b * d + c)];
        acc += static_cast<__int128>(diff) * diff;
    }
    const int shift = 2 * cloud.format.frac_bits - dist_fmt.frac_bits;
    __int128 scaled;
    if (shift >= 0) {
        // Same rounding rule, expressed through division.
        const __int128 denom = static_cast<__int128>(1) << shift;
        __int128 q = acc / denom;
        __int128 r = acc % denom;
        if (r < 0) {
            q -= 1;
            r += denom;
        }
        const __int128 twice = 2 * r;
        if (twice > denom || (twice == denom && (q % 2 != 0))) q += 1;
        scaled = q;
    } else {
        scaled = acc << (-shift);
    }
    if (scaled > dist_fmt.raw_max()) return dist_fmt.raw_max();
    if (scaled < dist_fmt.raw_min()) return dist_fmt.raw_min();
    return static_cast<RawWord>(scaled);
}

// Brute-force k-NN: argsort of oracle distances by (distance, index).
inline NeighborTable oracle_knn(const FxpTensor& cloud, const SampleSet& samples, int k,
                                const FxpFormat& dist_fmt) {
    const std::int64_t n = cloud.dims[0];
    NeighborTable table;
    table.indices.resize(samples.size(), k);
    std::vector<std::pair<RawWord, std::int64_t>> order(static_cast<std::size_t>(n));
    for (std::int64_t s = 0; s < samples.size(); ++s) {
        for (std::int64_t p = 0; p < n; ++p) {
            order[static_cast<std::size_t>(p)] = {
                oracle_distance(cloud, samples.indices[static_cast<std::size_t>(s)], p, dist_fmt), p};
        }
        std::sort(order.begin(), order.end());
        for (int j = 0; j < k; ++j) {
            table.indices(s, j) = static_cast<std::int32_t>(order[static_cast<std::size_t>(j)].second);
        }
    }
    return table;
}

// Fibonacci-form LFSR equivalent used to cross-check the Galois stepper:
// enumerates the same state set when both use the same primitive polynomial.
// For sequence-level checks we instead re-derive the Galois update naively.
inline std::uint32_t oracle_galois_step(std::uint32_t state, std::uint32_t taps) {
    const bool lsb = (state & 1u) != 0;
    state = state / 2;  // logical shift of a masked value
    if (lsb) state ^= taps;
    return state;
}

// ---------------------------------------------------------------------------
// Generators
// ---------------------------------------------------------------------------

// Random cloud with coordinates on a 2^-grid_frac grid inside [-1, 1]; exact
// under quantization at frac >= grid_frac.
inline PointCloud grid_cloud(SplitMix64& rng, std::int64_t n, std::int64_t d = 3, int grid_frac = 6) {
    PointCloud cloud;
    cloud.data.resize(n, d);
    const double step = std::ldexp(1.0, -grid_frac);
    const std::int64_t levels = (std::int64_t{1} << (grid_frac + 1)) + 1;
    for (std::int64_t i = 0; i < n; ++i) {
        for (std::int64_t c = 0; c < d; ++c) {
            cloud.data(i, c) = -1.0 + step * static_cast<double>(rng.below(static_cast<std::uint64_t>(levels)));
        }
    }
    return cloud;
}

inline FxpTensor random_tensor(SplitMix64& rng, const FxpFormat& fmt, std::vector<std::int64_t> dims) {
    FxpTensor t(fmt, std::move(dims));
    const auto span = static_cast<std::uint64_t>(fmt.raw_max() - fmt.raw_min() + 1);
    for (RawWord& w : t.data) {
        w = fmt.raw_min() + static_cast<RawWord>(rng.below(span));
    }
    return t;
}

// Small PointMLP-shaped topology for engine-level tests.
inline ModelTopology tiny_topology(int input_points = 32, std::vector<int> samples = {16, 8},
                                   int k = 4, std::vector<int> channels = {8, 16},
                                   int num_classes = 5) {
    ModelTopology topo;
    topo.input_points = input_points;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        StageSpec stage;
        stage.num_samples = samples[i];
        stage.k = k;
        stage.pre_channels = {channels[i], channels[i]};
        stage.pos_channels = {channels[i]};
        topo.stages.push_back(stage);
    }
    topo.classifier_channels = {16, num_classes};
    topo.sampler.lfsr_degree = 16;
    topo.sampler.seed = 7;
    topo.knn.pe_count = 4;
    return topo;
}

// Lite-shaped topology: 4 stages, 3+3 convs each (24 total), 3 classifier
// layers, halving sample schedule.
inline ModelTopology lite_shaped_topology(int input_points, std::vector<int> samples,
                                          std::vector<int> channels, int k) {
    ModelTopology topo;
    topo.input_points = input_points;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        StageSpec stage;
        stage.num_samples = samples[i];
        stage.k = k;
        stage.pre_channels = {channels[i], channels[i], channels[i]};
        stage.pos_channels = {channels[i], channels[i], channels[i]};
        topo.stages.push_back(stage);
    }
    const int c_last = channels.back();
    topo.classifier_channels = {c_last / 2, c_last / 4, 40};
    topo.sampler.lfsr_degree = 16;
    topo.sampler.seed = 3;
    topo.knn.pe_count = 4;
    return topo;
}

}  // namespace testutil
