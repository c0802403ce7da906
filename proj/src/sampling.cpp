#include "hls4pc/sampling.hpp"

#include <array>
#include <limits>

namespace hls4pc {

namespace {

// One canonical primitive polynomial per degree 3..32, exhaustively verified
// to give period 2^n - 1. Encoding: bit e-1 per term x^e.
constexpr std::array<std::uint32_t, 33> kDefaultTaps = {
    0,          0,          0,          0x6,        0x9,        0x14,      0x30,      0x60,
    0xB8,       0x110,      0x240,      0x500,      0x829,      0x100D,    0x3802,    0x6000,
    0xB400,     0x12000,    0x20400,    0x72000,    0x90000,    0x140000,  0x300000,  0x420000,
    0xE10000,   0x1200000,  0x3880000,  0x7200000,  0x9000000,  0x14000000, 0x38000040, 0x48000000,
    0x80200003,
};

}  // namespace

std::uint32_t Lfsr::default_taps(int degree) {
    if (degree < 3 || degree > 32) {
        throw Error(ErrorCategory::config, "LFSR degree must lie in [3, 32]");
    }
    return kDefaultTaps[static_cast<std::size_t>(degree)];
}

Lfsr::Lfsr(int degree, std::uint32_t taps, std::uint32_t seed) : degree_(degree) {
    if (degree < 3 || degree > 32) {
        throw Error(ErrorCategory::config, "LFSR degree must lie in [3, 32]");
    }
    mask_ = degree == 32 ? 0xFFFFFFFFu : ((std::uint32_t{1} << degree) - 1);
    taps_ = taps == 0 ? default_taps(degree) : (taps & mask_);
    if (taps_ == 0) throw Error(ErrorCategory::config, "LFSR taps must be nonzero");
    state_ = seed & mask_;
    if (state_ == 0) throw Error(ErrorCategory::config, "LFSR seed must be nonzero within the degree mask");
}

std::uint32_t Lfsr::step() {
    const std::uint32_t out_bit = state_ & 1u;
    state_ >>= 1;
    if (out_bit) state_ ^= taps_;
    return state_;
}

SampleSet urs_sample(Lfsr& lfsr, std::int64_t num_points, std::int64_t num_samples) {
    if (num_points < 1) throw Error(ErrorCategory::config, "urs_sample: num_points must be >= 1");
    if (num_samples < 0 || num_samples > num_points) {
        throw Error(ErrorCategory::config, "urs_sample: num_samples must lie in [0, num_points]");
    }
    const std::uint64_t period = (std::uint64_t{1} << lfsr.degree()) - 1;
    if (period < static_cast<std::uint64_t>(num_points)) {
        throw Error(ErrorCategory::config,
                    "urs_sample: LFSR degree " + std::to_string(lfsr.degree()) +
                        " cannot reach every index of " + std::to_string(num_points) + " points");
    }
    SampleSet set;
    set.indices.reserve(static_cast<std::size_t>(num_samples));
    std::vector<bool> seen(static_cast<std::size_t>(num_points), false);
    while (static_cast<std::int64_t>(set.indices.size()) < num_samples) {
        const std::uint32_t word = lfsr.step();
        const auto idx = static_cast<std::int64_t>(word % static_cast<std::uint32_t>(num_points));
        if (!seen[static_cast<std::size_t>(idx)]) {
            seen[static_cast<std::size_t>(idx)] = true;
            set.indices.push_back(static_cast<std::int32_t>(idx));
        }
    }
    return set;
}

SampleSet fps_sample(const PointCloud& cloud, std::int64_t num_samples, std::int64_t start_index) {
    const std::int64_t n = cloud.num_points();
    if (num_samples < 0 || num_samples > n) {
        throw Error(ErrorCategory::config, "fps_sample: num_samples must lie in [0, N]");
    }
    if (start_index < 0 || start_index >= n) {
        throw Error(ErrorCategory::config, "fps_sample: start_index out of range");
    }
    if (cloud.channels() < 3) throw Error(ErrorCategory::shape, "fps_sample: cloud needs x,y,z channels");

    SampleSet set;
    if (num_samples == 0) return set;
    set.indices.reserve(static_cast<std::size_t>(num_samples));

    const auto xyz = cloud.xyz();
    std::vector<double> min_dist(static_cast<std::size_t>(n), std::numeric_limits<double>::infinity());
    std::int64_t current = start_index;
    set.indices.push_back(static_cast<std::int32_t>(current));
    while (static_cast<std::int64_t>(set.indices.size()) < num_samples) {
        std::int64_t best = -1;
        double best_dist = -1.0;
        for (std::int64_t p = 0; p < n; ++p) {
            const double d = (xyz.row(p) - xyz.row(current)).squaredNorm();
            auto& slot = min_dist[static_cast<std::size_t>(p)];
            if (d < slot) slot = d;
            // Strict > keeps the lowest index on ties.
            if (slot > best_dist) {
                best_dist = slot;
                best = p;
            }
        }
        current = best;
        set.indices.push_back(static_cast<std::int32_t>(current));
    }
    return set;
}

}  // namespace hls4pc
