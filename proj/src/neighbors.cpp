#include "hls4pc/neighbors.hpp"

#include <algorithm>

namespace hls4pc {

FxpFormat default_dist_format(const FxpFormat& act) {
    FxpFormat fmt;
    fmt.total_bits = std::min(32, 2 * act.total_bits + 4);
    fmt.frac_bits = std::clamp(2 * act.frac_bits, 0, fmt.total_bits - 6);
    fmt.is_signed = true;
    return fmt;
}

DistanceBuffer compute_distances(const FxpTensor& cloud, const SampleSet& samples,
                                 const FxpFormat& dist_format, int pe_count) {
    check_format(dist_format, true);
    if (pe_count < 1) throw Error(ErrorCategory::config, "pe_count must be >= 1");
    if (cloud.dims.size() != 2) throw Error(ErrorCategory::shape, "cloud tensor must be N x D");
    const std::int64_t n = cloud.dim(0);
    const std::int64_t d = cloud.dim(1);
    if (d < 1) throw Error(ErrorCategory::shape, "cloud needs at least one channel");
    for (std::int32_t s : samples.indices) {
        if (s < 0 || s >= n) throw Error(ErrorCategory::shape, "sample index out of range");
    }

    const auto points = cloud.as_matrix(n, d);
    const int sq_frac = 2 * cloud.format.frac_bits;

    DistanceBuffer buffer;
    buffer.format = dist_format;
    buffer.data.resize(samples.size(), n);
    // pe_count partitions rows over distance units in hardware; values are
    // independent of the split, so a plain row loop serves every X.
    for (std::int64_t s = 0; s < samples.size(); ++s) {
        const std::int64_t anchor = samples.indices[static_cast<std::size_t>(s)];
        for (std::int64_t p = 0; p < n; ++p) {
            __int128 acc = 0;
            for (std::int64_t c = 0; c < d; ++c) {
                const RawWord diff = points(anchor, c) - points(p, c);
                acc += static_cast<__int128>(diff) * diff;
            }
            // Exact sum in the squared scale, one saturating requantization.
            RawWord clipped;
            if (acc > std::numeric_limits<RawWord>::max()) {
                clipped = dist_format.raw_max();
            } else {
                clipped = requantize_raw(static_cast<RawWord>(acc), sq_frac, dist_format);
            }
            buffer.data(s, p) = clipped;
        }
    }
    return buffer;
}

NeighborTable select_k_nearest(const DistanceBuffer& buffer, int k) {
    const std::int64_t n = buffer.cols();
    if (k < 1 || k > n) throw Error(ErrorCategory::config, "k must lie in [1, N]");

    NeighborTable table;
    table.indices.resize(buffer.rows(), k);
    const RawWord max_raw = buffer.format.raw_max();

    std::vector<RawWord> row(static_cast<std::size_t>(n));
    std::vector<bool> taken(static_cast<std::size_t>(n));
    for (std::int64_t s = 0; s < buffer.rows(); ++s) {
        for (std::int64_t p = 0; p < n; ++p) row[static_cast<std::size_t>(p)] = buffer.data(s, p);
        std::fill(taken.begin(), taken.end(), false);
        for (int j = 0; j < k; ++j) {
            std::int64_t best = -1;
            RawWord best_dist = 0;
            for (std::int64_t p = 0; p < n; ++p) {
                if (taken[static_cast<std::size_t>(p)]) continue;
                const RawWord dist = row[static_cast<std::size_t>(p)];
                if (best < 0 || dist < best_dist) {
                    best = p;
                    best_dist = dist;
                }
            }
            table.indices(s, j) = static_cast<std::int32_t>(best);
            taken[static_cast<std::size_t>(best)] = true;
            row[static_cast<std::size_t>(best)] = max_raw;
        }
    }
    return table;
}

NeighborTable knn(const FxpTensor& cloud, const SampleSet& samples, int k, int pe_count,
                  const FxpFormat& dist_format) {
    return select_k_nearest(compute_distances(cloud, samples, dist_format, pe_count), k);
}

}  // namespace hls4pc
