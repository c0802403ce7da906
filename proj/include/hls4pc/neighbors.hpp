#pragma once

#include <cstdint>

#include "hls4pc/fxp.hpp"
#include "hls4pc/sampling.hpp"

namespace hls4pc {

/// numSamp x N saturating fixed-point squared distances.
struct DistanceBuffer {
    FxpFormat format;
    RawMatrix data;  // rows = samples, cols = points

    std::int64_t rows() const { return data.rows(); }
    std::int64_t cols() const { return data.cols(); }
};

/// numSamp x k nearest-point indices; column j holds the j-th nearest,
/// row order follows the sample set.
struct NeighborTable {
    Eigen::Matrix<std::int32_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> indices;

    std::int64_t rows() const { return indices.rows(); }
    std::int64_t k() const { return indices.cols(); }
};

/// Entry (s, p) = sum over channels of (cloud[sample_s] - cloud[p])^2,
/// requantized into dist_format with saturation. pe_count (X) only partitions
/// the work; values are identical for every X >= 1.
DistanceBuffer compute_distances(const FxpTensor& cloud, const SampleSet& samples,
                                 const FxpFormat& dist_format, int pe_count);

/// Selection-sort-style extraction: per row, k times take the argmin (ties to
/// the lowest index) and reassign the chosen entry the format's maximum raw
/// value. Already-selected indices are excluded so rows stay duplicate-free
/// even when saturation pins several entries at the maximum.
NeighborTable select_k_nearest(const DistanceBuffer& buffer, int k);

/// compute_distances then select_k_nearest.
NeighborTable knn(const FxpTensor& cloud, const SampleSet& samples, int k, int pe_count,
                  const FxpFormat& dist_format);

/// Distance-buffer format derived from the activation format: width doubled
/// plus headroom, capped at 32 bits.
FxpFormat default_dist_format(const FxpFormat& act);

}  // namespace hls4pc
