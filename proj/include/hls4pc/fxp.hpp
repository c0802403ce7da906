#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "hls4pc/errors.hpp"

namespace hls4pc {

/// Raw fixed-point words are carried in 64-bit containers regardless of format width.
using RawWord = std::int64_t;

using RawMatrix = Eigen::Matrix<RawWord, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RawArray = Eigen::Array<RawWord, Eigen::Dynamic, 1>;
using RealMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RealVector = Eigen::VectorXd;

/// Signed/unsigned two's-complement fixed point: real value = raw * 2^-frac_bits.
///
/// Stored formats (tensors, archives, configs) are limited to total_bits in [2, 32].
/// Wider formats, up to 64 bits, appear only transiently as exact product and
/// accumulator formats inside MAC pipelines.
struct FxpFormat {
    int total_bits = 16;
    int frac_bits = 8;
    bool is_signed = true;

    bool valid() const {
        return total_bits >= 2 && total_bits <= 64 && frac_bits >= 0 && frac_bits <= total_bits - 1 &&
               (is_signed || total_bits <= 63);
    }
    /// True when the format may be persisted in tensors/archives.
    bool storable() const { return valid() && total_bits <= 32; }

    RawWord raw_min() const;
    RawWord raw_max() const;
    double scale() const;  // 2^-frac_bits
    double to_real(RawWord raw) const { return static_cast<double>(raw) * scale(); }

    std::string str() const;  // "s16.8" / "u8.4"

    friend bool operator==(const FxpFormat&, const FxpFormat&) = default;
};

/// Throws ConfigError unless fmt.valid() (storable when require_storable).
void check_format(const FxpFormat& fmt, bool require_storable = false);

/// Clamp a raw word into the representable range of fmt.
RawWord saturate(RawWord value, const FxpFormat& fmt);

/// round(x * 2^frac_bits) with round-half-to-even, then saturation.
/// NaN input is rejected; +-inf saturates.
RawWord quantize_real(double x, const FxpFormat& fmt);

inline double dequantize(RawWord raw, const FxpFormat& fmt) { return fmt.to_real(raw); }

/// Exact product of two raw words; result lives in the product format
/// (total = Wa + Wb, frac = Fa + Fb), never rounded at this step.
RawWord fxp_mul(RawWord a, const FxpFormat& fmt_a, RawWord b, const FxpFormat& fmt_b);

FxpFormat product_format(const FxpFormat& a, const FxpFormat& b);

/// Throws ConfigError when an exact 64-bit accumulation of num_terms products
/// of the given widths cannot be guaranteed.
void check_mac_width(const FxpFormat& fmt_a, const FxpFormat& fmt_b, std::int64_t num_terms);

/// Exact wide-accumulator sum of products (all in product_fmt), then a single
/// requantization to acc_format.
RawWord fxp_mac_reduce(std::span<const RawWord> products, const FxpFormat& product_fmt,
                       const FxpFormat& acc_format);

/// Arithmetic shift between frac scales with round-half-to-even when narrowing,
/// then saturation to the target range.
RawWord requantize(RawWord raw, const FxpFormat& from, const FxpFormat& to);

/// requantize() on a bare frac scale; used where the source is a wide accumulator.
RawWord requantize_raw(RawWord raw, int from_frac_bits, const FxpFormat& to);

/// N-dimensional row-major container of raw words sharing one format.
struct FxpTensor {
    FxpFormat format;
    std::vector<std::int64_t> dims;
    std::vector<RawWord> data;

    FxpTensor() = default;
    FxpTensor(FxpFormat fmt, std::vector<std::int64_t> d);

    static FxpTensor zeros(FxpFormat fmt, std::vector<std::int64_t> d) { return FxpTensor(fmt, std::move(d)); }

    std::int64_t size() const {
        return std::accumulate(dims.begin(), dims.end(), std::int64_t{1}, std::multiplies<>());
    }
    std::int64_t dim(int i) const { return dims.at(static_cast<std::size_t>(i)); }

    /// 2-D row-major view; product of dims must equal rows*cols.
    Eigen::Map<const RawMatrix> as_matrix(std::int64_t rows, std::int64_t cols) const;
    Eigen::Map<RawMatrix> as_matrix(std::int64_t rows, std::int64_t cols);

    /// Every word within the format range.
    bool in_range() const;
};

/// Elementwise quantize_real over an Eigen matrix.
FxpTensor quantize_matrix(const RealMatrix& values, const FxpFormat& fmt);

/// Dense real view of a tensor interpreted as rows x cols.
RealMatrix dequantize_matrix(const FxpTensor& t, std::int64_t rows, std::int64_t cols);

}  // namespace hls4pc
