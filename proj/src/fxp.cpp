#include "hls4pc/fxp.hpp"

#include <cmath>

namespace hls4pc {

namespace {

// Shift right by s with round-half-to-even. Relies on arithmetic >> for negatives.
RawWord shift_round_half_even(RawWord v, int s) {
    if (s <= 0) return v;
    if (s >= 63) {
        // Everything below the rounding point; only +-0/1 survive for s=63.
        // Handled generically below via __int128 to keep the edge exact.
        __int128 wide = v;
        __int128 floor = wide >> s;
        __int128 rem = wide - (floor << s);
        __int128 half = static_cast<__int128>(1) << (s - 1);
        if (rem > half || (rem == half && (floor & 1))) floor += 1;
        return static_cast<RawWord>(floor);
    }
    RawWord floor = v >> s;
    RawWord rem = v - (floor << s);
    RawWord half = RawWord{1} << (s - 1);
    if (rem > half || (rem == half && (floor & 1))) floor += 1;
    return floor;
}

}  // namespace

RawWord FxpFormat::raw_min() const {
    if (!is_signed) return 0;
    if (total_bits == 64) return std::numeric_limits<RawWord>::min();
    return -(RawWord{1} << (total_bits - 1));
}

RawWord FxpFormat::raw_max() const {
    if (is_signed) {
        if (total_bits == 64) return std::numeric_limits<RawWord>::max();
        return (RawWord{1} << (total_bits - 1)) - 1;
    }
    return (RawWord{1} << total_bits) - 1;
}

double FxpFormat::scale() const { return std::ldexp(1.0, -frac_bits); }

std::string FxpFormat::str() const {
    return (is_signed ? "s" : "u") + std::to_string(total_bits) + "." + std::to_string(frac_bits);
}

void check_format(const FxpFormat& fmt, bool require_storable) {
    if (!fmt.valid() || (require_storable && !fmt.storable())) {
        throw Error(ErrorCategory::config, "invalid fixed-point format " + fmt.str());
    }
}

RawWord saturate(RawWord value, const FxpFormat& fmt) {
    const RawWord lo = fmt.raw_min();
    const RawWord hi = fmt.raw_max();
    if (value < lo) return lo;
    if (value > hi) return hi;
    return value;
}

RawWord quantize_real(double x, const FxpFormat& fmt) {
    check_format(fmt);
    if (std::isnan(x)) throw Error(ErrorCategory::config, "cannot quantize NaN");
    const double scaled = std::ldexp(x, fmt.frac_bits);
    // Saturate in the double domain first; the bounds convert exactly.
    if (scaled >= static_cast<double>(fmt.raw_max())) return fmt.raw_max();
    if (scaled <= static_cast<double>(fmt.raw_min())) return fmt.raw_min();
    // Default FE_TONEAREST gives round-half-to-even.
    return static_cast<RawWord>(std::nearbyint(scaled));
}

FxpFormat product_format(const FxpFormat& a, const FxpFormat& b) {
    return FxpFormat{a.total_bits + b.total_bits, a.frac_bits + b.frac_bits,
                     a.is_signed || b.is_signed};
}

RawWord fxp_mul(RawWord a, const FxpFormat& fmt_a, RawWord b, const FxpFormat& fmt_b) {
    check_format(fmt_a, true);
    check_format(fmt_b, true);
    // |raw| <= 2^31 for storable formats, so the product fits 64 bits exactly.
    return a * b;
}

void check_mac_width(const FxpFormat& fmt_a, const FxpFormat& fmt_b, std::int64_t num_terms) {
    int log_terms = 0;
    while ((std::int64_t{1} << log_terms) < num_terms) ++log_terms;
    const int needed = fmt_a.total_bits + fmt_b.total_bits + log_terms;
    if (needed > 64) {
        throw Error(ErrorCategory::config,
                    "accumulator width insufficient: " + std::to_string(needed) +
                        " bits needed for exact accumulation of " + std::to_string(num_terms) +
                        " products of " + fmt_a.str() + " x " + fmt_b.str());
    }
}

RawWord fxp_mac_reduce(std::span<const RawWord> products, const FxpFormat& product_fmt,
                       const FxpFormat& acc_format) {
    check_format(product_fmt);
    check_format(acc_format);
    const int per_product = product_fmt.total_bits;
    int log_terms = 0;
    while ((std::int64_t{1} << log_terms) < static_cast<std::int64_t>(products.size())) ++log_terms;
    if (per_product + log_terms > 64) {
        throw Error(ErrorCategory::config,
                    "accumulator width insufficient for " + std::to_string(products.size()) +
                        " products in " + product_fmt.str());
    }
    RawWord acc = 0;
    for (RawWord p : products) acc += p;
    return requantize_raw(acc, product_fmt.frac_bits, acc_format);
}

RawWord requantize_raw(RawWord raw, int from_frac_bits, const FxpFormat& to) {
    check_format(to);
    const int shift = from_frac_bits - to.frac_bits;
    if (shift > 0) {
        return saturate(shift_round_half_even(raw, shift), to);
    }
    // Widening: exact left shift, saturated through a 128-bit intermediate.
    __int128 widened = static_cast<__int128>(raw) << (-shift);
    if (widened > to.raw_max()) return to.raw_max();
    if (widened < to.raw_min()) return to.raw_min();
    return static_cast<RawWord>(widened);
}

RawWord requantize(RawWord raw, const FxpFormat& from, const FxpFormat& to) {
    check_format(from);
    return requantize_raw(raw, from.frac_bits, to);
}

FxpTensor::FxpTensor(FxpFormat fmt, std::vector<std::int64_t> d) : format(fmt), dims(std::move(d)) {
    check_format(format, true);
    for (std::int64_t dim : dims) {
        if (dim < 0) throw Error(ErrorCategory::shape, "negative tensor dimension");
    }
    data.assign(static_cast<std::size_t>(size()), 0);
}

Eigen::Map<const RawMatrix> FxpTensor::as_matrix(std::int64_t rows, std::int64_t cols) const {
    if (rows * cols != size()) throw Error(ErrorCategory::shape, "tensor view shape mismatch");
    return {data.data(), rows, cols};
}

Eigen::Map<RawMatrix> FxpTensor::as_matrix(std::int64_t rows, std::int64_t cols) {
    if (rows * cols != size()) throw Error(ErrorCategory::shape, "tensor view shape mismatch");
    return {data.data(), rows, cols};
}

bool FxpTensor::in_range() const {
    const RawWord lo = format.raw_min();
    const RawWord hi = format.raw_max();
    for (RawWord w : data) {
        if (w < lo || w > hi) return false;
    }
    return true;
}

FxpTensor quantize_matrix(const RealMatrix& values, const FxpFormat& fmt) {
    FxpTensor t(fmt, {values.rows(), values.cols()});
    for (Eigen::Index r = 0; r < values.rows(); ++r) {
        for (Eigen::Index c = 0; c < values.cols(); ++c) {
            t.data[static_cast<std::size_t>(r * values.cols() + c)] = quantize_real(values(r, c), fmt);
        }
    }
    return t;
}

RealMatrix dequantize_matrix(const FxpTensor& t, std::int64_t rows, std::int64_t cols) {
    auto view = t.as_matrix(rows, cols);
    return view.cast<double>() * t.format.scale();
}

}  // namespace hls4pc
