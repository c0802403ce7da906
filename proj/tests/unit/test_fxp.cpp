#include <cmath>

#include "doctest.h"
#include "helpers.hpp"
#include "hls4pc/fxp.hpp"

using namespace hls4pc;
using testutil::oracle_div_round_half_even;

namespace {
const FxpFormat s16_8{16, 8, true};
const FxpFormat s8_6{8, 6, true};
const FxpFormat s9_8{9, 8, true};
}  // namespace

TEST_CASE("quantize_real basic scaling") {
    CHECK(quantize_real(1.5, s16_8) == 384);
    CHECK(quantize_real(0.0, s16_8) == 0);
    CHECK(quantize_real(-1.5, s16_8) == -384);
}

TEST_CASE("quantize_real saturates at the format bounds") {
    CHECK(quantize_real(200.0, s16_8) == 32767);
    CHECK(quantize_real(-200.0, s16_8) == -32768);
    CHECK(quantize_real(std::numeric_limits<double>::infinity(), s16_8) == 32767);
    CHECK(quantize_real(-std::numeric_limits<double>::infinity(), s16_8) == -32768);
}

TEST_CASE("quantize_real rejects NaN") {
    CHECK_THROWS_AS(quantize_real(std::numeric_limits<double>::quiet_NaN(), s16_8), Error);
}

TEST_CASE("quantize_real tie rounds to even") {
    // 2^-8 is exactly one ulp at frac 8; 2^-9 scales to 0.5 and ties to 0.
    CHECK(quantize_real(std::ldexp(1.0, -8), s9_8) == 1);
    CHECK(quantize_real(std::ldexp(1.0, -9), s9_8) == 0);
    CHECK(quantize_real(3 * std::ldexp(1.0, -9), s9_8) == 2);  // 1.5 ulp ties to 2
}

TEST_CASE("fxp_mul is exact in the product format") {
    const FxpFormat q4{8, 4, true};
    CHECK(fxp_mul(8, q4, 8, q4) == 64);  // 0.5 * 0.5 = 0.25 at frac 8
    CHECK(fxp_mul(123, q4, 0, q4) == 0);
    // (-1.0) * (-1.0) in s8.6: raw -64 each, product 4096 at frac 12 = 1.0
    CHECK(fxp_mul(-64, s8_6, -64, s8_6) == 4096);
    CHECK(product_format(s8_6, s8_6).frac_bits == 12);
    CHECK(product_format(s8_6, s8_6).total_bits == 16);
}

TEST_CASE("fxp_mac_reduce sums exactly then requantizes once") {
    const FxpFormat prod{16, 12, true};
    const FxpFormat acc{16, 8, true};
    // 1.0 and -1.0 at frac 12
    const RawWord terms_cancel[] = {4096, -4096};
    CHECK(fxp_mac_reduce(terms_cancel, prod, acc) == 0);

    // 16 products of 0.25 -> 4.0 exactly
    std::vector<RawWord> quarter(16, 1024);
    CHECK(fxp_mac_reduce(quarter, prod, acc) == 4 * 256);
}

TEST_CASE("fxp_mac_reduce reports insufficient accumulator width") {
    const FxpFormat wide{32, 16, true};
    CHECK_THROWS_AS(check_mac_width(wide, wide, 2), Error);
    CHECK_NOTHROW(check_mac_width(s8_6, s8_6, 1 << 10));
}

TEST_CASE("MAC error bound against double-precision oracle") {
    // 4 products of values near 0.3 quantized at s8.6; compare to exact doubles.
    const double inputs[4][2] = {{0.3, 0.3}, {0.31, -0.29}, {-0.33, 0.27}, {0.25, 0.3}};
    std::vector<RawWord> products;
    double exact = 0;
    for (auto& [a, b] : inputs) {
        const RawWord qa = quantize_real(a, s8_6);
        const RawWord qb = quantize_real(b, s8_6);
        products.push_back(fxp_mul(qa, s8_6, qb, s8_6));
        exact += a * b;
    }
    const FxpFormat acc{16, 10, true};
    const double got = dequantize(fxp_mac_reduce(products, product_format(s8_6, s8_6), acc), acc);
    // Each input rounds by <= 2^-7; with |a|,|b| <= 0.35 the product error is
    // <= 2 * 0.35 * 2^-7 + 2^-14, four terms plus the final requantization.
    const double bound = std::ldexp(1.0, -7) * (1 + 4 * 2 * 0.35) + std::ldexp(1.0, -11);
    CHECK(std::abs(got - exact) <= bound);
}

TEST_CASE("requantize preserves value across frac scales") {
    const FxpFormat f8{16, 8, true};
    const FxpFormat f4{16, 4, true};
    CHECK(requantize(384, f8, f4) == 24);  // 1.5 preserved
    CHECK(requantize(24, f4, f8) == 384);
}

TEST_CASE("requantize rounds half to even when narrowing") {
    const FxpFormat f2{8, 2, true};
    const FxpFormat f0{8, 0, true};
    CHECK(requantize(3, f2, f0) == 1);    // 0.75 -> 1
    CHECK(requantize(2, f2, f0) == 0);    // 0.50 ties to 0
    CHECK(requantize(6, f2, f0) == 2);    // 1.50 ties to 2
    CHECK(requantize(-2, f2, f0) == 0);   // -0.50 ties to 0
    CHECK(requantize(-3, f2, f0) == -1);  // -0.75 -> -1
}

TEST_CASE("requantize saturates into narrower formats") {
    const FxpFormat from{16, 8, true};
    const FxpFormat to{8, 8, true};  // same scale, narrower range
    CHECK(requantize(from.raw_max(), from, to) == to.raw_max());
    CHECK(requantize(from.raw_min(), from, to) == to.raw_min());
}

TEST_CASE("round-half-even shift agrees with division oracle") {
    testutil::SplitMix64 rng(11);
    const FxpFormat to{16, 3, true};
    for (int i = 0; i < 2000; ++i) {
        const RawWord v = static_cast<RawWord>(rng.next() % 200001) - 100000;
        const int from_frac = 3 + static_cast<int>(rng.below(10));
        const RawWord expect = saturate(oracle_div_round_half_even(v, from_frac - 3), to);
        CHECK(requantize_raw(v, from_frac, to) == expect);
    }
}

TEST_CASE("quantize/dequantize round-trips grid values exactly") {
    for (int raw = -512; raw <= 512; ++raw) {
        const double x = std::ldexp(static_cast<double>(raw), -8);
        CHECK(quantize_real(x, s16_8) == raw);
        CHECK(dequantize(quantize_real(x, s16_8), s16_8) == doctest::Approx(x).epsilon(0));
    }
}

TEST_CASE("quantization error bounded by half an ulp") {
    testutil::SplitMix64 rng(5);
    for (int i = 0; i < 1000; ++i) {
        const double x = rng.uniform(-100.0, 100.0);
        const double back = dequantize(quantize_real(x, s16_8), s16_8);
        CHECK(std::abs(back - x) <= std::ldexp(1.0, -9) + 1e-15);
    }
}

TEST_CASE("quantize_real is monotone non-decreasing") {
    testutil::SplitMix64 rng(17);
    for (int i = 0; i < 1000; ++i) {
        double a = rng.uniform(-300.0, 300.0);
        double b = rng.uniform(-300.0, 300.0);
        if (a > b) std::swap(a, b);
        CHECK(quantize_real(a, s16_8) <= quantize_real(b, s16_8));
    }
}

TEST_CASE("unsigned formats clamp below zero") {
    const FxpFormat u8{8, 4, false};
    CHECK(quantize_real(-1.0, u8) == 0);
    CHECK(quantize_real(2.0, u8) == 32);
    CHECK(u8.raw_max() == 255);
}

TEST_CASE("FxpTensor shape and range bookkeeping") {
    FxpTensor t(s8_6, {2, 3});
    CHECK(t.size() == 6);
    CHECK(t.in_range());
    t.data[0] = 1000;  // outside s8.6
    CHECK(!t.in_range());
    CHECK_THROWS_AS(t.as_matrix(4, 2), Error);
}

TEST_CASE("formats validate their invariants") {
    CHECK_THROWS_AS(check_format(FxpFormat{1, 0, true}), Error);
    CHECK_THROWS_AS(check_format(FxpFormat{8, 8, true}), Error);
    CHECK_THROWS_AS(check_format(FxpFormat{40, 8, true}, true), Error);
    CHECK_NOTHROW(check_format(FxpFormat{40, 8, true}, false));  // transient accumulator format
}
