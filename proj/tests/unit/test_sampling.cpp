#include <set>

#include "doctest.h"
#include "helpers.hpp"
#include "hls4pc/sampling.hpp"

using namespace hls4pc;

TEST_CASE("degree-4 Galois sequence matches the hand-derived enumeration") {
    // x^4 + x + 1 from seed 0b0001; full 15-state tour back to the seed.
    const std::uint32_t expected[] = {9, 13, 15, 14, 7, 10, 5, 11, 12, 6, 3, 8, 4, 2, 1};
    Lfsr lfsr(4, 0x9, 1);
    for (std::uint32_t want : expected) CHECK(lfsr.step() == want);
    CHECK(lfsr.state() == 1);
}

TEST_CASE("stepper agrees with the naive update rule") {
    testutil::SplitMix64 rng(3);
    for (int degree : {5, 11, 16, 24, 32}) {
        const std::uint32_t taps = Lfsr::default_taps(degree);
        std::uint32_t seed = static_cast<std::uint32_t>(rng.next()) | 1u;
        if (degree < 32) seed &= (1u << degree) - 1;
        Lfsr lfsr(degree, 0, seed);
        std::uint32_t mirror = seed;
        for (int i = 0; i < 500; ++i) {
            mirror = testutil::oracle_galois_step(mirror, taps);
            CHECK(lfsr.step() == mirror);
        }
    }
}

TEST_CASE("default polynomials reach the maximal period (exhaustive, n <= 16)") {
    for (int degree = 3; degree <= 16; ++degree) {
        Lfsr lfsr(degree, 0, 1);
        const std::uint64_t period = (std::uint64_t{1} << degree) - 1;
        std::vector<bool> visited(static_cast<std::size_t>(period) + 1, false);
        visited[1] = true;
        std::uint64_t steps = 0;
        do {
            const std::uint32_t s = lfsr.step();
            REQUIRE(s != 0);
            ++steps;
            if (s != 1) {
                REQUIRE(!visited[s]);  // no state revisited inside one period
                visited[s] = true;
            }
        } while (lfsr.state() != 1 && steps <= period);
        CHECK(steps == period);
    }
}

TEST_CASE("equal seed and taps give identical sequences") {
    Lfsr a(8, 0xB8, 42);
    Lfsr b(8, 0xB8, 42);
    for (int i = 0; i < 300; ++i) CHECK(a.step() == b.step());
}

TEST_CASE("zero seed and bad degrees are rejected") {
    CHECK_THROWS_AS(Lfsr(4, 0x9, 0), Error);
    CHECK_THROWS_AS(Lfsr(4, 0x9, 16), Error);  // masked to zero
    CHECK_THROWS_AS(Lfsr(2, 0, 1), Error);
    CHECK_THROWS_AS(Lfsr(33, 0, 1), Error);
}

TEST_CASE("urs_sample matches the hand-stepped residues") {
    // States 9, 13, 15 -> mod 10 -> 9, 3, 5.
    Lfsr lfsr(4, 0x9, 1);
    const SampleSet set = urs_sample(lfsr, 10, 3);
    CHECK(set.indices == std::vector<std::int32_t>{9, 3, 5});
}

TEST_CASE("urs_sample with numSamp == N is a permutation") {
    Lfsr lfsr(8, 0, 5);
    const SampleSet set = urs_sample(lfsr, 100, 100);
    std::set<std::int32_t> unique(set.indices.begin(), set.indices.end());
    CHECK(unique.size() == 100);
    CHECK(*unique.begin() == 0);
    CHECK(*unique.rbegin() == 99);
}

TEST_CASE("urs_sample is deterministic and coordinate-free") {
    Lfsr a(16, 0, 12345);
    Lfsr b(16, 0, 12345);
    const SampleSet sa = urs_sample(a, 512, 256);
    const SampleSet sb = urs_sample(b, 512, 256);
    CHECK(sa.indices == sb.indices);
    std::set<std::int32_t> unique(sa.indices.begin(), sa.indices.end());
    CHECK(unique.size() == 256);
}

TEST_CASE("urs_sample covers every index across many seeds") {
    const int n = 48;
    std::vector<int> hits(n, 0);
    for (std::uint32_t seed = 1; seed <= 1000; ++seed) {
        Lfsr lfsr(12, 0, seed);
        for (std::int32_t idx : urs_sample(lfsr, n, 8).indices) hits[static_cast<std::size_t>(idx)]++;
    }
    for (int h : hits) CHECK(h > 0);
}

TEST_CASE("urs_sample validates preconditions") {
    Lfsr small(4, 0, 1);
    CHECK_THROWS_AS(urs_sample(small, 100, 10), Error);  // 2^4-1 < 100
    Lfsr ok(8, 0, 1);
    CHECK_THROWS_AS(urs_sample(ok, 10, 11), Error);
}

TEST_CASE("fps_sample picks extremes on a line") {
    PointCloud cloud;
    cloud.data.resize(10, 3);
    cloud.data.setZero();
    for (int i = 0; i < 10; ++i) cloud.data(i, 0) = i;

    CHECK(fps_sample(cloud, 2, 0).indices == std::vector<std::int32_t>{0, 9});
    // Points 4 and 5 tie at min-distance 16; the lower index wins.
    CHECK(fps_sample(cloud, 3, 0).indices == std::vector<std::int32_t>{0, 9, 4});
    CHECK(fps_sample(cloud, 10, 0).size() == 10);
}

TEST_CASE("fps_sample greedy property holds per step") {
    testutil::SplitMix64 rng(31);
    const PointCloud cloud = testutil::grid_cloud(rng, 40);
    const SampleSet set = fps_sample(cloud, 12, 0);

    auto min_dist_to = [&](std::int64_t p, std::size_t count) {
        double best = std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < count; ++j) {
            best = std::min(best, (cloud.xyz().row(p) - cloud.xyz().row(set.indices[j])).squaredNorm());
        }
        return best;
    };
    for (std::size_t step = 1; step < set.indices.size(); ++step) {
        const double chosen = min_dist_to(set.indices[step], step);
        for (std::int64_t q = 0; q < cloud.num_points(); ++q) {
            CHECK(chosen >= min_dist_to(q, step) - 1e-12);
        }
    }
}
