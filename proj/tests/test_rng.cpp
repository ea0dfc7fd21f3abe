#include <catch2/catch_amalgamated.hpp>

#include "dtrbench/rng.hpp"

using namespace dtr;

TEST_CASE("identical (seed, stream) pairs yield identical sequences") {
    RngStream a(1234, 7), b(1234, 7);
    for (int i = 0; i < 1000; ++i) {
        REQUIRE(a.next_u64() == b.next_u64());
    }
    RngStream c(1234, 7), d(1234, 7);
    for (int i = 0; i < 100; ++i) {
        REQUIRE(c.uniform() == d.uniform());
        REQUIRE(c.normal() == d.normal());
    }
}

TEST_CASE("different streams of a seed are distinct") {
    RngStream a(42, kStreamDynamics), b(42, kStreamNoise);
    int equal = 0;
    for (int i = 0; i < 64; ++i) equal += a.next_u64() == b.next_u64();
    REQUIRE(equal == 0);
}

TEST_CASE("uniform stays in [0,1) and covers the range") {
    RngStream r(9, 0);
    double lo = 1.0, hi = 0.0;
    for (int i = 0; i < 100000; ++i) {
        const double u = r.uniform();
        REQUIRE(u >= 0.0);
        REQUIRE(u < 1.0);
        lo = std::min(lo, u);
        hi = std::max(hi, u);
    }
    REQUIRE(lo < 1e-3);
    REQUIRE(hi > 1.0 - 1e-3);
}

TEST_CASE("uniform_int is unbiased across a small range") {
    RngStream r(5, 0);
    int counts[5] = {0, 0, 0, 0, 0};
    const int n = 100000;
    for (int i = 0; i < n; ++i) ++counts[r.uniform_int(5)];
    for (int c : counts) REQUIRE(std::abs(c / static_cast<double>(n) - 0.2) < 0.01);
}

TEST_CASE("normal moments") {
    RngStream r(17, 3);
    const int n = 200000;
    double sum = 0.0, sq = 0.0;
    for (int i = 0; i < n; ++i) {
        const double x = r.normal();
        sum += x;
        sq += x * x;
    }
    const double mean = sum / n;
    const double var = sq / n - mean * mean;
    REQUIRE(std::abs(mean) < 0.01);
    REQUIRE(std::abs(var - 1.0) < 0.02);
}

TEST_CASE("derive_seed is stable and spreads indices") {
    REQUIRE(derive_seed(1, 0) == derive_seed(1, 0));
    REQUIRE(derive_seed(1, 0) != derive_seed(1, 1));
    REQUIRE(derive_seed(1, 0) != derive_seed(2, 0));
}
