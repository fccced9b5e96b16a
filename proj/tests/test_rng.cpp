#include <doctest.h>

#include <cmath>
#include <vector>

#include "jscc/rng.hpp"

using namespace jscc;

TEST_CASE("same seed reproduces the stream bitwise") {
    Rng a(1234), b(1234);
    for (int i = 0; i < 100; ++i) {
        CHECK(a.next_u64() == b.next_u64());
    }
    Rng c(1234), d(1234);
    for (int i = 0; i < 100; ++i) {
        CHECK(c.gaussian() == d.gaussian());
        CHECK(c.uniform() == d.uniform());
    }
}

TEST_CASE("derived streams are tag- and index-separated") {
    const std::uint64_t base = 42;
    CHECK(derive_seed(base, "a") != derive_seed(base, "b"));
    CHECK(derive_seed(base, "a", 0) != derive_seed(base, "a", 1));
    CHECK(derive_seed(base, "a", 1, 2) != derive_seed(base, "a", 2, 1));
    CHECK(derive_seed(base, "a") == derive_seed(base, "a"));
    CHECK(derive_seed(1, "a") != derive_seed(2, "a"));
}

TEST_CASE("gaussian moments") {
    Rng rng(7);
    const int n = 200000;
    double sum = 0.0, sum_sq = 0.0;
    for (int i = 0; i < n; ++i) {
        const double g = rng.gaussian();
        sum += g;
        sum_sq += g * g;
    }
    const double mean = sum / n;
    const double var = sum_sq / n - mean * mean;
    CHECK(std::fabs(mean) < 0.01);
    CHECK(std::fabs(var - 1.0) < 0.02);
}

TEST_CASE("uniform range and mean") {
    Rng rng(9);
    double sum = 0.0;
    const int n = 100000;
    for (int i = 0; i < n; ++i) {
        const double u = rng.uniform(0.01, 0.1);
        CHECK(u >= 0.01);
        CHECK(u < 0.1);
        sum += u;
    }
    CHECK(std::fabs(sum / n - 0.055) < 0.001);
}

TEST_CASE("below(n) covers the range uniformly") {
    Rng rng(11);
    std::vector<int> counts(5, 0);
    for (int i = 0; i < 50000; ++i) counts[rng.below(5)]++;
    for (int c : counts) {
        CHECK(c > 9500);
        CHECK(c < 10500);
    }
}
