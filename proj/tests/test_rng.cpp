#include <doctest.h>

#include <cmath>

#include "snmpc/rng.hpp"

using namespace snmpc;

TEST_SUITE_BEGIN("rng");

TEST_CASE("same seed reproduces the stream, different seeds diverge") {
    Rng a(123), b(123), c(124);
    bool all_equal = true, any_diff = false;
    for (int i = 0; i < 64; ++i) {
        auto va = a.next_u64(), vb = b.next_u64(), vc = c.next_u64();
        all_equal = all_equal && (va == vb);
        any_diff = any_diff || (va != vc);
    }
    CHECK(all_equal);
    CHECK(any_diff);
}

TEST_CASE("normal draws have roughly standard moments") {
    Rng rng(99);
    const int n = 200000;
    double s1 = 0.0, s2 = 0.0, s4 = 0.0;
    for (int i = 0; i < n; ++i) {
        double z = rng.normal();
        s1 += z;
        s2 += z * z;
        s4 += z * z * z * z;
    }
    double mean = s1 / n, var = s2 / n - mean * mean, kurt = s4 / n;
    CHECK(std::fabs(mean) < 0.01);
    CHECK(var == doctest::Approx(1.0).epsilon(0.02));
    CHECK(kurt == doctest::Approx(3.0).epsilon(0.05));
}

TEST_CASE("uniform stays in [0,1)") {
    Rng rng(5);
    for (int i = 0; i < 10000; ++i) {
        double u = rng.uniform();
        CHECK(u >= 0.0);
        CHECK(u < 1.0);
    }
}

TEST_SUITE_END();
