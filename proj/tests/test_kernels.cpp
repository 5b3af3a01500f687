#include <doctest.h>

#include <cmath>
#include <vector>

#include "snmpc/kernels.hpp"
#include "snmpc/rng.hpp"

using namespace snmpc;

namespace {

std::vector<double> random_vec(Rng& rng, std::size_t n, double scale = 1.0) {
    std::vector<double> v(n);
    for (auto& x : v) x = scale * (2.0 * rng.uniform() - 1.0);
    return v;
}

// Sizes straddling the vector width and remainder paths.
const std::size_t kSizes[] = {0, 1, 3, 4, 5, 8, 9, 17, 64, 1001};

void check_close(const std::vector<double>& a, const std::vector<double>& b, double tol) {
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == doctest::Approx(b[i]).epsilon(tol));
}

}  // namespace

TEST_SUITE_BEGIN("kernels");

TEST_CASE("dispatched kernels match the scalar reference") {
    Rng rng(42);
    const auto& ref = kernels::scalar::table();
    const auto& act = kernels::active();
    for (std::size_t n : kSizes) {
        auto x = random_vec(rng, n, 3.0);
        auto y = random_vec(rng, n, 2.0);
        double a = 1.7, b = -0.3;

        auto z1 = y, z2 = y;
        ref.axpy(n, a, x.data(), z1.data());
        act.axpy(n, a, x.data(), z2.data());
        check_close(z1, z2, 1e-14);

        std::vector<double> w1(n), w2(n);
        ref.lincomb(n, a, x.data(), b, y.data(), w1.data());
        act.lincomb(n, a, x.data(), b, y.data(), w2.data());
        check_close(w1, w2, 1e-14);

        auto acc1 = y, acc2 = y;
        ref.acc_lincomb(n, a, x.data(), b, y.data(), acc1.data());
        act.acc_lincomb(n, a, x.data(), b, y.data(), acc2.data());
        check_close(acc1, acc2, 1e-14);

        std::vector<double> s1(n), s2(n);
        ref.copy_scaled(n, a, x.data(), s1.data());
        act.copy_scaled(n, a, x.data(), s2.data());
        check_close(s1, s2, 1e-14);

        std::vector<double> d1(n), d2(n);
        ref.add(n, x.data(), y.data(), d1.data());
        act.add(n, x.data(), y.data(), d2.data());
        check_close(d1, d2, 1e-15);
        ref.sub(n, x.data(), y.data(), d1.data());
        act.sub(n, x.data(), y.data(), d2.data());
        check_close(d1, d2, 1e-15);

        double dot_ref = ref.dot(n, x.data(), y.data());
        double dot_act = act.dot(n, x.data(), y.data());
        double mag = 0.0;
        for (std::size_t i = 0; i < n; ++i) mag += std::fabs(x[i] * y[i]);
        CHECK(std::fabs(dot_ref - dot_act) <= 1e-14 * (1.0 + mag));
    }
}

#if defined(SNMPC_HAVE_AVX2)
TEST_CASE("avx2 variants match the scalar reference when available") {
    if (kernels::active_backend() != "avx2") return;  // CPU without AVX2
    Rng rng(7);
    for (std::size_t n : kSizes) {
        auto x = random_vec(rng, n);
        auto y = random_vec(rng, n);
        auto z1 = y, z2 = y;
        kernels::scalar::axpy(n, 0.9, x.data(), z1.data());
        kernels::avx2::axpy(n, 0.9, x.data(), z2.data());
        check_close(z1, z2, 1e-14);
        double d1 = kernels::scalar::dot(n, x.data(), y.data());
        double d2 = kernels::avx2::dot(n, x.data(), y.data());
        CHECK(std::fabs(d1 - d2) <= 1e-13 * (1.0 + std::fabs(d1)));
    }
}
#endif

TEST_CASE("backend reports a known name") {
    auto name = kernels::active_backend();
    CHECK((name == "scalar" || name == "avx2"));
}

TEST_SUITE_END();
