#include <doctest.h>

#include <cmath>
#include <functional>

#include "snmpc/dual.hpp"

using namespace snmpc;

namespace {

// Central-difference derivative of a scalar chain in one seeded input.
double fd_derivative(const std::function<double(double)>& f, double x, double h = 1e-6) {
    return (f(x + h) - f(x - h)) / (2.0 * h);
}

}  // namespace

TEST_SUITE_BEGIN("dual");

TEST_CASE("arithmetic chain derivatives match finite differences") {
    auto chain = [](auto x) {
        auto a = x * x + 3.0;
        auto b = exp(x * 0.1) / (a - 1.0);
        auto c = sqrt(a) - log(a) * b;
        return c * c + 2.0 * c - x / a;
    };
    for (double x0 : {0.3, 1.7, -2.2}) {
        Dual x = Dual::seed(x0, 0);
        Dual y = chain(x);
        double ref = chain(x0);
        CHECK(y.value() == doctest::Approx(ref).epsilon(1e-14));
        double fd = fd_derivative([&](double t) { return chain(t); }, x0);
        CHECK(y.deriv(0) == doctest::Approx(fd).epsilon(1e-7));
    }
}

TEST_CASE("two-seed partial derivatives") {
    auto f = [](auto x, auto y) { return x * y + sqrt(x / y); };
    double x0 = 2.0, y0 = 0.7;
    Dual x = Dual::seed(x0, 0);
    Dual y = Dual::seed(y0, 1);
    Dual z = f(x, y);
    double fx = fd_derivative([&](double t) { return f(t, y0); }, x0);
    double fy = fd_derivative([&](double t) { return f(x0, t); }, y0);
    CHECK(z.deriv(0) == doctest::Approx(fx).epsilon(1e-8));
    CHECK(z.deriv(1) == doctest::Approx(fy).epsilon(1e-8));
}

TEST_CASE("zero-tail storage stays short until later seeds mix in") {
    Dual a = Dual::seed(1.0, 0);  // stores 1 component
    Dual b = Dual::seed(2.0, 5);  // stores 6
    Dual c = a * 3.0 + 1.0;
    CHECK(c.tangent_size() == 1);
    CHECK(c.deriv(5) == 0.0);
    Dual d = c * b;
    CHECK(d.tangent_size() == 6);
    CHECK(d.deriv(0) == doctest::Approx(3.0 * 2.0));
    CHECK(d.deriv(5) == doctest::Approx(c.value()));
    CHECK(d.deriv(3) == 0.0);
}

TEST_CASE("constants carry no tangent") {
    Dual a(4.0);
    CHECK(a.tangent_size() == 0);
    Dual b = a * a + 1.0;
    CHECK(b.tangent_size() == 0);
    CHECK(b.value() == doctest::Approx(17.0));
}

TEST_CASE("fmadd and axpy accumulate value and tangent") {
    Dual x = Dual::seed(1.5, 0);
    Dual y = Dual::seed(-0.5, 1);
    Dual acc(2.0);
    acc.fmadd(0.25, x, y);  // acc += 0.25*x*y
    CHECK(acc.value() == doctest::Approx(2.0 + 0.25 * 1.5 * -0.5));
    CHECK(acc.deriv(0) == doctest::Approx(0.25 * -0.5));
    CHECK(acc.deriv(1) == doctest::Approx(0.25 * 1.5));
    acc.axpy(2.0, x);
    CHECK(acc.deriv(0) == doctest::Approx(0.25 * -0.5 + 2.0));
}

TEST_CASE("division by dual") {
    double x0 = 0.8, y0 = 2.5;
    Dual x = Dual::seed(x0, 0);
    Dual y = Dual::seed(y0, 1);
    Dual z = x / y;
    CHECK(z.value() == doctest::Approx(x0 / y0));
    CHECK(z.deriv(0) == doctest::Approx(1.0 / y0));
    CHECK(z.deriv(1) == doctest::Approx(-x0 / (y0 * y0)));
}

TEST_SUITE_END();
