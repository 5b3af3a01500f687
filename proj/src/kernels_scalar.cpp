#include "snmpc/kernels.hpp"

#include <cmath>

namespace snmpc::kernels::scalar {

void fill(std::size_t n, double a, double* y) {
    for (std::size_t i = 0; i < n; ++i) y[i] = a;
}

void copy(std::size_t n, const double* x, double* y) {
    for (std::size_t i = 0; i < n; ++i) y[i] = x[i];
}

void scale(std::size_t n, double a, double* y) {
    for (std::size_t i = 0; i < n; ++i) y[i] *= a;
}

void copy_scaled(std::size_t n, double a, const double* x, double* y) {
    for (std::size_t i = 0; i < n; ++i) y[i] = a * x[i];
}

void axpy(std::size_t n, double a, const double* x, double* y) {
    for (std::size_t i = 0; i < n; ++i) y[i] += a * x[i];
}

void add(std::size_t n, const double* x, const double* y, double* z) {
    for (std::size_t i = 0; i < n; ++i) z[i] = x[i] + y[i];
}

void sub(std::size_t n, const double* x, const double* y, double* z) {
    for (std::size_t i = 0; i < n; ++i) z[i] = x[i] - y[i];
}

void lincomb(std::size_t n, double a, const double* x, double b, const double* y, double* z) {
    for (std::size_t i = 0; i < n; ++i) z[i] = a * x[i] + b * y[i];
}

void acc_lincomb(std::size_t n, double a, const double* x, double b, const double* y, double* z) {
    for (std::size_t i = 0; i < n; ++i) z[i] += a * x[i] + b * y[i];
}

double dot(std::size_t n, const double* x, const double* y) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += x[i] * y[i];
    return s;
}

double amax(std::size_t n, const double* x) {
    double m = 0.0;
    for (std::size_t i = 0; i < n; ++i) m = std::max(m, std::fabs(x[i]));
    return m;
}

const Table& table() {
    static const Table t{fill, copy, scale, copy_scaled, axpy, add, sub,
                         lincomb, acc_lincomb, dot, amax};
    return t;
}

}  // namespace snmpc::kernels::scalar
