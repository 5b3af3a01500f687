#pragma once

#include <cstddef>
#include <string_view>

// Dense double-precision vector kernels.
//
// Every kernel exists as a scalar reference implementation and, on x86-64,
// an AVX2+FMA variant. The table returned by active() is resolved once at
// startup from CPU capabilities; SNMPC_KERNELS=scalar|avx2 in the
// environment overrides the choice. The AVX2 variants use FMA, so results
// may differ from the reference in the last bits; the equivalence tests
// bound that drift.

namespace snmpc::kernels {

struct Table {
    void (*fill)(std::size_t n, double a, double* y);
    void (*copy)(std::size_t n, const double* x, double* y);
    void (*scale)(std::size_t n, double a, double* y);
    void (*copy_scaled)(std::size_t n, double a, const double* x, double* y);
    void (*axpy)(std::size_t n, double a, const double* x, double* y);
    void (*add)(std::size_t n, const double* x, const double* y, double* z);
    void (*sub)(std::size_t n, const double* x, const double* y, double* z);
    // z = a*x + b*y
    void (*lincomb)(std::size_t n, double a, const double* x, double b, const double* y,
                    double* z);
    // z += a*x + b*y
    void (*acc_lincomb)(std::size_t n, double a, const double* x, double b, const double* y,
                        double* z);
    double (*dot)(std::size_t n, const double* x, const double* y);
    double (*amax)(std::size_t n, const double* x);
};

namespace scalar {
void fill(std::size_t n, double a, double* y);
void copy(std::size_t n, const double* x, double* y);
void scale(std::size_t n, double a, double* y);
void copy_scaled(std::size_t n, double a, const double* x, double* y);
void axpy(std::size_t n, double a, const double* x, double* y);
void add(std::size_t n, const double* x, const double* y, double* z);
void sub(std::size_t n, const double* x, const double* y, double* z);
void lincomb(std::size_t n, double a, const double* x, double b, const double* y, double* z);
void acc_lincomb(std::size_t n, double a, const double* x, double b, const double* y, double* z);
double dot(std::size_t n, const double* x, const double* y);
double amax(std::size_t n, const double* x);
const Table& table();
}  // namespace scalar

#if defined(SNMPC_HAVE_AVX2)
namespace avx2 {
void copy_scaled(std::size_t n, double a, const double* x, double* y);
void axpy(std::size_t n, double a, const double* x, double* y);
void add(std::size_t n, const double* x, const double* y, double* z);
void sub(std::size_t n, const double* x, const double* y, double* z);
void lincomb(std::size_t n, double a, const double* x, double b, const double* y, double* z);
void acc_lincomb(std::size_t n, double a, const double* x, double b, const double* y, double* z);
double dot(std::size_t n, const double* x, const double* y);
const Table& table();
}  // namespace avx2
#endif

// Dispatched table (CPU-resolved, env-overridable).
const Table& active();

// Name of the backend behind active(): "scalar" or "avx2".
std::string_view active_backend();

}  // namespace snmpc::kernels
