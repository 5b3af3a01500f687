#pragma once

#include <cstddef>
#include <initializer_list>
#include <stdexcept>
#include <string>
#include <vector>

#include "snmpc/dual.hpp"

// Small dense row-major matrices and vectors, templated on the scalar so the
// UKF/collocation chain can run on plain doubles or on AD duals. Problem
// dimensions here are tiny (state dim 5, a few hundred NLP variables at
// most); factorizations are straightforward dense algorithms.

namespace snmpc {

inline void require(bool ok, const char* msg) {
    if (!ok) throw std::invalid_argument(msg);
}

template <class T>
class Vec {
public:
    Vec() = default;
    explicit Vec(std::size_t n) : x_(n) {}
    Vec(std::size_t n, const T& v) : x_(n, v) {}
    Vec(std::initializer_list<T> il) : x_(il) {}

    std::size_t size() const { return x_.size(); }
    T& operator[](std::size_t i) { return x_[i]; }
    const T& operator[](std::size_t i) const { return x_[i]; }
    T* data() { return x_.data(); }
    const T* data() const { return x_.data(); }
    auto begin() { return x_.begin(); }
    auto end() { return x_.end(); }
    auto begin() const { return x_.begin(); }
    auto end() const { return x_.end(); }

private:
    std::vector<T> x_;
};

template <class T>
class Mat {
public:
    Mat() = default;
    Mat(std::size_t r, std::size_t c) : r_(r), c_(c), a_(r * c) {}
    Mat(std::size_t r, std::size_t c, const T& v) : r_(r), c_(c), a_(r * c, v) {}

    std::size_t rows() const { return r_; }
    std::size_t cols() const { return c_; }
    T& operator()(std::size_t i, std::size_t j) { return a_[i * c_ + j]; }
    const T& operator()(std::size_t i, std::size_t j) const { return a_[i * c_ + j]; }
    T* row(std::size_t i) { return a_.data() + i * c_; }
    const T* row(std::size_t i) const { return a_.data() + i * c_; }
    T* data() { return a_.data(); }
    const T* data() const { return a_.data(); }

    static Mat identity(std::size_t n) {
        Mat m(n, n, T(0.0));
        for (std::size_t i = 0; i < n; ++i) m(i, i) = T(1.0);
        return m;
    }

    static Mat diag(const Vec<T>& d) {
        Mat m(d.size(), d.size(), T(0.0));
        for (std::size_t i = 0; i < d.size(); ++i) m(i, i) = d[i];
        return m;
    }

private:
    std::size_t r_ = 0, c_ = 0;
    std::vector<T> a_;
};

using VecD = Vec<double>;
using MatD = Mat<double>;

template <class T>
Vec<T> matvec(const Mat<T>& A, const Vec<T>& x) {
    require(A.cols() == x.size(), "matvec: dimension mismatch");
    Vec<T> y(A.rows(), T(0.0));
    for (std::size_t i = 0; i < A.rows(); ++i) {
        T s(0.0);
        for (std::size_t j = 0; j < A.cols(); ++j) s += A(i, j) * x[j];
        y[i] = std::move(s);
    }
    return y;
}

template <class T>
Mat<T> matmul(const Mat<T>& A, const Mat<T>& B) {
    require(A.cols() == B.rows(), "matmul: dimension mismatch");
    Mat<T> C(A.rows(), B.cols(), T(0.0));
    for (std::size_t i = 0; i < A.rows(); ++i)
        for (std::size_t k = 0; k < A.cols(); ++k) {
            const T& a = A(i, k);
            for (std::size_t j = 0; j < B.cols(); ++j) C(i, j) += a * B(k, j);
        }
    return C;
}

template <class T>
Mat<T> transpose(const Mat<T>& A) {
    Mat<T> B(A.cols(), A.rows());
    for (std::size_t i = 0; i < A.rows(); ++i)
        for (std::size_t j = 0; j < A.cols(); ++j) B(j, i) = A(i, j);
    return B;
}

// A <- (A + A^T)/2.
template <class T>
void symmetrize(Mat<T>& A) {
    for (std::size_t i = 0; i < A.rows(); ++i)
        for (std::size_t j = i + 1; j < A.cols(); ++j) {
            T m = (A(i, j) + A(j, i)) * 0.5;
            A(j, i) = m;
            A(i, j) = std::move(m);
        }
}

// A += w * u * v^T. The scalar loop mirrors the dual overload operation for
// operation so the value parts of a dual evaluation are bit-identical to a
// plain double evaluation of the same chain.
inline void outer_acc(Mat<double>& A, double w, const Vec<double>& u, const Vec<double>& v) {
    for (std::size_t i = 0; i < u.size(); ++i) {
        double* row = A.row(i);
        for (std::size_t j = 0; j < v.size(); ++j) row[j] += w * u[i] * v[j];
    }
}

inline void outer_acc(Mat<Dual>& A, double w, const Vec<Dual>& u, const Vec<Dual>& v) {
    for (std::size_t i = 0; i < u.size(); ++i)
        for (std::size_t j = 0; j < v.size(); ++j) A(i, j).fmadd(w, u[i], v[j]);
}

inline double sqrt(double x) { return std::sqrt(x); }  // ADL helper for templates

// Plain lower Cholesky. Returns false (leaving L unspecified) on a
// non-positive pivot; pivot checks look at value parts only so a dual-number
// factorization makes the same branch decisions as the double one.
template <class T>
bool cholesky_lower(const Mat<T>& A, Mat<T>& L) {
    std::size_t n = A.rows();
    require(A.cols() == n, "cholesky: square matrix required");
    L = Mat<T>(n, n, T(0.0));
    for (std::size_t j = 0; j < n; ++j) {
        T s = A(j, j);
        for (std::size_t k = 0; k < j; ++k) s -= L(j, k) * L(j, k);
        if (!(value_of(s) > 0.0)) return false;
        L(j, j) = sqrt(s);
        for (std::size_t i = j + 1; i < n; ++i) {
            T t = A(i, j);
            for (std::size_t k = 0; k < j; ++k) t -= L(i, k) * L(j, k);
            L(i, j) = t / L(j, j);
        }
    }
    return true;
}

// Dense LU with partial pivoting (doubles only; used by the collocation
// Newton solves and the measurement update).
class LuFactor {
public:
    explicit LuFactor(const MatD& A);

    bool singular() const { return singular_; }

    //  Solve A x = b in place.
    void solve(VecD& b) const;

    // Solve A X = B in place where B is n x w row-major; row operations are
    // contiguous, so the multi-RHS tangent solves vectorize.
    void solve_rows(MatD& B) const;

private:
    MatD lu_;
    std::vector<std::size_t> piv_;
    bool singular_ = false;
};

// Symmetric positive-definite solve via Cholesky; throws on failure.
VecD spd_solve(const MatD& A, const VecD& b);

// Bunch-Kaufman LDL^T for symmetric indefinite systems (doubles only; the
// interior-point KKT solve). Inertia is reported so the solver can correct
// a wrong-curvature system by regularization.
class LdltFactor {
public:
    explicit LdltFactor(const MatD& A);

    bool singular() const { return singular_; }
    // (n_pos, n_neg, n_zero) of the factored matrix.
    void inertia(std::size_t& pos, std::size_t& neg, std::size_t& zero) const;
    void solve(VecD& b) const;

private:
    MatD a_;                       // packed factors (lower)
    std::vector<int> piv_;         // LAPACK-style ipiv
    std::size_t n_ = 0;
    bool singular_ = false;
};

}  // namespace snmpc
