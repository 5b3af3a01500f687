#include "snmpc/linalg.hpp"

#include <cmath>
#include <cstdlib>

namespace snmpc {

LuFactor::LuFactor(const MatD& A) : lu_(A), piv_(A.rows()) {
    require(A.rows() == A.cols(), "lu: square matrix required");
    const std::size_t n = lu_.rows();
    const auto& k = kernels::active();
    for (std::size_t j = 0; j < n; ++j) {
        std::size_t p = j;
        double best = std::fabs(lu_(j, j));
        for (std::size_t i = j + 1; i < n; ++i) {
            double v = std::fabs(lu_(i, j));
            if (v > best) {
                best = v;
                p = i;
            }
        }
        piv_[j] = p;
        if (best == 0.0) {
            singular_ = true;
            continue;
        }
        if (p != j)
            for (std::size_t c = 0; c < n; ++c) std::swap(lu_(j, c), lu_(p, c));
        const double inv = 1.0 / lu_(j, j);
        for (std::size_t i = j + 1; i < n; ++i) {
            double l = lu_(i, j) * inv;
            lu_(i, j) = l;
            if (l != 0.0) k.axpy(n - j - 1, -l, lu_.row(j) + j + 1, lu_.row(i) + j + 1);
        }
    }
}

void LuFactor::solve(VecD& b) const {
    require(!singular_, "lu: singular matrix");
    const std::size_t n = lu_.rows();
    require(b.size() == n, "lu: rhs size mismatch");
    // Rows were swapped wholesale during factorization, so permute first.
    for (std::size_t j = 0; j < n; ++j)
        if (piv_[j] != j) std::swap(b[j], b[piv_[j]]);
    for (std::size_t j = 0; j < n; ++j)
        for (std::size_t i = j + 1; i < n; ++i) b[i] -= lu_(i, j) * b[j];
    for (std::size_t i = n; i-- > 0;) {
        double s = b[i];
        for (std::size_t j = i + 1; j < n; ++j) s -= lu_(i, j) * b[j];
        b[i] = s / lu_(i, i);
    }
}

void LuFactor::solve_rows(MatD& B) const {
    require(!singular_, "lu: singular matrix");
    const std::size_t n = lu_.rows();
    require(B.rows() == n, "lu: rhs rows mismatch");
    const std::size_t w = B.cols();
    const auto& k = kernels::active();
    for (std::size_t j = 0; j < n; ++j)
        if (piv_[j] != j)
            for (std::size_t c = 0; c < w; ++c) std::swap(B(j, c), B(piv_[j], c));
    for (std::size_t j = 0; j < n; ++j)
        for (std::size_t i = j + 1; i < n; ++i)
            if (lu_(i, j) != 0.0) k.axpy(w, -lu_(i, j), B.row(j), B.row(i));
    for (std::size_t i = n; i-- > 0;) {
        for (std::size_t j = i + 1; j < n; ++j)
            if (lu_(i, j) != 0.0) k.axpy(w, -lu_(i, j), B.row(j), B.row(i));
        k.scale(w, 1.0 / lu_(i, i), B.row(i));
    }
}

VecD spd_solve(const MatD& A, const VecD& b) {
    MatD L;
    if (!cholesky_lower(A, L)) throw std::runtime_error("spd_solve: matrix not positive definite");
    const std::size_t n = A.rows();
    VecD x = b;
    for (std::size_t i = 0; i < n; ++i) {
        double s = x[i];
        for (std::size_t j = 0; j < i; ++j) s -= L(i, j) * x[j];
        x[i] = s / L(i, i);
    }
    for (std::size_t i = n; i-- > 0;) {
        double s = x[i];
        for (std::size_t j = i + 1; j < n; ++j) s -= L(j, i) * x[j];
        x[i] = s / L(i, i);
    }
    return x;
}

// ---------------------------------------------------------------------------
// Bunch-Kaufman LDL^T, lower storage, partial pivoting. Follows the classic
// dsytf2 recurrence; pivots are recorded LAPACK-style (ipiv > 0 for 1x1,
// a negative pair for 2x2).

namespace {
constexpr double kBkAlpha = 0.6403882032022076;  // (1 + sqrt(17)) / 8
}

LdltFactor::LdltFactor(const MatD& A) : a_(A), n_(A.rows()) {
    require(A.rows() == A.cols(), "ldlt: square matrix required");
    piv_.assign(n_, 0);
    std::size_t k = 0;
    while (k < n_) {
        double absakk = std::fabs(a_(k, k));
        std::size_t imax = k;
        double colmax = 0.0;
        for (std::size_t i = k + 1; i < n_; ++i) {
            double v = std::fabs(a_(i, k));
            if (v > colmax) {
                colmax = v;
                imax = i;
            }
        }
        std::size_t kp = k;
        bool two_by_two = false;
        if (std::max(absakk, colmax) == 0.0) {
            singular_ = true;
            piv_[k] = static_cast<int>(k) + 1;
            ++k;
            continue;
        }
        if (absakk < kBkAlpha * colmax) {
            double rowmax = 0.0;
            for (std::size_t j = k; j < n_; ++j) {
                if (j == imax) continue;
                double v = j < imax ? std::fabs(a_(imax, j)) : std::fabs(a_(j, imax));
                rowmax = std::max(rowmax, v);
            }
            if (absakk * rowmax >= kBkAlpha * colmax * colmax) {
                kp = k;
            } else if (std::fabs(a_(imax, imax)) >= kBkAlpha * rowmax) {
                kp = imax;
            } else {
                kp = imax;
                two_by_two = true;
            }
        }

        const std::size_t kk = two_by_two ? k + 1 : k;  // row/col that kp swaps with
        if (kp != kk) {
            // Symmetric interchange of rows/cols kk and kp, restricted to the
            // trailing submatrix A(k:, k:); the solve replays the pivots
            // interleaved, so earlier L columns must stay untouched.
            for (std::size_t j = k; j < kk; ++j) std::swap(a_(kk, j), a_(kp, j));
            for (std::size_t j = kk + 1; j < kp; ++j) std::swap(a_(j, kk), a_(kp, j));
            for (std::size_t i = kp + 1; i < n_; ++i) std::swap(a_(i, kk), a_(i, kp));
            std::swap(a_(kk, kk), a_(kp, kp));
        }

        if (!two_by_two) {
            const double d = a_(k, k);
            if (d == 0.0) {
                singular_ = true;
                piv_[k] = static_cast<int>(kp) + 1;
                ++k;
                continue;
            }
            const double inv = 1.0 / d;
            // Rank-1 trailing update with the original column, then scale the
            // column into multipliers.
            for (std::size_t i = k + 1; i < n_; ++i) {
                const double l = a_(i, k) * inv;
                for (std::size_t j = k + 1; j <= i; ++j) a_(i, j) -= l * a_(j, k);
            }
            for (std::size_t i = k + 1; i < n_; ++i) a_(i, k) *= inv;
            piv_[k] = static_cast<int>(kp) + 1;
            ++k;
        } else {
            const double d11 = a_(k, k), d21 = a_(k + 1, k), d22 = a_(k + 1, k + 1);
            const double det = d11 * d22 - d21 * d21;
            if (det == 0.0) {
                singular_ = true;
                piv_[k] = piv_[k + 1] = -(static_cast<int>(kp) + 1);
                k += 2;
                continue;
            }
            const double inv = 1.0 / det;
            // Rank-2 trailing update with the original columns, then replace
            // them by the multipliers.
            for (std::size_t i = k + 2; i < n_; ++i) {
                const double w1 = a_(i, k), w2 = a_(i, k + 1);
                const double l1 = inv * (d22 * w1 - d21 * w2);
                const double l2 = inv * (d11 * w2 - d21 * w1);
                for (std::size_t j = k + 2; j <= i; ++j)
                    a_(i, j) -= l1 * a_(j, k) + l2 * a_(j, k + 1);
            }
            for (std::size_t i = k + 2; i < n_; ++i) {
                const double w1 = a_(i, k), w2 = a_(i, k + 1);
                a_(i, k) = inv * (d22 * w1 - d21 * w2);
                a_(i, k + 1) = inv * (d11 * w2 - d21 * w1);
            }
            piv_[k] = piv_[k + 1] = -(static_cast<int>(kp) + 1);
            k += 2;
        }
    }
}

void LdltFactor::inertia(std::size_t& pos, std::size_t& neg, std::size_t& zero) const {
    pos = neg = zero = 0;
    std::size_t k = 0;
    while (k < n_) {
        if (piv_[k] > 0) {
            double d = a_(k, k);
            if (d > 0.0)
                ++pos;
            else if (d < 0.0)
                ++neg;
            else
                ++zero;
            ++k;
        } else {
            // A 2x2 pivot chosen by Bunch-Kaufman is always indefinite.
            ++pos;
            ++neg;
            k += 2;
        }
    }
}

void LdltFactor::solve(VecD& b) const {
    require(!singular_, "ldlt: singular matrix");
    require(b.size() == n_, "ldlt: rhs size mismatch");
    // Forward: P^T b, then L^{-1}.
    std::size_t k = 0;
    while (k < n_) {
        if (piv_[k] > 0) {
            std::size_t kp = static_cast<std::size_t>(piv_[k]) - 1;
            if (kp != k) std::swap(b[k], b[kp]);
            for (std::size_t i = k + 1; i < n_; ++i) b[i] -= a_(i, k) * b[k];
            ++k;
        } else {
            std::size_t kp = static_cast<std::size_t>(-piv_[k]) - 1;
            if (kp != k + 1) std::swap(b[k + 1], b[kp]);
            for (std::size_t i = k + 2; i < n_; ++i)
                b[i] -= a_(i, k) * b[k] + a_(i, k + 1) * b[k + 1];
            k += 2;
        }
    }
    // Diagonal solve.
    k = 0;
    while (k < n_) {
        if (piv_[k] > 0) {
            b[k] /= a_(k, k);
            ++k;
        } else {
            const double d11 = a_(k, k), d21 = a_(k + 1, k), d22 = a_(k + 1, k + 1);
            const double det = d11 * d22 - d21 * d21;
            const double b1 = b[k], b2 = b[k + 1];
            b[k] = (d22 * b1 - d21 * b2) / det;
            b[k + 1] = (d11 * b2 - d21 * b1) / det;
            k += 2;
        }
    }
    // Backward: L^{-T}, then P.
    k = n_;
    while (k > 0) {
        --k;
        bool two = piv_[k] < 0;
        std::size_t kstart = two ? k - 1 : k;
        for (std::size_t kk = kstart; kk <= k; ++kk) {
            double s = b[kk];
            for (std::size_t i = k + 1; i < n_; ++i) s -= a_(i, kk) * b[i];
            b[kk] = s;
        }
        if (two) {
            std::size_t kp = static_cast<std::size_t>(-piv_[k]) - 1;
            if (kp != k) std::swap(b[k], b[kp]);
            k = kstart;
        } else {
            std::size_t kp = static_cast<std::size_t>(piv_[k]) - 1;
            if (kp != k) std::swap(b[k], b[kp]);
        }
    }
}

}  // namespace snmpc
