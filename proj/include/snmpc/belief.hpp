#pragma once

#include "snmpc/linalg.hpp"

// Gaussian beliefs (mean + covariance) and the two scalar primitives the
// chance-constraint reformulation needs: a matrix square root that degrades
// gracefully near the PSD boundary, and the standard-normal quantile.

namespace snmpc {

template <class T>
struct BeliefT {
    Vec<T> mean;
    Mat<T> cov;
};

using GaussianBelief = BeliefT<double>;

template <class T>
struct CholSqrt {
    Mat<T> L;       // lower triangular, L L^T = cov + jitter * I
    double jitter;  // delta actually applied
};

// Lower-Cholesky square root with escalating diagonal jitter
// delta in {0, 1e-12, 1e-10, ..., jitter_max}. Templated so sigma-point
// generation can be differentiated through; the escalation decision is made
// on value parts, so a dual evaluation replays the double one's branch.
// Throws std::runtime_error if no admissible delta succeeds.
template <class T>
CholSqrt<T> cholesky_sqrt(const Mat<T>& cov, double jitter_max) {
    require(cov.rows() == cov.cols(), "cholesky_sqrt: square matrix required");
    require(jitter_max >= 0.0, "cholesky_sqrt: jitter_max must be >= 0");
    CholSqrt<T> out;
    double delta = 0.0;
    for (;;) {
        Mat<T> shifted = cov;
        if (delta > 0.0)
            for (std::size_t i = 0; i < cov.rows(); ++i) shifted(i, i) += delta;
        if (cholesky_lower(shifted, out.L)) {
            out.jitter = delta;
            return out;
        }
        if (delta >= jitter_max) break;
        delta = delta == 0.0 ? 1e-12 : delta * 100.0;
        if (delta > jitter_max) delta = jitter_max;
    }
    throw std::runtime_error("cholesky_sqrt: matrix indefinite beyond jitter budget");
}

// Standard-normal quantile (inverse CDF). |error| <= 1e-9 on
// [1e-8, 1 - 1e-8]; rejects p outside (0, 1).
double gaussian_quantile(double p);

// Standard-normal CDF via erfc (no cancellation in either tail).
double gaussian_cdf(double x);

// Invariant checks for a GaussianBelief: symmetry to 1e-10 per entry and
// positive semidefiniteness under the jitter budget. Throws on violation.
void check_belief(const GaussianBelief& b, double jitter_max = 1e-6);

}  // namespace snmpc
