#pragma once

#include <vector>

#include "snmpc/belief.hpp"

// Linear Gaussian chance constraints P(h^T x <= g) >= p and their
// deterministic tightening: slack = g - h^T mean - quantile(p) * sqrt(h^T S h).

namespace snmpc {

struct LinearChanceConstraint {
    VecD h;             // constraint normal (nonzero)
    double g = 0.0;     // upper bound
    double p = 0.5;     // satisfaction probability in (0,1)
    std::size_t stage = 0;  // horizon index 1..N
    bool terminal = false;

    // Cached standard-normal quantile of p.
    double backoff() const { return gaussian_quantile(p); }
};

LinearChanceConstraint make_constraint(VecD h, double g, double p, std::size_t stage,
                                       bool terminal = false);

// Signed slack of the tightened constraint; feasible iff >= 0. Throws if
// h^T cov h is negative beyond -1e-12 (corrupted covariance).
double tighten(const LinearChanceConstraint& c, const GaussianBelief& belief);

// Smoothed variant used inside optimization: sqrt(s + eps) keeps the
// derivative finite at zero covariance. quantile is passed in pre-computed
// so the hot path never iterates.
template <class T>
T tighten_smoothed(const VecD& h, double g, double quantile, const Vec<T>& mean,
                   const Mat<T>& cov, double eps = 1e-12) {
    const std::size_t n = h.size();
    T hx(0.0);
    for (std::size_t i = 0; i < n; ++i) acc_axpy(hx, h[i], mean[i]);
    T quad(0.0);
    for (std::size_t i = 0; i < n; ++i) {
        if (h[i] == 0.0) continue;
        for (std::size_t j = 0; j < n; ++j) {
            if (h[j] == 0.0) continue;
            acc_axpy(quad, h[i] * h[j], cov(i, j));
        }
    }
    if (value_of(quad) < -1e-12)
        throw std::runtime_error("tighten: negative variance h^T S h (corrupted covariance)");
    return g - hx - quantile * sqrt(quad + eps);
}

// The reactor's chance-constraint set: T <= 440 and V <= 750 on stages
// 1..N-1, plus C_A <= 0.5, T <= 440, V <= 750 at the terminal stage, all
// with p = 0.9. Zero rows of the diagonal constraint matrices are dropped.
std::vector<LinearChanceConstraint> build_reactor_constraints(std::size_t horizon,
                                                              double probability = 0.9);

}  // namespace snmpc
