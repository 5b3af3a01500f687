#pragma once

#include <vector>

#include "snmpc/belief.hpp"

// Unscented Kalman filter with additive noise. Sigma-point generation and
// prediction are templated on the scalar so the open-loop belief recursion
// can be differentiated; the measurement side runs once per sampling instant
// on plain doubles.

namespace snmpc {

inline constexpr double kUkfJitterMax = 1e-6;

struct UTConfig {
    double alpha = 1.0;
    double beta = 0.0;
    double kappa = 0.0;
    std::size_t L = 0;  // sigma-point dimension, set to n_x

    double lambda() const {
        return alpha * alpha * (static_cast<double>(L) + kappa) - static_cast<double>(L);
    }
    // L + lambda must be positive for a real sigma-point spread.
    bool valid() const { return L > 0 && static_cast<double>(L) + lambda() > 0.0; }
};

struct UTWeights {
    VecD mean_w;  // 2L+1
    VecD cov_w;   // 2L+1
};

UTWeights ut_weights(const UTConfig& cfg);

struct NoiseModel {
    MatD process_cov;      // n_x x n_x
    MatD measurement_cov;  // n_y x n_y
};

template <class T>
struct SigmaPointsT {
    Mat<T> points;        // n_x rows, 2L+1 columns; column 0 is the mean
    double jitter = 0.0;  // jitter spent on the covariance square root
};

using SigmaPoints = SigmaPointsT<double>;

struct MeasurementStats {
    VecD y_mean;
    MatD yy_cov;  // measurement covariance incl. noise
    MatD xy_cov;  // state-measurement cross covariance
};

template <class T>
SigmaPointsT<T> sigma_points(const BeliefT<T>& belief, const UTConfig& cfg,
                             double jitter_max = kUkfJitterMax) {
    const std::size_t n = belief.mean.size();
    require(cfg.valid(), "sigma_points: invalid UT configuration (L + lambda <= 0)");
    require(cfg.L == n, "sigma_points: cfg.L must equal the state dimension");
    require(belief.cov.rows() == n && belief.cov.cols() == n, "sigma_points: cov shape");

    auto chol = cholesky_sqrt(belief.cov, jitter_max);
    const double spread = std::sqrt(static_cast<double>(cfg.L) + cfg.lambda());

    SigmaPointsT<T> sp;
    sp.jitter = chol.jitter;
    sp.points = Mat<T>(n, 2 * n + 1, T(0.0));
    for (std::size_t r = 0; r < n; ++r) sp.points(r, 0) = belief.mean[r];
    for (std::size_t j = 0; j < n; ++j)
        for (std::size_t r = 0; r < n; ++r) {
            T offset = chol.L(r, j) * spread;
            sp.points(r, 1 + j) = belief.mean[r] + offset;
            sp.points(r, 1 + n + j) = belief.mean[r] - offset;
        }
    return sp;
}

namespace detail {

// Push sigma points through a map and form the weighted mean/covariance.
// F maps (column vector, control) -> vector of size m.
template <class T, class F>
void unscented_moments(const SigmaPointsT<T>& sp, const Vec<T>& control, F&& map, std::size_t m,
                       const UTWeights& w, Vec<T>& mean, Mat<T>& cov,
                       std::vector<Vec<T>>* transformed) {
    const std::size_t n_pts = sp.points.cols();
    const std::size_t n = sp.points.rows();
    std::vector<Vec<T>> ys(n_pts);
    Vec<T> x(n);
    for (std::size_t i = 0; i < n_pts; ++i) {
        for (std::size_t r = 0; r < n; ++r) x[r] = sp.points(r, i);
        ys[i] = map(x, control);
        require(ys[i].size() == m, "unscented transform: map output dimension mismatch");
    }
    mean = Vec<T>(m, T(0.0));
    for (std::size_t i = 0; i < n_pts; ++i)
        for (std::size_t r = 0; r < m; ++r) acc_axpy(mean[r], w.mean_w[i], ys[i][r]);
    cov = Mat<T>(m, m, T(0.0));
    Vec<T> d(m);
    for (std::size_t i = 0; i < n_pts; ++i) {
        for (std::size_t r = 0; r < m; ++r) d[r] = ys[i][r] - mean[r];
        outer_acc(cov, w.cov_w[i], d, d);
    }
    if (transformed) *transformed = std::move(ys);
}

}  // namespace detail

// One UT prediction step (Eq. 5 shape): propagate sigma points through the
// transition, reassemble mean and covariance, add process noise, symmetrize.
template <class T, class F>
BeliefT<T> predict(const BeliefT<T>& belief, const Vec<T>& control, F&& f,
                   const NoiseModel& noise, const UTConfig& cfg,
                   double jitter_max = kUkfJitterMax) {
    const std::size_t n = belief.mean.size();
    require(noise.process_cov.rows() == n && noise.process_cov.cols() == n,
            "predict: process covariance shape");
    auto sp = sigma_points<T>(belief, cfg, jitter_max);
    UTWeights w = ut_weights(cfg);
    BeliefT<T> out;
    detail::unscented_moments(sp, control, std::forward<F>(f), n, w, out.mean, out.cov,
                              static_cast<std::vector<Vec<T>>*>(nullptr));
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) out.cov(i, j) += noise.process_cov(i, j);
    symmetrize(out.cov);
    return out;
}

// Measurement statistics (Eq. 6 shape) from the belief's own sigma set.
template <class H>
MeasurementStats observe(const GaussianBelief& belief, const VecD& control, H&& h,
                         const NoiseModel& noise, const UTConfig& cfg,
                         double jitter_max = kUkfJitterMax) {
    const std::size_t n = belief.mean.size();
    const std::size_t ny = noise.measurement_cov.rows();
    auto sp = sigma_points<double>(belief, cfg, jitter_max);
    UTWeights w = ut_weights(cfg);
    MeasurementStats st;
    std::vector<VecD> ys;
    detail::unscented_moments(sp, control, std::forward<H>(h), ny, w, st.y_mean, st.yy_cov, &ys);
    require(noise.measurement_cov.cols() == ny && st.yy_cov.rows() == ny,
            "observe: measurement covariance shape");
    for (std::size_t i = 0; i < ny; ++i)
        for (std::size_t j = 0; j < ny; ++j) st.yy_cov(i, j) += noise.measurement_cov(i, j);
    symmetrize(st.yy_cov);
    st.xy_cov = MatD(n, ny, 0.0);
    VecD dx(n), dy(ny);
    for (std::size_t i = 0; i < sp.points.cols(); ++i) {
        for (std::size_t r = 0; r < n; ++r) dx[r] = sp.points(r, i) - belief.mean[r];
        for (std::size_t r = 0; r < ny; ++r) dy[r] = ys[i][r] - st.y_mean[r];
        outer_acc(st.xy_cov, w.cov_w[i], dx, dy);
    }
    return st;
}

// Measurement update (Eq. 7 shape); the gain solves yy_cov * K^T = xy_cov^T
// through a Cholesky factorization. Throws on a singular innovation
// covariance.
GaussianBelief update(const GaussianBelief& prior, const MeasurementStats& stats, const VecD& y);

// Open-loop belief propagation with the robust-horizon freeze: stages
// 1..t_R use the full prediction; beyond t_R the mean keeps moving through
// the unscented transform while the covariance is carried over unchanged
// (bit-identical assignment).
template <class T, class F>
std::vector<BeliefT<T>> propagate_horizon(const BeliefT<T>& initial,
                                          const std::vector<Vec<T>>& controls, F&& f,
                                          const NoiseModel& noise, const UTConfig& cfg,
                                          std::size_t t_r, double jitter_max = kUkfJitterMax) {
    const std::size_t n_stages = controls.size();
    require(t_r <= n_stages, "propagate_horizon: t_R must not exceed the horizon");
    std::vector<BeliefT<T>> out;
    out.reserve(n_stages);
    const BeliefT<T>* cur = &initial;
    UTWeights w = ut_weights(cfg);
    for (std::size_t k = 0; k < n_stages; ++k) {
        if (k < t_r) {
            out.push_back(predict(*cur, controls[k], f, noise, cfg, jitter_max));
        } else {
            // Frozen covariance: regenerate sigma points from it, advance the
            // mean only, and copy the covariance verbatim.
            auto sp = sigma_points<T>(*cur, cfg, jitter_max);
            const std::size_t n = cur->mean.size();
            BeliefT<T> next;
            next.mean = Vec<T>(n, T(0.0));
            Vec<T> x(n);
            for (std::size_t i = 0; i < sp.points.cols(); ++i) {
                for (std::size_t r = 0; r < n; ++r) x[r] = sp.points(r, i);
                Vec<T> y = f(x, controls[k]);
                require(y.size() == n, "propagate_horizon: transition dimension mismatch");
                for (std::size_t r = 0; r < n; ++r) acc_axpy(next.mean[r], w.mean_w[i], y[r]);
            }
            next.cov = cur->cov;
            out.push_back(std::move(next));
        }
        cur = &out.back();
    }
    return out;
}

}  // namespace snmpc
