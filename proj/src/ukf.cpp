#include "snmpc/ukf.hpp"

namespace snmpc {

UTWeights ut_weights(const UTConfig& cfg) {
    require(cfg.valid(), "ut_weights: L + lambda must be positive");
    const double L = static_cast<double>(cfg.L);
    const double lam = cfg.lambda();
    const std::size_t n_pts = 2 * cfg.L + 1;
    UTWeights w{VecD(n_pts), VecD(n_pts)};
    w.mean_w[0] = lam / (L + lam);
    w.cov_w[0] = lam / (L + lam) + (1.0 - cfg.alpha * cfg.alpha + cfg.beta);
    const double wi = 1.0 / (2.0 * (L + lam));
    for (std::size_t i = 1; i < n_pts; ++i) {
        w.mean_w[i] = wi;
        w.cov_w[i] = wi;
    }
    return w;
}

GaussianBelief update(const GaussianBelief& prior, const MeasurementStats& stats, const VecD& y) {
    const std::size_t n = prior.mean.size();
    const std::size_t ny = stats.y_mean.size();
    require(y.size() == ny, "update: measurement dimension mismatch");
    require(stats.xy_cov.rows() == n && stats.xy_cov.cols() == ny, "update: xy_cov shape");

    // Gain from yy_cov K^T = xy_cov^T via Cholesky (never an explicit inverse).
    MatD Lyy;
    if (!cholesky_lower(stats.yy_cov, Lyy))
        throw std::runtime_error("update: singular innovation covariance");
    MatD Kt(ny, n);  // K^T
    for (std::size_t c = 0; c < n; ++c) {
        VecD rhs(ny);
        for (std::size_t r = 0; r < ny; ++r) rhs[r] = stats.xy_cov(c, r);
        // Forward/backward substitution with Lyy.
        for (std::size_t i = 0; i < ny; ++i) {
            double s = rhs[i];
            for (std::size_t j = 0; j < i; ++j) s -= Lyy(i, j) * rhs[j];
            rhs[i] = s / Lyy(i, i);
        }
        for (std::size_t i = ny; i-- > 0;) {
            double s = rhs[i];
            for (std::size_t j = i + 1; j < ny; ++j) s -= Lyy(j, i) * rhs[j];
            rhs[i] = s / Lyy(i, i);
        }
        for (std::size_t r = 0; r < ny; ++r) Kt(r, c) = rhs[r];
    }

    GaussianBelief post;
    post.mean = prior.mean;
    VecD innov(ny);
    for (std::size_t r = 0; r < ny; ++r) innov[r] = y[r] - stats.y_mean[r];
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t r = 0; r < ny; ++r) post.mean[i] += Kt(r, i) * innov[r];

    // cov -= K yy_cov K^T = K xy_cov^T.
    post.cov = prior.cov;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            double s = 0.0;
            for (std::size_t r = 0; r < ny; ++r) s += Kt(r, i) * stats.xy_cov(j, r);
            post.cov(i, j) -= s;
        }
    symmetrize(post.cov);
    return post;
}

}  // namespace snmpc
