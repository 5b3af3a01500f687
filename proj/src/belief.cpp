#include "snmpc/belief.hpp"

#include <cmath>

namespace snmpc {

double gaussian_cdf(double x) { return 0.5 * std::erfc(-x * M_SQRT1_2); }

namespace {

// Density of the standard normal.
double phi(double x) { return std::exp(-0.5 * x * x) / std::sqrt(2.0 * M_PI); }

// Halley iteration on Phi(x) - p with a bisection safeguard, for p <= 0.5.
double quantile_left_tail(double p) {
    // Asymptotic start: for small p, Phi^{-1}(p) ~ -sqrt(-2 ln p - ...).
    double x;
    if (p > 0.4) {
        x = (p - 0.5) * std::sqrt(2.0 * M_PI);
    } else {
        double t = std::sqrt(-2.0 * std::log(p));
        x = -(t - (std::log(t * t) + std::log(2.0 * M_PI)) / (2.0 * t));
    }
    double lo = -40.0, hi = 0.0;
    for (int it = 0; it < 100; ++it) {
        double f = gaussian_cdf(x) - p;
        if (f > 0.0)
            hi = x;
        else if (f < 0.0)
            lo = x;
        else
            return x;
        double u = f / phi(x);
        double step = u / (1.0 + 0.5 * x * u);
        double xn = x - step;
        if (!(xn > lo && xn < hi)) xn = 0.5 * (lo + hi);
        if (std::fabs(xn - x) <= 1e-14 * (1.0 + std::fabs(x))) return xn;
        x = xn;
    }
    return x;
}

}  // namespace

double gaussian_quantile(double p) {
    require(p > 0.0 && p < 1.0, "gaussian_quantile: p must lie in (0, 1)");
    if (p == 0.5) return 0.0;
    return p < 0.5 ? quantile_left_tail(p) : -quantile_left_tail(1.0 - p);
}

void check_belief(const GaussianBelief& b, double jitter_max) {
    require(b.cov.rows() == b.cov.cols() && b.cov.rows() == b.mean.size(),
            "belief: dimension mismatch");
    for (std::size_t i = 0; i < b.cov.rows(); ++i)
        for (std::size_t j = i + 1; j < b.cov.cols(); ++j)
            if (std::fabs(b.cov(i, j) - b.cov(j, i)) > 1e-10)
                throw std::runtime_error("belief: covariance not symmetric");
    cholesky_sqrt(b.cov, jitter_max);  // throws if indefinite
}

}  // namespace snmpc
