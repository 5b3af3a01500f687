#pragma once

// Independent reference implementations used only by tests: closed-form
// Kalman filtering for linear-Gaussian systems, dense helpers for random
// problem generation, and a tiny fixed-step RK4 integrator.

#include <cmath>
#include <functional>
#include <vector>

#include "snmpc/linalg.hpp"
#include "snmpc/rng.hpp"

namespace oracle {

using snmpc::MatD;
using snmpc::Rng;
using snmpc::VecD;

inline MatD random_matrix(Rng& rng, std::size_t r, std::size_t c, double scale = 1.0) {
    MatD A(r, c);
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) A(i, j) = scale * (2.0 * rng.uniform() - 1.0);
    return A;
}

inline VecD random_vector(Rng& rng, std::size_t n, double scale = 1.0) {
    VecD v(n);
    for (auto& x : v) x = scale * (2.0 * rng.uniform() - 1.0);
    return v;
}

inline MatD random_spd(Rng& rng, std::size_t n, double diag_boost = 0.3) {
    MatD B = random_matrix(rng, n, n);
    MatD A = snmpc::matmul(B, snmpc::transpose(B));
    for (std::size_t i = 0; i < n; ++i) A(i, i) += diag_boost;
    return A;
}

// Scale a square matrix to the requested spectral radius (power iteration).
inline MatD with_spectral_radius(MatD A, double rho, Rng& rng) {
    std::size_t n = A.rows();
    VecD v = random_vector(rng, n, 1.0);
    double lam = 1.0;
    for (int it = 0; it < 200; ++it) {
        VecD w = snmpc::matvec(A, v);
        double nrm = 0.0;
        for (auto x : w) nrm += x * x;
        nrm = std::sqrt(nrm);
        if (nrm == 0.0) break;
        lam = nrm;
        for (std::size_t i = 0; i < n; ++i) v[i] = w[i] / nrm;
    }
    double s = rho / std::max(lam, 1e-12);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) A(i, j) *= s;
    return A;
}

// Textbook Kalman filter for x+ = A x + B u + w, y = C x + v.
struct KalmanFilter {
    MatD A, B, C, Q, R;
    VecD mean;
    MatD cov;

    void predict(const VecD& u) {
        VecD m = snmpc::matvec(A, mean);
        if (B.rows() > 0) {
            VecD bu = snmpc::matvec(B, u);
            for (std::size_t i = 0; i < m.size(); ++i) m[i] += bu[i];
        }
        mean = m;
        cov = snmpc::matmul(snmpc::matmul(A, cov), snmpc::transpose(A));
        for (std::size_t i = 0; i < cov.rows(); ++i)
            for (std::size_t j = 0; j < cov.cols(); ++j) cov(i, j) += Q(i, j);
    }

    void update(const VecD& y) {
        std::size_t n = mean.size(), m = y.size();
        MatD S = snmpc::matmul(snmpc::matmul(C, cov), snmpc::transpose(C));
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < m; ++j) S(i, j) += R(i, j);
        // K = cov C^T S^{-1} column by column.
        MatD PCt = snmpc::matmul(cov, snmpc::transpose(C));
        MatD K(n, m);
        for (std::size_t i = 0; i < n; ++i) {
            VecD rhs(m);
            for (std::size_t j = 0; j < m; ++j) rhs[j] = PCt(i, j);
            VecD ki = snmpc::spd_solve(S, rhs);
            for (std::size_t j = 0; j < m; ++j) K(i, j) = ki[j];
        }
        VecD yhat = snmpc::matvec(C, mean);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < m; ++j) mean[i] += K(i, j) * (y[j] - yhat[j]);
        MatD KS = snmpc::matmul(K, S);
        MatD KSKt = snmpc::matmul(KS, snmpc::transpose(K));
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j) cov(i, j) -= KSKt(i, j);
        snmpc::symmetrize(cov);
    }
};

// Classical fixed-step RK4 on dx/dt = f(x), used as a fine-step reference
// for the implicit integrators.
inline VecD rk4(const std::function<VecD(const VecD&)>& f, VecD x, double t_end, double h) {
    double t = 0.0;
    while (t < t_end - 1e-15) {
        double step = std::min(h, t_end - t);
        VecD k1 = f(x);
        VecD x2 = x;
        for (std::size_t i = 0; i < x.size(); ++i) x2[i] = x[i] + 0.5 * step * k1[i];
        VecD k2 = f(x2);
        for (std::size_t i = 0; i < x.size(); ++i) x2[i] = x[i] + 0.5 * step * k2[i];
        VecD k3 = f(x2);
        for (std::size_t i = 0; i < x.size(); ++i) x2[i] = x[i] + step * k3[i];
        VecD k4 = f(x2);
        for (std::size_t i = 0; i < x.size(); ++i)
            x[i] += step / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        t += step;
    }
    return x;
}

inline double max_abs_diff(const VecD& a, const VecD& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::fabs(a[i] - b[i]));
    return m;
}

inline double max_abs_diff(const MatD& a, const MatD& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < a.cols(); ++j) m = std::max(m, std::fabs(a(i, j) - b(i, j)));
    return m;
}

// Convex QP  min 1/2 x^T Q x + q^T x  s.t.  A x <= b.
struct Qp {
    MatD Q;
    VecD q;
    MatD A;
    VecD b;
};

// Exhaustive active-set oracle: enumerate all subsets of active constraints,
// solve the equality-constrained KKT system, keep the best primal-dual
// feasible candidate. Exact for PD Q and small m.
inline bool qp_active_set_solve(const Qp& qp, VecD& x_opt, double& f_opt) {
    const std::size_t n = qp.Q.rows();
    const std::size_t m = qp.A.rows();
    const double tol = 1e-8;
    bool found = false;
    f_opt = std::numeric_limits<double>::infinity();
    for (std::uint64_t mask = 0; mask < (1ull << m); ++mask) {
        std::vector<std::size_t> act;
        for (std::size_t i = 0; i < m; ++i)
            if (mask & (1ull << i)) act.push_back(i);
        if (act.size() > n) continue;
        const std::size_t k = act.size();
        MatD K(n + k, n + k, 0.0);
        VecD rhs(n + k, 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < n; ++j) K(i, j) = qp.Q(i, j);
            rhs[i] = -qp.q[i];
        }
        for (std::size_t r = 0; r < k; ++r) {
            for (std::size_t j = 0; j < n; ++j) {
                K(n + r, j) = qp.A(act[r], j);
                K(j, n + r) = qp.A(act[r], j);
            }
            rhs[n + r] = qp.b[act[r]];
        }
        snmpc::LuFactor lu(K);
        if (lu.singular()) continue;
        VecD sol = rhs;
        lu.solve(sol);
        // Multipliers of active constraints must be nonnegative (lambda >= 0
        // for A x <= b with L = f + lambda^T (Ax - b)).
        bool ok = true;
        for (std::size_t r = 0; r < k && ok; ++r) ok = sol[n + r] >= -tol;
        if (!ok) continue;
        VecD x(n);
        for (std::size_t i = 0; i < n; ++i) x[i] = sol[i];
        VecD ax = snmpc::matvec(qp.A, x);
        for (std::size_t i = 0; i < m && ok; ++i) ok = ax[i] <= qp.b[i] + tol * (1.0 + std::fabs(qp.b[i]));
        if (!ok) continue;
        double f = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            f += qp.q[i] * x[i];
            for (std::size_t j = 0; j < n; ++j) f += 0.5 * x[i] * qp.Q(i, j) * x[j];
        }
        if (f < f_opt) {
            f_opt = f;
            x_opt = x;
            found = true;
        }
    }
    return found;
}

inline Qp random_convex_qp(Rng& rng, std::size_t n, std::size_t m) {
    Qp qp;
    MatD B = random_matrix(rng, n, n);
    qp.Q = snmpc::matmul(snmpc::transpose(B), B);
    for (std::size_t i = 0; i < n; ++i) qp.Q(i, i) += 0.1;
    qp.q = random_vector(rng, n, 2.0);
    qp.A = random_matrix(rng, m, n);
    VecD x_feas = random_vector(rng, n, 0.5);
    qp.b = snmpc::matvec(qp.A, x_feas);
    for (std::size_t i = 0; i < m; ++i) qp.b[i] += 0.2 + rng.uniform();  // interior margin
    return qp;
}

}  // namespace oracle
