#include "snmpc/nlp.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <optional>
#include <sstream>
#include <vector>

// Primal-dual interior point with a filter line search in the
// Waechter-Biegler style: inequalities get slacks, bounds get log barriers,
// the barrier parameter decreases monotonically, and steps are accepted
// either by an Armijo condition on the barrier objective or by sufficient
// progress against a (theta, phi) filter. Curvature comes from damped BFGS
// unless the problem supplies an exact Lagrangian Hessian.

namespace snmpc {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Filter/line-search constants (standard values).
constexpr double kGammaTheta = 1e-5;
constexpr double kGammaPhi = 1e-5;
constexpr double kEtaPhi = 1e-8;
constexpr double kSTheta = 1.1;
constexpr double kSPhi = 2.3;
constexpr double kDeltaSw = 1.0;
constexpr double kKappaEps = 10.0;
constexpr double kKappaMu = 0.2;
constexpr double kThetaMu = 1.5;
constexpr double kKappaSigma = 1e10;
constexpr double kSMax = 100.0;

struct Filter {
    std::vector<std::pair<double, double>> entries;  // (theta, phi)

    void clear() { entries.clear(); }
    bool acceptable(double theta, double phi) const {
        for (const auto& [t, p] : entries)
            if (theta >= (1.0 - kGammaTheta) * t && phi >= p - kGammaPhi * t) return false;
        return true;
    }
    void add(double theta, double phi) { entries.emplace_back(theta, phi); }
};

struct Eval {
    double f = 0.0;
    VecD c_raw;  // eq rows then ineq rows
    bool finite = false;
};

class Solver {
public:
    Solver(const NlpProblem& p, const SolverOptions& o) : P(p), opts(o) {
        n = P.n;
        me = P.m_eq;
        mi = P.m_ineq;
        nw = n + mi;
        m = me + mi;
        lo = VecD(nw, -kInf);
        up = VecD(nw, kInf);
        for (std::size_t i = 0; i < n; ++i) {
            lo[i] = P.lb.size() ? P.lb[i] : -kInf;
            up[i] = P.ub.size() ? P.ub[i] : kInf;
        }
        for (std::size_t i = 0; i < mi; ++i) lo[n + i] = 0.0;
        sc = VecD(m, 1.0);
        exact_hessian = static_cast<bool>(P.hessian);
    }

    SolverReport run(VecD& x);

private:
    const NlpProblem& P;
    const SolverOptions& opts;
    std::size_t n, me, mi, nw, m;
    VecD lo, up;
    bool exact_hessian = false;

    // Iterate state.
    VecD w, y, zl, zu;
    double f_cur = 0.0;
    VecD c_raw, grad;
    MatD jac;
    MatD Hzz;
    double mu = 0.1, tau = 0.99;
    double theta_min = 0.0, theta_max = kInf;
    Filter filter;
    double dw_last = 0.0;
    std::size_t iter = 0;
    // Gradient-based problem scaling fixed at the initial point.
    double sf = 1.0;
    VecD sc;

    bool has_lo(std::size_t i) const { return lo[i] > -kInf; }
    bool has_up(std::size_t i) const { return up[i] < kInf; }

    std::optional<Eval> try_eval(const VecD& wv) const {
        VecD x(n);
        for (std::size_t i = 0; i < n; ++i) x[i] = wv[i];
        Eval e;
        try {
            e.f = P.objective(x);
            e.c_raw = m > 0 ? P.constraints(x) : VecD(0);
        } catch (...) {
            return std::nullopt;
        }
        if (!std::isfinite(e.f)) return std::nullopt;
        require(e.c_raw.size() == m, "nlp: constraint callback size mismatch");
        for (auto v : e.c_raw)
            if (!std::isfinite(v)) return std::nullopt;
        e.f *= sf;
        for (std::size_t r = 0; r < m; ++r) e.c_raw[r] *= sc[r];
        e.finite = true;
        return e;
    }

    void eval_derivs(const VecD& wv) {
        VecD x(n);
        for (std::size_t i = 0; i < n; ++i) x[i] = wv[i];
        grad = P.gradient(x);
        require(grad.size() == n, "nlp: gradient callback size mismatch");
        if (m > 0) {
            jac = P.jacobian(x);
            require(jac.rows() == m && jac.cols() == n, "nlp: jacobian callback shape mismatch");
        } else {
            jac = MatD(0, n);
        }
        for (std::size_t i = 0; i < n; ++i)
            if (!std::isfinite(grad[i]))
                throw std::runtime_error("nlp: non-finite gradient entry " + std::to_string(i));
        for (std::size_t i = 0; i < n; ++i) grad[i] *= sf;
        for (std::size_t r = 0; r < m; ++r)
            if (sc[r] != 1.0) kernels::active().scale(n, sc[r], jac.row(r));
    }

    // Objective/constraint scale factors from the gradients at the start.
    void init_scaling() {
        double gmax = inf_norm(grad);
        sf = gmax > kSMax ? kSMax / gmax : 1.0;
        sc = VecD(m, 1.0);
        for (std::size_t r = 0; r < m; ++r) {
            double rmax = 0.0;
            for (std::size_t i = 0; i < n; ++i) rmax = std::max(rmax, std::fabs(jac(r, i)));
            sc[r] = rmax > kSMax ? kSMax / rmax : 1.0;
        }
    }

    // Equality residual C(w) (slacks folded in).
    VecD constraint_residual(const VecD& wv, const VecD& craw) const {
        VecD C(m);
        for (std::size_t i = 0; i < me; ++i) C[i] = craw[i];
        for (std::size_t i = 0; i < mi; ++i) C[me + i] = craw[me + i] - wv[n + i];
        return C;
    }

    // Violation of the original (unscaled) constraints: equality residuals
    // and negative parts of the inequalities.
    double unscaled_violation(const VecD& craw_scaled) const {
        double v = 0.0;
        for (std::size_t r = 0; r < me; ++r) v = std::max(v, std::fabs(craw_scaled[r]) / sc[r]);
        for (std::size_t i = 0; i < mi; ++i)
            v = std::max(v, std::max(0.0, -craw_scaled[me + i] / sc[me + i]));
        return v;
    }

    static double one_norm(const VecD& v) {
        double s = 0.0;
        for (auto a : v) s += std::fabs(a);
        return s;
    }
    static double inf_norm(const VecD& v) {
        double s = 0.0;
        for (auto a : v) s = std::max(s, std::fabs(a));
        return s;
    }

    double barrier_phi(const VecD& wv, double f) const {
        double phi = f;
        for (std::size_t i = 0; i < nw; ++i) {
            if (has_lo(i)) phi -= mu * std::log(wv[i] - lo[i]);
            if (has_up(i)) phi -= mu * std::log(up[i] - wv[i]);
        }
        return phi;
    }

    // Barrier gradient w.r.t. w (objective part + log terms).
    VecD barrier_grad(const VecD& wv) const {
        VecD g(nw, 0.0);
        for (std::size_t i = 0; i < n; ++i) g[i] = grad[i];
        for (std::size_t i = 0; i < nw; ++i) {
            if (has_lo(i)) g[i] -= mu / (wv[i] - lo[i]);
            if (has_up(i)) g[i] += mu / (up[i] - wv[i]);
        }
        return g;
    }

    // J_w^T v where J_w = [Jeq 0; Jin -I].
    VecD jact_times(const VecD& v) const {
        VecD out(nw, 0.0);
        for (std::size_t r = 0; r < m; ++r) {
            if (v[r] == 0.0) continue;
            kernels::active().axpy(n, v[r], jac.row(r), out.data());
        }
        for (std::size_t i = 0; i < mi; ++i) out[n + i] = -v[me + i];
        return out;
    }

    // Optimality error at barrier parameter mu_val (mu_val = 0 for E_0).
    double kkt_error(double mu_val, const VecD& C) const {
        double zsum = 0.0, bounds_cnt = 0.0;
        for (std::size_t i = 0; i < nw; ++i) {
            if (has_lo(i)) {
                zsum += std::fabs(zl[i]);
                bounds_cnt += 1.0;
            }
            if (has_up(i)) {
                zsum += std::fabs(zu[i]);
                bounds_cnt += 1.0;
            }
        }
        double ysum = one_norm(y);
        double sd = std::max(kSMax, (ysum + zsum) / std::max(1.0, static_cast<double>(m) +
                                                                      bounds_cnt)) /
                    kSMax;
        double sc = std::max(kSMax, zsum / std::max(1.0, bounds_cnt)) / kSMax;

        VecD r = jact_times(y);
        double rdual = 0.0;
        for (std::size_t i = 0; i < nw; ++i) {
            double gi = (i < n ? grad[i] : 0.0) - r[i] - (has_lo(i) ? zl[i] : 0.0) +
                        (has_up(i) ? zu[i] : 0.0);
            rdual = std::max(rdual, std::fabs(gi));
        }
        double rcomp = 0.0;
        for (std::size_t i = 0; i < nw; ++i) {
            if (has_lo(i)) rcomp = std::max(rcomp, std::fabs(zl[i] * (w[i] - lo[i]) - mu_val));
            if (has_up(i)) rcomp = std::max(rcomp, std::fabs(zu[i] * (up[i] - w[i]) - mu_val));
        }
        return std::max({rdual / sd, inf_norm(C), rcomp / sc});
    }

    // Assemble and solve the condensed KKT system; returns false if no
    // regularization makes the inertia right.
    bool solve_kkt(const VecD& rbar, const VecD& C, VecD& dw, VecD& dy) {
        MatD K(nw + m, nw + m, 0.0);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j) K(i, j) = Hzz(i, j);
        for (std::size_t i = 0; i < nw; ++i) {
            double sig = 0.0;
            if (has_lo(i)) sig += zl[i] / (w[i] - lo[i]);
            if (has_up(i)) sig += zu[i] / (up[i] - w[i]);
            K(i, i) += sig;
        }
        for (std::size_t r = 0; r < m; ++r) {
            for (std::size_t c = 0; c < n; ++c) {
                K(nw + r, c) = jac(r, c);
                K(c, nw + r) = jac(r, c);
            }
        }
        for (std::size_t i = 0; i < mi; ++i) {
            K(nw + me + i, n + i) = -1.0;
            K(n + i, nw + me + i) = -1.0;
        }

        VecD rhs(nw + m);
        for (std::size_t i = 0; i < nw; ++i) rhs[i] = -rbar[i];
        for (std::size_t r = 0; r < m; ++r) rhs[nw + r] = -C[r];

        double dwreg = 0.0, dcreg = 0.0;
        for (int attempt = 0; attempt < 40; ++attempt) {
            MatD Kt = K;
            for (std::size_t i = 0; i < nw; ++i) Kt(i, i) += dwreg;
            for (std::size_t r = 0; r < m; ++r) Kt(nw + r, nw + r) -= dcreg;
            LdltFactor fact(Kt);
            std::size_t pos = 0, neg = 0, zero = 0;
            bool ok = !fact.singular();
            if (ok) {
                fact.inertia(pos, neg, zero);
                ok = pos == nw && neg == m && zero == 0;
            }
            if (ok) {
                VecD sol = rhs;
                fact.solve(sol);
                dw = VecD(nw);
                dy = VecD(m);
                for (std::size_t i = 0; i < nw; ++i) dw[i] = sol[i];
                for (std::size_t r = 0; r < m; ++r) dy[r] = -sol[nw + r];
                if (dwreg > 0.0) dw_last = dwreg;
                return true;
            }
            if (zero > 0 || fact.singular()) dcreg = std::max(1e-8, dcreg * 10.0);
            if (dwreg == 0.0)
                dwreg = dw_last == 0.0 ? 1e-4 : std::max(1e-20, dw_last / 3.0);
            else
                dwreg *= (dw_last == 0.0 ? 100.0 : 8.0);
            if (dwreg > 1e40) break;
        }
        return false;
    }

    double frac_to_boundary_primal(const VecD& dw) const {
        double a = 1.0;
        for (std::size_t i = 0; i < nw; ++i) {
            if (has_lo(i) && dw[i] < 0.0) a = std::min(a, -tau * (w[i] - lo[i]) / dw[i]);
            if (has_up(i) && dw[i] > 0.0) a = std::min(a, tau * (up[i] - w[i]) / dw[i]);
        }
        return a;
    }

    void dual_steps(const VecD& dw, VecD& dzl, VecD& dzu) const {
        dzl = VecD(nw, 0.0);
        dzu = VecD(nw, 0.0);
        for (std::size_t i = 0; i < nw; ++i) {
            if (has_lo(i)) {
                double d = w[i] - lo[i];
                dzl[i] = mu / d - zl[i] - zl[i] / d * dw[i];
            }
            if (has_up(i)) {
                double d = up[i] - w[i];
                dzu[i] = mu / d - zu[i] + zu[i] / d * dw[i];
            }
        }
    }

    double frac_to_boundary_dual(const VecD& dzl, const VecD& dzu) const {
        double a = 1.0;
        for (std::size_t i = 0; i < nw; ++i) {
            if (has_lo(i) && dzl[i] < 0.0) a = std::min(a, -tau * zl[i] / dzl[i]);
            if (has_up(i) && dzu[i] < 0.0) a = std::min(a, -tau * zu[i] / dzu[i]);
        }
        return a;
    }

    void clamp_duals() {
        for (std::size_t i = 0; i < nw; ++i) {
            if (has_lo(i)) {
                double d = std::max(w[i] - lo[i], 1e-40);
                zl[i] = std::min(std::max(zl[i], mu / (kKappaSigma * d)), kKappaSigma * mu / d);
            }
            if (has_up(i)) {
                double d = std::max(up[i] - w[i], 1e-40);
                zu[i] = std::min(std::max(zu[i], mu / (kKappaSigma * d)), kKappaSigma * mu / d);
            }
        }
    }

    // Damped BFGS on the z-block of the Lagrangian.
    void bfgs_update(const VecD& z_old, const VecD& grad_old, const MatD& jac_old) {
        VecD s(n), q(n);
        for (std::size_t i = 0; i < n; ++i) s[i] = w[i] - z_old[i];
        double snorm = inf_norm(s);
        if (snorm < 1e-14) return;
        // grad_x L = grad f - J_x^T y with the new multipliers.
        VecD gl_new(n), gl_old(n);
        for (std::size_t i = 0; i < n; ++i) {
            gl_new[i] = grad[i];
            gl_old[i] = grad_old[i];
        }
        for (std::size_t r = 0; r < m; ++r) {
            if (y[r] == 0.0) continue;
            kernels::active().axpy(n, -y[r], jac.row(r), gl_new.data());
            kernels::active().axpy(n, -y[r], jac_old.row(r), gl_old.data());
        }
        for (std::size_t i = 0; i < n; ++i) q[i] = gl_new[i] - gl_old[i];

        VecD Hs = matvec(Hzz, s);
        double sHs = kernels::active().dot(n, s.data(), Hs.data());
        double sq = kernels::active().dot(n, s.data(), q.data());
        if (sHs <= 0.0) return;
        if (!bfgs_initialized && sq > 1e-12) {
            double qq = kernels::active().dot(n, q.data(), q.data());
            double scale = qq / sq;
            if (scale > 1e-8 && scale < 1e8) {
                Hzz = MatD::identity(n);
                for (std::size_t i = 0; i < n; ++i) Hzz(i, i) = scale;
                Hs = matvec(Hzz, s);
                sHs = kernels::active().dot(n, s.data(), Hs.data());
            }
            bfgs_initialized = true;
        }
        // Powell damping keeps the update positive definite.
        VecD qt = q;
        double sqt = sq;
        if (sq < 0.2 * sHs) {
            double thetaf = 0.8 * sHs / (sHs - sq);
            for (std::size_t i = 0; i < n; ++i) qt[i] = thetaf * q[i] + (1.0 - thetaf) * Hs[i];
            sqt = kernels::active().dot(n, s.data(), qt.data());
        }
        if (sqt <= 1e-16 * snorm * snorm) return;
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j)
                Hzz(i, j) += -Hs[i] * Hs[j] / sHs + qt[i] * qt[j] / sqt;
    }

    bool bfgs_initialized = false;

    void refresh_exact_hessian() {
        VecD x(n);
        for (std::size_t i = 0; i < n; ++i) x[i] = w[i];
        VecD y_eff(m);
        for (std::size_t r = 0; r < m; ++r) y_eff[r] = y[r] * sc[r];
        Hzz = P.hessian(x, sf, y_eff);
        require(Hzz.rows() == n && Hzz.cols() == n, "nlp: hessian callback shape mismatch");
    }

    // Feasibility restoration: damped Gauss-Newton on ||C||^2 within the
    // bounds. Returns true if the violation was reduced enough to continue.
    bool restore(double theta_enter);
};

SolverReport Solver::run(VecD& x) {
    SolverReport rep;
    require(x.size() == n, "nlp: initial point size mismatch");

    // Project the start into the interior of the box.
    w = VecD(nw, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        double v = x[i];
        if (has_lo(i) && has_up(i)) {
            double pad = std::min(1e-2 * std::max(1.0, std::fabs(lo[i])), 1e-2 * (up[i] - lo[i]));
            v = std::min(std::max(v, lo[i] + pad), up[i] - pad);
        } else if (has_lo(i)) {
            v = std::max(v, lo[i] + 1e-2 * std::max(1.0, std::fabs(lo[i])));
        } else if (has_up(i)) {
            v = std::min(v, up[i] - 1e-2 * std::max(1.0, std::fabs(up[i])));
        }
        w[i] = v;
    }

    auto e0 = try_eval(w);
    if (!e0) {
        std::ostringstream ss;
        ss << "nlp: non-finite callback at the initial point [";
        for (std::size_t i = 0; i < n; ++i) ss << (i ? ", " : "") << w[i];
        ss << "]";
        rep.status = SolveStatus::kError;
        rep.message = ss.str();
        return rep;
    }
    f_cur = e0->f;
    c_raw = e0->c_raw;
    try {
        eval_derivs(w);
    } catch (const std::exception& e) {
        rep.status = SolveStatus::kError;
        rep.message = std::string("nlp: derivative evaluation failed at the start: ") + e.what();
        return rep;
    }
    init_scaling();
    f_cur *= sf;
    for (std::size_t r = 0; r < m; ++r) c_raw[r] *= sc[r];
    for (std::size_t i = 0; i < n; ++i) grad[i] *= sf;
    for (std::size_t r = 0; r < m; ++r)
        if (sc[r] != 1.0) kernels::active().scale(n, sc[r], jac.row(r));
    for (std::size_t i = 0; i < mi; ++i) {
        double ci = c_raw[me + i];
        w[n + i] = std::max(ci, 1e-2 * std::max(1.0, std::fabs(ci)));
    }

    mu = opts.mu_init;
    tau = std::max(0.99, 1.0 - mu);
    y = VecD(m, 0.0);
    zl = VecD(nw, 0.0);
    zu = VecD(nw, 0.0);
    for (std::size_t i = 0; i < nw; ++i) {
        if (has_lo(i)) zl[i] = std::min(1e3, std::max(1e-8, mu / (w[i] - lo[i])));
        if (has_up(i)) zu[i] = std::min(1e3, std::max(1e-8, mu / (up[i] - w[i])));
    }
    Hzz = MatD::identity(n);
    if (exact_hessian) refresh_exact_hessian();

    VecD C = constraint_residual(w, c_raw);
    double theta = one_norm(C);
    theta_min = 1e-4 * std::max(1.0, theta);
    theta_max = 1e4 * std::max(1.0, theta);
    filter.clear();
    filter.add(theta_max, -kInf);

    const double mu_min = std::max(1e-12, opts.kkt_tol / 11.0);
    std::size_t restorations = 0;
    std::size_t tiny_steps = 0;
    std::size_t curvature_resets = 0;

    VecD best_x(n);
    double best_theta = kInf, best_f = kInf;
    auto remember_best = [&]() {
        double thv = std::max(inf_norm(C), unscaled_violation(c_raw));
        bool better = (thv <= opts.feas_tol && best_theta <= opts.feas_tol)
                          ? f_cur < best_f
                          : thv < best_theta;
        if (better) {
            best_theta = thv;
            best_f = f_cur;
            for (std::size_t i = 0; i < n; ++i) best_x[i] = w[i];
        }
    };
    remember_best();

    for (iter = 0; iter < opts.max_iter; ++iter) {
        C = constraint_residual(w, c_raw);
        theta = one_norm(C);
        remember_best();

        double e0_err = kkt_error(0.0, C);
        double viol0 = unscaled_violation(c_raw);
        rep.kkt_residual = e0_err;
        rep.constraint_violation = viol0;
        if (e0_err <= opts.kkt_tol && inf_norm(C) <= opts.feas_tol && viol0 <= opts.feas_tol) {
            rep.status = SolveStatus::kConverged;
            rep.objective = f_cur / sf;
            rep.iterations = iter;
            for (std::size_t i = 0; i < n; ++i) x[i] = w[i];
            return rep;
        }

        // Barrier update.
        while (mu > mu_min && kkt_error(mu, C) <= kKappaEps * mu) {
            mu = std::max(mu_min, std::min(kKappaMu * mu, std::pow(mu, kThetaMu)));
            tau = std::max(0.99, 1.0 - mu);
            filter.clear();
            filter.add(theta_max, -kInf);
        }

        // Search direction.
        VecD rbar(nw);
        {
            VecD jy = jact_times(y);
            for (std::size_t i = 0; i < nw; ++i) {
                double gi = (i < n ? grad[i] : 0.0) - jy[i];
                if (has_lo(i)) gi -= mu / (w[i] - lo[i]);
                if (has_up(i)) gi += mu / (up[i] - w[i]);
                rbar[i] = gi;
            }
        }
        VecD dw, dy;
        if (!solve_kkt(rbar, C, dw, dy)) {
            rep.status = SolveStatus::kError;
            rep.message = "nlp: KKT system could not be regularized";
            break;
        }

        VecD phi_grad = barrier_grad(w);
        double dphi = kernels::active().dot(nw, phi_grad.data(), dw.data());
        double phi0 = barrier_phi(w, f_cur);

        double alpha_max = frac_to_boundary_primal(dw);
        VecD dzl, dzu;
        dual_steps(dw, dzl, dzu);
        double alpha_z = frac_to_boundary_dual(dzl, dzu);

        // Backtracking with filter acceptance and one second-order
        // correction attempt.
        double alpha = alpha_max;
        bool accepted = false;
        bool augment = false;
        VecD w_trial(nw);
        Eval trial;
        bool soc_tried = false;
        for (int ls = 0; ls < 60; ++ls) {
            for (std::size_t i = 0; i < nw; ++i) w_trial[i] = w[i] + alpha * dw[i];
            auto te = try_eval(w_trial);
            if (te) {
                trial = *te;
                VecD Ct = constraint_residual(w_trial, trial.c_raw);
                double theta_t = one_norm(Ct);
                double phi_t = barrier_phi(w_trial, trial.f);
                bool in_filter = !filter.acceptable(theta_t, phi_t);
                bool switching = dphi < 0.0 &&
                                 alpha * std::pow(-dphi, kSPhi) >
                                     kDeltaSw * std::pow(theta, kSTheta);
                bool ok = false;
                if (!in_filter) {
                    if (theta <= theta_min && switching) {
                        ok = phi_t <= phi0 + kEtaPhi * alpha * dphi;  // f-type (Armijo)
                    } else {
                        ok = theta_t <= (1.0 - kGammaTheta) * theta ||
                             phi_t <= phi0 - kGammaPhi * theta;
                        augment = ok;
                    }
                }
                if (ok) {
                    accepted = true;
                    break;
                }
                // Second-order correction on the first rejected trial when
                // infeasibility grew.
                if (!soc_tried && ls == 0 && theta_t >= theta) {
                    soc_tried = true;
                    VecD c_soc(m);
                    for (std::size_t r = 0; r < m; ++r) c_soc[r] = alpha * C[r] + Ct[r];
                    VecD dw_soc, dy_soc;
                    if (solve_kkt(rbar, c_soc, dw_soc, dy_soc)) {
                        double a_soc = frac_to_boundary_primal(dw_soc);
                        VecD w_soc(nw);
                        for (std::size_t i = 0; i < nw; ++i) w_soc[i] = w[i] + a_soc * dw_soc[i];
                        auto se = try_eval(w_soc);
                        if (se) {
                            VecD Cs = constraint_residual(w_soc, se->c_raw);
                            double theta_s = one_norm(Cs);
                            double phi_s = barrier_phi(w_soc, se->f);
                            bool in_f = !filter.acceptable(theta_s, phi_s);
                            bool ok_s = false;
                            if (!in_f) {
                                if (theta <= theta_min && dphi < 0.0 &&
                                    a_soc * std::pow(-dphi, kSPhi) >
                                        kDeltaSw * std::pow(theta, kSTheta)) {
                                    ok_s = phi_s <= phi0 + kEtaPhi * a_soc * dphi;
                                } else {
                                    ok_s = theta_s <= (1.0 - kGammaTheta) * theta ||
                                           phi_s <= phi0 - kGammaPhi * theta;
                                    augment = ok_s;
                                }
                            }
                            if (ok_s) {
                                accepted = true;
                                alpha = a_soc;
                                dw = dw_soc;
                                dual_steps(dw, dzl, dzu);
                                alpha_z = frac_to_boundary_dual(dzl, dzu);
                                w_trial = w_soc;
                                trial = *se;
                                break;
                            }
                        }
                    }
                }
            }
            alpha *= 0.5;
            if (alpha < 1e-13) break;
        }

        if (!accepted) {
            // A feasible iterate that rejects every step usually means the
            // quasi-Newton matrix went bad; restart the curvature first.
            if (!exact_hessian && theta <= opts.feas_tol && curvature_resets < 8) {
                ++curvature_resets;
                Hzz = MatD::identity(n);
                bfgs_initialized = false;
                continue;
            }
            // Feasibility restoration; give up if it cannot make progress.
            if (restorations >= 5 || theta <= opts.feas_tol) {
                rep.status = theta > opts.feas_tol ? SolveStatus::kInfeasible
                                                   : SolveStatus::kMaxIter;
                rep.message = "nlp: line search failed";
                break;
            }
            ++restorations;
            if (!restore(theta)) {
                rep.status = SolveStatus::kInfeasible;
                rep.message = "nlp: restoration could not reduce infeasibility";
                break;
            }
            auto er = try_eval(w);
            if (!er) {
                rep.status = SolveStatus::kError;
                rep.message = "nlp: non-finite callback after restoration";
                break;
            }
            f_cur = er->f;
            c_raw = er->c_raw;
            try {
                eval_derivs(w);
            } catch (const std::exception& e) {
                rep.status = SolveStatus::kError;
                rep.message = std::string("nlp: derivative evaluation failed: ") + e.what();
                break;
            }
            filter.clear();
            filter.add(theta_max, -kInf);
            continue;
        }

        if (augment) filter.add(theta, phi0);

        VecD z_old = w, grad_old = grad;
        MatD jac_old = jac;
        w = w_trial;
        f_cur = trial.f;
        c_raw = trial.c_raw;
        for (std::size_t r = 0; r < m; ++r) y[r] += alpha * dy[r];
        for (std::size_t i = 0; i < nw; ++i) {
            if (has_lo(i)) zl[i] += alpha_z * dzl[i];
            if (has_up(i)) zu[i] += alpha_z * dzu[i];
        }
        clamp_duals();
        if (alpha < 1e-6 && !exact_hessian) {
            if (++tiny_steps >= 3 && curvature_resets < 8) {
                ++curvature_resets;
                Hzz = MatD::identity(n);
                bfgs_initialized = false;
                tiny_steps = 0;
            }
        } else {
            tiny_steps = 0;
        }
        try {
            eval_derivs(w);
            if (exact_hessian)
                refresh_exact_hessian();
            else
                bfgs_update(z_old, grad_old, jac_old);
        } catch (const std::exception& e) {
            rep.status = SolveStatus::kError;
            rep.message = std::string("nlp: derivative evaluation failed: ") + e.what();
            break;
        }

        if (opts.verbose)
            std::printf("it %3zu  mu %8.1e  f %14.7e  theta %8.1e  kkt %8.1e  alpha %.2e\n",
                        iter, mu, f_cur, theta, rep.kkt_residual, alpha);
    }

    if (rep.status != SolveStatus::kError && rep.status != SolveStatus::kInfeasible)
        rep.status = SolveStatus::kMaxIter;
    rep.iterations = iter;
    rep.objective = best_f / sf;
    for (std::size_t i = 0; i < n; ++i) x[i] = best_x[i];
    // Recompute the violation at the returned point.
    auto ef = try_eval([&] {
        VecD wv = w;
        for (std::size_t i = 0; i < n; ++i) wv[i] = best_x[i];
        return wv;
    }());
    if (ef) {
        rep.constraint_violation = unscaled_violation(ef->c_raw);
        rep.objective = ef->f / sf;
    }
    return rep;
}

bool Solver::restore(double theta_enter) {
    // Damped Gauss-Newton on 1/2 ||C||_2^2 inside the bounds.
    const double target = std::max(opts.feas_tol, 1e-2 * theta_enter);
    for (int it = 0; it < 60; ++it) {
        auto ev = try_eval(w);
        if (!ev) return false;
        c_raw = ev->c_raw;
        f_cur = ev->f;
        VecD C = constraint_residual(w, c_raw);
        double theta2 = 0.0;
        for (auto v : C) theta2 += v * v;
        if (one_norm(C) <= target) return true;
        try {
            eval_derivs(w);
        } catch (const std::exception&) {
            return false;
        }

        // Normal equations with bound curvature: (J^T J + Sigma + lam I) d = -J^T C.
        MatD A(nw, nw, 0.0);
        VecD rhsv(nw, 0.0);
        for (std::size_t r = 0; r < m; ++r) {
            // row r of J_w: (jac(r,:), -e_r on slack block)
            for (std::size_t i = 0; i < n; ++i) {
                if (jac(r, i) == 0.0) continue;
                rhsv[i] -= jac(r, i) * C[r];
                for (std::size_t j = 0; j <= i; ++j) A(i, j) += jac(r, i) * jac(r, j);
            }
            if (r >= me) {
                std::size_t si = n + (r - me);
                rhsv[si] += C[r];
                A(si, si) += 1.0;
                for (std::size_t j = 0; j < n; ++j) A(si, j) -= jac(r, j);
            }
        }
        for (std::size_t i = 0; i < nw; ++i)
            for (std::size_t j = i + 1; j < nw; ++j) A(i, j) = A(j, i);
        double lam = 1e-8 + 1e-4 * std::sqrt(theta2);
        for (std::size_t i = 0; i < nw; ++i) {
            double sig = lam;
            if (has_lo(i)) sig += std::max(zl[i], 1e-8) / (w[i] - lo[i]);
            if (has_up(i)) sig += std::max(zu[i], 1e-8) / (up[i] - w[i]);
            A(i, i) += sig;
        }
        VecD d;
        try {
            d = spd_solve(A, rhsv);
        } catch (const std::exception&) {
            return false;
        }
        double alpha = frac_to_boundary_primal(d);
        bool moved = false;
        for (int ls = 0; ls < 30; ++ls) {
            VecD wt(nw);
            for (std::size_t i = 0; i < nw; ++i) wt[i] = w[i] + alpha * d[i];
            auto te = try_eval(wt);
            if (te) {
                VecD Ct = constraint_residual(wt, te->c_raw);
                double t2 = 0.0;
                for (auto v : Ct) t2 += v * v;
                if (t2 <= theta2 * (1.0 - 1e-4 * alpha)) {
                    w = wt;
                    moved = true;
                    break;
                }
            }
            alpha *= 0.5;
            if (alpha < 1e-14) break;
        }
        if (!moved) return false;
    }
    auto ev = try_eval(w);
    if (!ev) return false;
    return one_norm(constraint_residual(w, ev->c_raw)) <= std::max(opts.feas_tol, theta_enter * 0.5);
}

}  // namespace

SolverReport solve(const NlpProblem& problem, VecD& x, const SolverOptions& opts) {
    require(problem.n > 0, "nlp: empty problem");
    require(static_cast<bool>(problem.objective) && static_cast<bool>(problem.gradient),
            "nlp: objective and gradient callbacks are required");
    if (problem.m_eq + problem.m_ineq > 0)
        require(static_cast<bool>(problem.constraints) && static_cast<bool>(problem.jacobian),
                "nlp: constraint callbacks are required");
    Solver s(problem, opts);
    SolverReport rep = s.run(x);
    // A converged flag must never coexist with real infeasibility.
    if (rep.status == SolveStatus::kConverged && rep.constraint_violation > opts.feas_tol)
        rep.status = SolveStatus::kError;
    return rep;
}

DerivativeCheck check_derivatives(const NlpProblem& problem, const VecD& x, double h) {
    DerivativeCheck out;
    VecD g = problem.gradient(x);
    const std::size_t m = problem.m_eq + problem.m_ineq;
    MatD J = m > 0 ? problem.jacobian(x) : MatD(0, problem.n);
    VecD xp = x, xm = x;
    for (std::size_t i = 0; i < problem.n; ++i) {
        double hi = h * std::max(1.0, std::fabs(x[i]));
        xp[i] = x[i] + hi;
        xm[i] = x[i] - hi;
        double fp = problem.objective(xp);
        double fm = problem.objective(xm);
        double fd = (fp - fm) / (2.0 * hi);
        double err = std::fabs(fd - g[i]) / std::max({1.0, std::fabs(fd), std::fabs(g[i])});
        if (err > out.grad_max_err) {
            out.grad_max_err = err;
            out.grad_worst = i;
        }
        if (m > 0) {
            VecD cp = problem.constraints(xp);
            VecD cm = problem.constraints(xm);
            for (std::size_t r = 0; r < m; ++r) {
                double fdc = (cp[r] - cm[r]) / (2.0 * hi);
                double errc =
                    std::fabs(fdc - J(r, i)) / std::max({1.0, std::fabs(fdc), std::fabs(J(r, i))});
                if (errc > out.jac_max_err) {
                    out.jac_max_err = errc;
                    out.jac_worst_row = r;
                    out.jac_worst_col = i;
                }
            }
        }
        xp[i] = x[i];
        xm[i] = x[i];
    }
    return out;
}

}  // namespace snmpc
