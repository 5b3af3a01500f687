#include "snmpc/collocation.hpp"

#include <cmath>
#include <optional>

namespace snmpc {

namespace {

// Coefficients (ascending powers) of the Lagrange polynomial through the
// given nodes that is 1 at nodes[j] and 0 elsewhere.
VecD lagrange_coeffs(const VecD& nodes, std::size_t j) {
    VecD p{1.0};
    for (std::size_t r = 0; r < nodes.size(); ++r) {
        if (r == j) continue;
        const double denom = nodes[j] - nodes[r];
        VecD q(p.size() + 1, 0.0);
        for (std::size_t k = 0; k < p.size(); ++k) {
            q[k] += p[k] * (-nodes[r]) / denom;
            q[k + 1] += p[k] / denom;
        }
        p = q;
    }
    return p;
}

double poly_eval(const VecD& p, double t) {
    double v = 0.0;
    for (std::size_t k = p.size(); k-- > 0;) v = v * t + p[k];
    return v;
}

double poly_deriv_eval(const VecD& p, double t) {
    double v = 0.0;
    for (std::size_t k = p.size(); k-- > 1;) v = v * t + p[k] * static_cast<double>(k);
    return v;
}

}  // namespace

CollocationTableau radau_tableau(std::size_t degree) {
    CollocationTableau tab;
    tab.degree = degree;
    switch (degree) {
        case 1:
            tab.tau = VecD{0.0, 1.0};
            break;
        case 2:
            tab.tau = VecD{0.0, 1.0 / 3.0, 1.0};
            break;
        case 3: {
            const double s6 = std::sqrt(6.0);
            tab.tau = VecD{0.0, (4.0 - s6) / 10.0, (4.0 + s6) / 10.0, 1.0};
            break;
        }
        default:
            throw std::invalid_argument("radau_tableau: unsupported degree (1..3)");
    }
    const std::size_t d = degree;
    tab.C = MatD(d + 1, d, 0.0);
    tab.D = VecD(d + 1, 0.0);
    for (std::size_t j = 0; j <= d; ++j) {
        VecD coeffs = lagrange_coeffs(tab.tau, j);
        tab.D[j] = poly_eval(coeffs, 1.0);
        for (std::size_t i = 0; i < d; ++i) tab.C(j, i) = poly_deriv_eval(coeffs, tab.tau[i + 1]);
    }
    return tab;
}

namespace detail {

MatD jacobian_x(const DualFn& f, const VecD& x, const VecD& u, std::size_t m) {
    Vec<Dual> xd(x.size()), ud(u.size());
    for (std::size_t i = 0; i < x.size(); ++i) xd[i] = Dual::seed(x[i], i);
    for (std::size_t i = 0; i < u.size(); ++i) ud[i] = Dual(u[i]);
    Vec<Dual> y = f(xd, ud);
    require(y.size() == m, "jacobian_x: output dimension mismatch");
    MatD J(m, x.size());
    for (std::size_t r = 0; r < m; ++r)
        for (std::size_t c = 0; c < x.size(); ++c) J(r, c) = y[r].deriv(c);
    return J;
}

MatD jacobian_u(const DualFn& f, const VecD& x, const VecD& u, std::size_t m) {
    Vec<Dual> xd(x.size()), ud(u.size());
    for (std::size_t i = 0; i < x.size(); ++i) xd[i] = Dual(x[i]);
    for (std::size_t i = 0; i < u.size(); ++i) ud[i] = Dual::seed(u[i], i);
    Vec<Dual> y = f(xd, ud);
    require(y.size() == m, "jacobian_u: output dimension mismatch");
    MatD J(m, u.size());
    for (std::size_t r = 0; r < m; ++r)
        for (std::size_t c = 0; c < u.size(); ++c) J(r, c) = y[r].deriv(c);
    return J;
}

}  // namespace detail

CollocationStepper::CollocationStepper(DualFn rhs, std::size_t n_x, std::size_t n_u, double dt,
                                       std::size_t degree, std::size_t segments)
    : rhs_(std::move(rhs)), n_x_(n_x), n_u_(n_u), dt_(dt), segments_(segments),
      tab_(radau_tableau(degree)) {
    require(dt > 0.0, "collocation: dt must be positive");
    require(segments >= 1, "collocation: segments must be >= 1");
}

namespace {

// Collocation Newton matrix: block (i,m) = C(m+1, i) I - h delta_im Jf(x_i).
bool assemble_jacobian(const CollocationTableau& tab, const DualFn& rhs, const MatD& nodes,
                       const VecD& u, double h, std::size_t n, MatD& J) {
    const std::size_t d = tab.degree;
    J = MatD(d * n, d * n, 0.0);
    VecD xi(n);
    for (std::size_t i = 0; i < d; ++i) {
        for (std::size_t r = 0; r < n; ++r) xi[r] = nodes(i, r);
        MatD Jf;
        try {
            Jf = snmpc::detail::jacobian_x(rhs, xi, u, n);
        } catch (...) {
            return false;
        }
        for (std::size_t m = 0; m < d; ++m) {
            const double c = tab.C(m + 1, i);
            for (std::size_t r = 0; r < n; ++r) J(i * n + r, m * n + r) += c;
        }
        for (std::size_t r = 0; r < n; ++r)
            for (std::size_t c2 = 0; c2 < n; ++c2) J(i * n + r, i * n + c2) -= h * Jf(r, c2);
    }
    return true;
}

// Residual of the collocation equations; false when the rhs is not
// evaluable at a node (e.g. nonphysical Newton trial).
bool assemble_residual(const CollocationTableau& tab, const DualFn& rhs, const VecD& x_start,
                       const MatD& nodes, const VecD& u, double h, std::size_t n, VecD& G) {
    const std::size_t d = tab.degree;
    G = VecD(d * n, 0.0);
    VecD xi(n);
    for (std::size_t i = 0; i < d; ++i) {
        for (std::size_t r = 0; r < n; ++r) G[i * n + r] = tab.C(0, i) * x_start[r];
        for (std::size_t m = 0; m < d; ++m) {
            const double c = tab.C(m + 1, i);
            for (std::size_t r = 0; r < n; ++r) G[i * n + r] += c * nodes(m, r);
        }
        for (std::size_t r = 0; r < n; ++r) xi[r] = nodes(i, r);
        VecD f;
        try {
            f = rhs.value(xi, u);
        } catch (...) {
            return false;
        }
        for (std::size_t r = 0; r < n; ++r) {
            if (!std::isfinite(f[r])) return false;
            G[i * n + r] -= h * f[r];
        }
    }
    return true;
}

double scaled_inf_norm(const VecD& G, const VecD& x_start) {
    double scale = 1.0;
    for (auto v : x_start) scale = std::max(scale, std::fabs(v));
    double m = 0.0;
    for (auto v : G) m = std::max(m, std::fabs(v));
    return m / scale;
}

// Damped Newton on the stacked collocation system from a given node
// initialization.
std::optional<MatD> newton_on_segment(const CollocationTableau& tab, const DualFn& rhs,
                                      const VecD& x_start, const VecD& u, double h, std::size_t n,
                                      MatD nodes) {
    const std::size_t d = tab.degree;
    VecD G;
    if (!assemble_residual(tab, rhs, x_start, nodes, u, h, n, G)) return std::nullopt;
    double err = scaled_inf_norm(G, x_start);
    const double tol = 1e-12;

    MatD J;
    std::optional<LuFactor> lu;
    for (int it = 0; it < 60 && err > tol; ++it) {
        if (!assemble_jacobian(tab, rhs, nodes, u, h, n, J)) return std::nullopt;
        lu.emplace(J);
        if (lu->singular()) return std::nullopt;
        VecD step = G;
        lu->solve(step);

        // Backtrack on the residual norm; unphysical trials count as infinite.
        double alpha = 1.0;
        bool moved = false;
        MatD trial(d, n);
        VecD Gt;
        while (alpha >= 1e-4) {
            for (std::size_t i = 0; i < d; ++i)
                for (std::size_t r = 0; r < n; ++r)
                    trial(i, r) = nodes(i, r) - alpha * step[i * n + r];
            if (assemble_residual(tab, rhs, x_start, trial, u, h, n, Gt)) {
                double err_t = scaled_inf_norm(Gt, x_start);
                if (err_t <= err * (1.0 - 1e-4 * alpha) || err_t <= tol) {
                    nodes = trial;
                    G = Gt;
                    err = err_t;
                    moved = true;
                    break;
                }
            }
            alpha *= 0.5;
        }
        if (!moved) return std::nullopt;
    }
    if (err > 1e-10) return std::nullopt;

    // One full-Newton polish at the solution drives the residual to roundoff,
    // which keeps the integration map deterministic to machine precision.
    if (assemble_jacobian(tab, rhs, nodes, u, h, n, J)) {
        LuFactor lup(J);
        if (!lup.singular()) {
            VecD step = G;
            lup.solve(step);
            MatD polished(d, n);
            for (std::size_t i = 0; i < d; ++i)
                for (std::size_t r = 0; r < n; ++r)
                    polished(i, r) = nodes(i, r) - step[i * n + r];
            VecD Gp;
            if (assemble_residual(tab, rhs, x_start, polished, u, h, n, Gp) &&
                scaled_inf_norm(Gp, x_start) <= err)
                nodes = polished;
        }
    }
    return nodes;
}

// A-stable single-node solve: z - x0 - dt f(z, u) = 0 by damped Newton.
std::optional<VecD> implicit_euler_node(const DualFn& rhs, const VecD& x0, const VecD& u,
                                        double dt, std::size_t n) {
    VecD z = x0;
    VecD G(n);
    auto residual = [&](const VecD& zz, VecD& g) {
        VecD f;
        try {
            f = rhs.value(zz, u);
        } catch (...) {
            return false;
        }
        for (std::size_t r = 0; r < n; ++r) {
            if (!std::isfinite(f[r])) return false;
            g[r] = zz[r] - x0[r] - dt * f[r];
        }
        return true;
    };
    if (!residual(z, G)) return std::nullopt;
    double err = scaled_inf_norm(G, x0);
    for (int it = 0; it < 60 && err > 1e-12; ++it) {
        MatD Jf;
        try {
            Jf = snmpc::detail::jacobian_x(rhs, z, u, n);
        } catch (...) {
            return std::nullopt;
        }
        MatD J(n, n, 0.0);
        for (std::size_t r = 0; r < n; ++r) {
            J(r, r) = 1.0;
            for (std::size_t c = 0; c < n; ++c) J(r, c) -= dt * Jf(r, c);
        }
        LuFactor lu(J);
        if (lu.singular()) return std::nullopt;
        VecD step = G;
        lu.solve(step);
        double alpha = 1.0;
        bool moved = false;
        VecD zt(n), Gt(n);
        while (alpha >= 1e-4) {
            for (std::size_t r = 0; r < n; ++r) zt[r] = z[r] - alpha * step[r];
            if (residual(zt, Gt)) {
                double err_t = scaled_inf_norm(Gt, x0);
                if (err_t <= err * (1.0 - 1e-4 * alpha) || err_t <= 1e-12) {
                    z = zt;
                    G = Gt;
                    err = err_t;
                    moved = true;
                    break;
                }
            }
            alpha *= 0.5;
        }
        if (!moved) return std::nullopt;
    }
    return err <= 1e-8 ? std::optional<VecD>(z) : std::nullopt;
}

// Segment solve with two initializations: constant nodes first, then an
// implicit-Euler walk through the collocation points (robust on stiff
// stretches). nullopt only when both fail; the caller may then bisect.
std::optional<MatD> try_segment(const CollocationTableau& tab, const DualFn& rhs,
                                const VecD& x_start, const VecD& u, double h, std::size_t n) {
    const std::size_t d = tab.degree;
    MatD nodes(d, n);
    for (std::size_t i = 0; i < d; ++i)
        for (std::size_t r = 0; r < n; ++r) nodes(i, r) = x_start[r];
    if (auto sol = newton_on_segment(tab, rhs, x_start, u, h, n, nodes)) return sol;

    VecD z = x_start;
    double tau_prev = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
        double dt = (tab.tau[i + 1] - tau_prev) * h;
        tau_prev = tab.tau[i + 1];
        auto zi = implicit_euler_node(rhs, z, u, dt, n);
        if (!zi) return std::nullopt;
        z = *zi;
        for (std::size_t r = 0; r < n; ++r) nodes(i, r) = z[r];
    }
    return newton_on_segment(tab, rhs, x_start, u, h, n, nodes);
}

}  // namespace

MatD CollocationStepper::segment_nodes(const VecD& x_start, const VecD& u) const {
    require(x_start.size() == n_x_ && u.size() == n_u_, "collocation: dimension mismatch");
    auto nodes = try_segment(tab_, rhs_, x_start, u, segment_length(), n_x_);
    if (!nodes) throw std::runtime_error("collocation: root-solve did not converge");
    return *nodes;
}

namespace {
constexpr int kMaxBisect = 6;
}

VecD CollocationStepper::step_value(const VecD& x0, const VecD& u, double h, int depth) const {
    auto nodes = try_segment(tab_, rhs_, x0, u, h, n_x_);
    if (nodes) {
        VecD next(n_x_);
        for (std::size_t r = 0; r < n_x_; ++r) {
            double v = tab_.D[0] * x0[r];
            for (std::size_t j = 0; j < tab_.degree; ++j) v += tab_.D[j + 1] * (*nodes)(j, r);
            next[r] = v;
        }
        return next;
    }
    if (depth >= kMaxBisect)
        throw std::runtime_error(
            "collocation: root-solve did not converge (step bisection exhausted)");
    VecD mid = step_value(x0, u, 0.5 * h, depth + 1);
    return step_value(mid, u, 0.5 * h, depth + 1);
}

VecD CollocationStepper::step(const VecD& x0, const VecD& u) const {
    require(x0.size() == n_x_ && u.size() == n_u_, "collocation: dimension mismatch");
    VecD x = x0;
    for (std::size_t s = 0; s < segments_; ++s) x = step_value(x, u, segment_length(), 0);
    return x;
}

VecD CollocationStepper::step_once(const VecD& x0, const VecD& u, double h) const {
    auto nodes = try_segment(tab_, rhs_, x0, u, h, n_x_);
    if (!nodes) throw std::runtime_error("collocation: single-step solve failed");
    VecD next(n_x_);
    for (std::size_t r = 0; r < n_x_; ++r) {
        double v = tab_.D[0] * x0[r];
        for (std::size_t j = 0; j < tab_.degree; ++j) v += tab_.D[j + 1] * (*nodes)(j, r);
        next[r] = v;
    }
    return next;
}

void CollocationStepper::step_dual_rec(VecD& x_val, MatD& dx, const VecD& u_val, const MatD& du,
                                       double h, int depth) const {
    const std::size_t d = tab_.degree;
    const std::size_t width = dx.cols();
    auto nodes = try_segment(tab_, rhs_, x_val, u_val, h, n_x_);
    if (!nodes) {
        if (depth >= kMaxBisect)
            throw std::runtime_error(
                "collocation: root-solve did not converge (step bisection exhausted)");
        step_dual_rec(x_val, dx, u_val, du, 0.5 * h, depth + 1);
        step_dual_rec(x_val, dx, u_val, du, 0.5 * h, depth + 1);
        return;
    }

    // Implicit-function tangents with the Jacobian refreshed at the solution:
    // J_X dX = -C(0,i) dx - (-h df/du du) per node block.
    MatD J;
    if (!assemble_jacobian(tab_, rhs_, *nodes, u_val, h, n_x_, J))
        throw std::runtime_error("collocation: tangent Jacobian evaluation failed");
    LuFactor lu(J);
    if (lu.singular()) throw std::runtime_error("collocation: singular tangent system");

    const auto& kern = kernels::active();
    MatD B(d * n_x_, width, 0.0);
    VecD xi(n_x_);
    for (std::size_t i = 0; i < d; ++i) {
        for (std::size_t r = 0; r < n_x_; ++r)
            kern.axpy(width, -tab_.C(0, i), dx.row(r), B.row(i * n_x_ + r));
        for (std::size_t r = 0; r < n_x_; ++r) xi[r] = (*nodes)(i, r);
        MatD Ju = snmpc::detail::jacobian_u(rhs_, xi, u_val, n_x_);
        for (std::size_t r = 0; r < n_x_; ++r)
            for (std::size_t c = 0; c < n_u_; ++c)
                if (Ju(r, c) != 0.0) kern.axpy(width, h * Ju(r, c), du.row(c), B.row(i * n_x_ + r));
    }
    lu.solve_rows(B);

    VecD x_next(n_x_);
    MatD dx_next(n_x_, width, 0.0);
    for (std::size_t r = 0; r < n_x_; ++r) {
        double v = tab_.D[0] * x_val[r];
        kern.axpy(width, tab_.D[0], dx.row(r), dx_next.row(r));
        for (std::size_t j = 0; j < d; ++j) {
            v += tab_.D[j + 1] * (*nodes)(j, r);
            kern.axpy(width, tab_.D[j + 1], B.row(j * n_x_ + r), dx_next.row(r));
        }
        x_next[r] = v;
    }
    x_val = x_next;
    dx = std::move(dx_next);
}

Vec<Dual> CollocationStepper::step(const Vec<Dual>& x0, const Vec<Dual>& u) const {
    require(x0.size() == n_x_ && u.size() == n_u_, "collocation: dimension mismatch");
    std::size_t width = 0;
    for (std::size_t i = 0; i < n_x_; ++i) width = std::max(width, x0[i].tangent_size());
    for (std::size_t i = 0; i < n_u_; ++i) width = std::max(width, u[i].tangent_size());

    VecD u_val(n_u_);
    for (std::size_t i = 0; i < n_u_; ++i) u_val[i] = u[i].value();
    MatD du(n_u_, width);
    for (std::size_t i = 0; i < n_u_; ++i) u[i].copy_tangent(du.row(i), width);
    VecD x_val(n_x_);
    for (std::size_t i = 0; i < n_x_; ++i) x_val[i] = x0[i].value();
    MatD dx(n_x_, width);
    for (std::size_t i = 0; i < n_x_; ++i) x0[i].copy_tangent(dx.row(i), width);

    for (std::size_t s = 0; s < segments_; ++s)
        step_dual_rec(x_val, dx, u_val, du, segment_length(), 0);

    Vec<Dual> out(n_x_);
    for (std::size_t r = 0; r < n_x_; ++r) out[r] = Dual::with_tangent(x_val[r], dx.row(r), width);
    return out;
}

DualFn CollocationStepper::as_dualfn() const {
    DualFn fn;
    auto self = *this;
    fn.value = [self](const VecD& x, const VecD& u) { return self.step(x, u); };
    fn.dual = [self](const Vec<Dual>& x, const Vec<Dual>& u) { return self.step(x, u); };
    return fn;
}

ImplicitRkStepper::ImplicitRkStepper(DualFn rhs, std::size_t n_x, std::size_t n_u, double dt,
                                     std::size_t substeps)
    : rhs_(std::move(rhs)), n_x_(n_x), n_u_(n_u), dt_(dt), substeps_(substeps) {
    require(dt > 0.0 && substeps >= 1, "implicit-rk: bad step configuration");
}

VecD ImplicitRkStepper::step(const VecD& x0, const VecD& u) const {
    const double h = dt_ / static_cast<double>(substeps_);
    VecD x = x0;
    VecD mid(n_x_), G(n_x_);
    for (std::size_t s = 0; s < substeps_; ++s) {
        VecD xn = x;  // Newton on xn: xn - x - h f((x+xn)/2, u) = 0
        bool done = false;
        for (int it = 0; it < 50 && !done; ++it) {
            for (std::size_t r = 0; r < n_x_; ++r) mid[r] = 0.5 * (x[r] + xn[r]);
            VecD f = rhs_.value(mid, u);
            double err = 0.0;
            for (std::size_t r = 0; r < n_x_; ++r) {
                G[r] = xn[r] - x[r] - h * f[r];
                err = std::max(err, std::fabs(G[r]));
            }
            double scale = 1.0;
            for (auto v : x) scale = std::max(scale, std::fabs(v));
            if (err <= 1e-12 * scale) {
                done = true;
                break;
            }
            MatD Jf = snmpc::detail::jacobian_x(rhs_, mid, u, n_x_);
            MatD J(n_x_, n_x_, 0.0);
            for (std::size_t r = 0; r < n_x_; ++r) {
                J(r, r) = 1.0;
                for (std::size_t c = 0; c < n_x_; ++c) J(r, c) -= 0.5 * h * Jf(r, c);
            }
            LuFactor lu(J);
            if (lu.singular()) throw std::runtime_error("implicit-rk: singular Newton matrix");
            VecD stepv = G;
            lu.solve(stepv);
            for (std::size_t r = 0; r < n_x_; ++r) xn[r] -= stepv[r];
            if (it == 49)
                throw std::runtime_error("implicit-rk: Newton did not converge, residual " +
                                         std::to_string(err));
        }
        x = xn;
    }
    return x;
}

Vec<Dual> ImplicitRkStepper::step(const Vec<Dual>& x0, const Vec<Dual>& u) const {
    // Implicit-function tangents around the midpoint solve per substep.
    const double h = dt_ / static_cast<double>(substeps_);
    std::size_t width = 0;
    for (std::size_t i = 0; i < n_x_; ++i) width = std::max(width, x0[i].tangent_size());
    for (std::size_t i = 0; i < n_u_; ++i) width = std::max(width, u[i].tangent_size());

    VecD u_val(n_u_);
    for (std::size_t i = 0; i < n_u_; ++i) u_val[i] = u[i].value();
    MatD du(n_u_, width);
    for (std::size_t i = 0; i < n_u_; ++i) u[i].copy_tangent(du.row(i), width);
    VecD x_val(n_x_);
    for (std::size_t i = 0; i < n_x_; ++i) x_val[i] = x0[i].value();
    MatD dx(n_x_, width);
    for (std::size_t i = 0; i < n_x_; ++i) x0[i].copy_tangent(dx.row(i), width);

    ImplicitRkStepper single(rhs_, n_x_, n_u_, h, 1);
    const auto& kern = kernels::active();
    VecD mid(n_x_);
    for (std::size_t s = 0; s < substeps_; ++s) {
        VecD xn = single.step(x_val, u_val);
        for (std::size_t r = 0; r < n_x_; ++r) mid[r] = 0.5 * (x_val[r] + xn[r]);
        MatD Jf = snmpc::detail::jacobian_x(rhs_, mid, u_val, n_x_);
        MatD Ju = snmpc::detail::jacobian_u(rhs_, mid, u_val, n_x_);
        // (I - h/2 Jf) dxn = (I + h/2 Jf) dx + h Ju du
        MatD A(n_x_, n_x_, 0.0);
        for (std::size_t r = 0; r < n_x_; ++r) {
            A(r, r) = 1.0;
            for (std::size_t c = 0; c < n_x_; ++c) A(r, c) -= 0.5 * h * Jf(r, c);
        }
        MatD B(n_x_, width, 0.0);
        for (std::size_t r = 0; r < n_x_; ++r) {
            kern.axpy(width, 1.0, dx.row(r), B.row(r));
            for (std::size_t c = 0; c < n_x_; ++c)
                if (Jf(r, c) != 0.0) kern.axpy(width, 0.5 * h * Jf(r, c), dx.row(c), B.row(r));
            for (std::size_t c = 0; c < n_u_; ++c)
                if (Ju(r, c) != 0.0) kern.axpy(width, h * Ju(r, c), du.row(c), B.row(r));
        }
        LuFactor lu(A);
        if (lu.singular()) throw std::runtime_error("implicit-rk: singular tangent system");
        lu.solve_rows(B);
        x_val = xn;
        dx = std::move(B);
    }

    Vec<Dual> out(n_x_);
    for (std::size_t r = 0; r < n_x_; ++r) out[r] = Dual::with_tangent(x_val[r], dx.row(r), width);
    return out;
}

DualFn ImplicitRkStepper::as_dualfn() const {
    DualFn fn;
    auto self = *this;
    fn.value = [self](const VecD& x, const VecD& u) { return self.step(x, u); };
    fn.dual = [self](const Vec<Dual>& x, const Vec<Dual>& u) { return self.step(x, u); };
    return fn;
}

}  // namespace snmpc
