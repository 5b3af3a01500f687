#include <algorithm>
#include <limits>
#include <cmath>

#include "snmpc/ocp.hpp"

// Simultaneous transcription: the decision vector stacks the controls, the
// per-sigma-point collocation node states of every interval, the stage means
// and the pre-freeze covariances (lower-triangular packing). Collocation
// defects and the belief recursion become equality constraints; covariances
// past the robust horizon alias the stage-t_R variables, which keeps the
// freeze exact by construction.
//
// Each constraint block touches only a handful of variables, so its rows are
// differentiated with block-local dual seeds and scattered into the dense
// Jacobian. The mode exists for fidelity cross-checks of the sequential
// transcription; the dense NLP solver bounds the problem size.

namespace snmpc {

namespace {

std::size_t vech_size(std::size_t n) { return n * (n + 1) / 2; }

std::size_t vech_index(std::size_t i, std::size_t j) {
    if (j > i) std::swap(i, j);
    return i * (i + 1) / 2 + j;
}

template <class T>
Mat<T> mat_from_vech(const Vec<T>& v, std::size_t n) {
    Mat<T> M(n, n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) M(i, j) = v[vech_index(i, j)];
    return M;
}

struct SimLayout {
    std::size_t N, P, S, d, nx, nu, nc, tr;
    std::size_t off_nodes, off_means, off_covs, n_vars;
    std::size_t rows_defect, rows_mean, rows_cov, m_eq;

    explicit SimLayout(const OcpSpec& spec) {
        N = spec.horizon;
        P = 2 * spec.ut.L + 1;
        require(spec.model.stepper != nullptr,
                "simultaneous transcription requires a collocation-discretized model");
        S = spec.model.stepper->segments();
        d = spec.model.stepper->degree();
        nx = spec.n_x();
        nu = spec.n_u();
        nc = vech_size(nx);
        tr = spec.t_r;
        off_nodes = N * nu;
        off_means = off_nodes + N * P * S * d * nx;
        off_covs = off_means + N * nx;
        n_vars = off_covs + tr * nc;
        rows_defect = N * P * S * d * nx;
        rows_mean = N * nx;
        rows_cov = tr * nc;
        m_eq = rows_defect + rows_mean + rows_cov;
    }

    std::size_t control(std::size_t k) const { return k * nu; }
    std::size_t node(std::size_t k, std::size_t i, std::size_t s, std::size_t j) const {
        return off_nodes + (((k * P + i) * S + s) * d + j) * nx;
    }
    // Stage means/covariances are indexed 1..N / 1..tr.
    std::size_t mean(std::size_t k) const { return off_means + (k - 1) * nx; }
    std::size_t covv(std::size_t k) const { return off_covs + (k - 1) * nc; }
    // Variable block holding the covariance used at stage k, or none when it
    // is the (constant) initial covariance.
    std::optional<std::size_t> cov_source(std::size_t k) const {
        if (k == 0 || tr == 0) return k == 0 ? std::nullopt : cov_source(0);
        if (k <= tr) return covv(k);
        return covv(tr);
    }

    std::size_t r_defect(std::size_t k, std::size_t i, std::size_t s) const {
        return ((k * P + i) * S + s) * d * nx;
    }
    std::size_t r_mean(std::size_t k) const { return rows_defect + k * nx; }  // stage k -> k+1
    std::size_t r_cov(std::size_t k) const { return rows_defect + rows_mean + k * nc; }
};

// Sigma point i of the belief (mean, vech covariance), differentiable.
template <class T>
Vec<T> sigma_from_vech(const Vec<T>& mean, const Vec<T>& covv, const UTConfig& cfg,
                       std::size_t i) {
    const std::size_t n = mean.size();
    if (i == 0) return mean;
    Mat<T> cov = mat_from_vech(covv, n);
    auto chol = cholesky_sqrt(cov, kUkfJitterMax);
    const double spread = std::sqrt(static_cast<double>(cfg.L) + cfg.lambda());
    const std::size_t col = (i - 1) % n;
    const double sign = i <= n ? 1.0 : -1.0;
    Vec<T> out(n);
    for (std::size_t r = 0; r < n; ++r) out[r] = mean[r] + (sign * spread) * chol.L(r, col);
    return out;
}

// Defect rows of one segment: C(0,j) x_start + sum_m C(m+1,j) node_m
// - h f(node_j, u), stacked over the d nodes.
template <class T>
void defect_rows(const CollocationTableau& tab, const DualFn& rhs, double h, const Vec<T>& x_start,
                 const std::vector<Vec<T>>& nodes, const Vec<T>& u, std::vector<T>& out) {
    const std::size_t d = tab.degree;
    const std::size_t n = x_start.size();
    out.assign(d * n, T(0.0));
    for (std::size_t j = 0; j < d; ++j) {
        for (std::size_t r = 0; r < n; ++r) {
            T g = tab.C(0, j) * x_start[r];
            for (std::size_t m = 0; m < d; ++m) acc_axpy(g, tab.C(m + 1, j), nodes[m][r]);
            out[j * n + r] = std::move(g);
        }
        Vec<T> f = rhs(nodes[j], u);
        for (std::size_t r = 0; r < n; ++r) out[j * n + r] -= h * f[r];
    }
}

struct SimultaneousEvaluator {
    OcpSpec spec;
    SimLayout L;
    UTWeights weights;
    VecD quantiles;
    std::size_t m_in = 0;

    mutable VecD z_val;
    mutable double f_val = 0.0;
    mutable VecD c_val;
    mutable VecD z_der;
    mutable VecD grad;
    mutable MatD jac;

    explicit SimultaneousEvaluator(OcpSpec s)
        : spec(std::move(s)), L(spec), weights(ut_weights(spec.ut)) {
        quantiles = VecD(spec.constraints.size());
        for (std::size_t i = 0; i < spec.constraints.size(); ++i)
            quantiles[i] = spec.constraints[i].backoff();
        m_in = spec.constraints.size();
    }

    // Mean of stage k (variable for k >= 1, initial belief for k = 0).
    VecD stage_mean(const VecD& z, std::size_t k) const {
        if (k == 0) return spec.initial_belief.mean;
        return slice(z, L.mean(k), L.nx);
    }

    VecD stage_covv(const VecD& z, std::size_t k) const {
        auto src = L.cov_source(k);
        if (!src) {
            VecD out(L.nc);
            for (std::size_t i = 0; i < L.nx; ++i)
                for (std::size_t j = 0; j <= i; ++j)
                    out[vech_index(i, j)] = spec.initial_belief.cov(i, j);
            return out;
        }
        return slice(z, *src, L.nc);
    }

    // ---- value pass --------------------------------------------------------

    void ensure_value(const VecD& z) const {
        if (z_val.size() == z.size()) {
            bool same = true;
            for (std::size_t i = 0; i < z.size() && same; ++i) same = z[i] == z_val[i];
            if (same) return;
        }
        const auto& tab = spec.model.stepper->tableau();
        const double h = spec.model.stepper->segment_length();
        c_val = VecD(L.m_eq + m_in, 0.0);

        std::vector<VecD> nodes(L.d, VecD(L.nx));
        std::vector<double> rows;
        for (std::size_t k = 0; k < L.N; ++k) {
            VecD u = slice(z, L.control(k), L.nu);
            VecD mean_k = stage_mean(z, k);
            VecD covv_k = stage_covv(z, k);
            for (std::size_t i = 0; i < L.P; ++i) {
                VecD start = sigma_from_vech(mean_k, covv_k, spec.ut, i);
                for (std::size_t s = 0; s < L.S; ++s) {
                    for (std::size_t j = 0; j < L.d; ++j)
                        nodes[j] = slice(z, L.node(k, i, s, j), L.nx);
                    defect_rows(tab, spec.model.stepper->rhs(), h, start, nodes, u, rows);
                    std::copy(rows.begin(), rows.end(), c_val.data() + L.r_defect(k, i, s));
                    start = nodes[L.d - 1];
                }
            }
            // Mean and covariance recursions at the interval boundary.
            VecD mean_next = stage_mean(z, k + 1);
            VecD pred_mean(L.nx, 0.0);
            for (std::size_t i = 0; i < L.P; ++i) {
                VecD xe = slice(z, L.node(k, i, L.S - 1, L.d - 1), L.nx);
                for (std::size_t r = 0; r < L.nx; ++r)
                    pred_mean[r] += weights.mean_w[i] * xe[r];
            }
            for (std::size_t r = 0; r < L.nx; ++r)
                c_val[L.r_mean(k) + r] = mean_next[r] - pred_mean[r];

            if (k + 1 <= L.tr) {
                VecD covv_next = stage_covv(z, k + 1);
                MatD pred(L.nx, L.nx, 0.0);
                VecD diff(L.nx);
                for (std::size_t i = 0; i < L.P; ++i) {
                    VecD xe = slice(z, L.node(k, i, L.S - 1, L.d - 1), L.nx);
                    for (std::size_t r = 0; r < L.nx; ++r) diff[r] = xe[r] - mean_next[r];
                    outer_acc(pred, weights.cov_w[i], diff, diff);
                }
                for (std::size_t r = 0; r < L.nx; ++r)
                    for (std::size_t cc = 0; cc <= r; ++cc)
                        c_val[L.r_cov(k) + vech_index(r, cc)] =
                            covv_next[vech_index(r, cc)] -
                            (pred(r, cc) + spec.model.noise.process_cov(r, cc));
            }
        }

        // Tightened chance constraints on the stage beliefs.
        for (std::size_t ci = 0; ci < m_in; ++ci) {
            const auto& c = spec.constraints[ci];
            VecD mean = stage_mean(z, c.stage);
            VecD covv = stage_covv(z, c.stage);
            MatD cov = mat_from_vech(covv, L.nx);
            c_val[L.m_eq + ci] = tighten_smoothed(c.h, c.g, quantiles[ci], mean, cov);
        }

        // Objective.
        {
            VecD mean_n = stage_mean(z, L.N);
            VecD covv_n = stage_covv(z, L.N);
            double obj = -(mean_n[2] * mean_n[4] + covv_n[vech_index(2, 4)]);
            for (std::size_t k = 1; k < L.N; ++k)
                for (std::size_t j = 0; j < L.nu; ++j) {
                    double du = z[L.control(k) + j] - z[L.control(k - 1) + j];
                    obj += spec.smoothing_diag[j] * du * du;
                }
            f_val = obj;
        }
        z_val = z;
    }

    static VecD slice(const VecD& z, std::size_t off, std::size_t n) {
        VecD out(n);
        for (std::size_t i = 0; i < n; ++i) out[i] = z[off + i];
        return out;
    }

    // ---- derivative pass ---------------------------------------------------

    // Seed the duals of one block: locals[] lists global indices.
    Vec<Dual> seed_block(const VecD& z, const std::vector<std::size_t>& globals) const {
        Vec<Dual> out(globals.size());
        for (std::size_t i = 0; i < globals.size(); ++i)
            out[i] = Dual::seed(z[globals[i]], i);
        return out;
    }

    void scatter_row(std::size_t row, const Dual& v, const std::vector<std::size_t>& globals,
                     MatD& J) const {
        for (std::size_t i = 0; i < globals.size(); ++i) {
            double dv = v.deriv(i);
            if (dv != 0.0) J(row, globals[i]) = dv;
        }
    }

    void ensure_derivs(const VecD& z) const {
        if (z_der.size() == z.size()) {
            bool same = true;
            for (std::size_t i = 0; i < z.size() && same; ++i) same = z[i] == z_der[i];
            if (same) return;
        }
        ensure_value(z);
        const auto& tab = spec.model.stepper->tableau();
        const double h = spec.model.stepper->segment_length();
        jac = MatD(L.m_eq + m_in, L.n_vars, 0.0);
        grad = VecD(L.n_vars, 0.0);

        auto push_range = [](std::vector<std::size_t>& v, std::size_t off, std::size_t n) {
            for (std::size_t i = 0; i < n; ++i) v.push_back(off + i);
        };

        std::vector<Dual> rows;
        for (std::size_t k = 0; k < L.N; ++k) {
            for (std::size_t i = 0; i < L.P; ++i) {
                for (std::size_t s = 0; s < L.S; ++s) {
                    std::vector<std::size_t> g;
                    push_range(g, L.control(k), L.nu);
                    std::size_t start_vars = 0;
                    bool start_is_sigma = s == 0;
                    if (start_is_sigma) {
                        if (k >= 1) {
                            push_range(g, L.mean(k), L.nx);
                            start_vars += L.nx;
                        }
                        if (auto src = L.cov_source(k)) {
                            push_range(g, *src, L.nc);
                            start_vars += L.nc;
                        }
                    } else {
                        push_range(g, L.node(k, i, s - 1, L.d - 1), L.nx);
                        start_vars += L.nx;
                    }
                    for (std::size_t j = 0; j < L.d; ++j) push_range(g, L.node(k, i, s, j), L.nx);

                    Vec<Dual> loc = seed_block(z, g);
                    Vec<Dual> u(L.nu);
                    for (std::size_t j = 0; j < L.nu; ++j) u[j] = loc[j];
                    Vec<Dual> start(L.nx);
                    std::size_t pos = L.nu;
                    if (start_is_sigma) {
                        Vec<Dual> mean_k(L.nx);
                        if (k >= 1) {
                            for (std::size_t r = 0; r < L.nx; ++r) mean_k[r] = loc[pos + r];
                            pos += L.nx;
                        } else {
                            for (std::size_t r = 0; r < L.nx; ++r)
                                mean_k[r] = Dual(spec.initial_belief.mean[r]);
                        }
                        Vec<Dual> covv_k(L.nc);
                        if (L.cov_source(k)) {
                            for (std::size_t r = 0; r < L.nc; ++r) covv_k[r] = loc[pos + r];
                            pos += L.nc;
                        } else {
                            for (std::size_t r = 0; r < L.nx; ++r)
                                for (std::size_t cc = 0; cc <= r; ++cc)
                                    covv_k[vech_index(r, cc)] =
                                        Dual(spec.initial_belief.cov(r, cc));
                        }
                        start = sigma_from_vech(mean_k, covv_k, spec.ut, i);
                    } else {
                        for (std::size_t r = 0; r < L.nx; ++r) start[r] = loc[pos + r];
                        pos += L.nx;
                    }
                    std::vector<Vec<Dual>> nodes(L.d, Vec<Dual>(L.nx));
                    for (std::size_t j = 0; j < L.d; ++j)
                        for (std::size_t r = 0; r < L.nx; ++r) nodes[j][r] = loc[pos + j * L.nx + r];

                    defect_rows(tab, spec.model.stepper->rhs(), h, start, nodes, u, rows);
                    for (std::size_t rr = 0; rr < rows.size(); ++rr)
                        scatter_row(L.r_defect(k, i, s) + rr, rows[rr], g, jac);
                }
            }

            // Mean recursion rows.
            {
                std::vector<std::size_t> g;
                for (std::size_t i = 0; i < L.P; ++i)
                    push_range(g, L.node(k, i, L.S - 1, L.d - 1), L.nx);
                push_range(g, L.mean(k + 1), L.nx);
                Vec<Dual> loc = seed_block(z, g);
                for (std::size_t r = 0; r < L.nx; ++r) {
                    Dual v = loc[L.P * L.nx + r];  // mean_{k+1}[r]
                    for (std::size_t i = 0; i < L.P; ++i)
                        v.axpy(-weights.mean_w[i], loc[i * L.nx + r]);
                    scatter_row(L.r_mean(k) + r, v, g, jac);
                }
            }

            // Covariance recursion rows.
            if (k + 1 <= L.tr) {
                std::vector<std::size_t> g;
                for (std::size_t i = 0; i < L.P; ++i)
                    push_range(g, L.node(k, i, L.S - 1, L.d - 1), L.nx);
                push_range(g, L.mean(k + 1), L.nx);
                push_range(g, L.covv(k + 1), L.nc);
                Vec<Dual> loc = seed_block(z, g);
                Vec<Dual> mean_next(L.nx);
                for (std::size_t r = 0; r < L.nx; ++r) mean_next[r] = loc[L.P * L.nx + r];
                Mat<Dual> pred(L.nx, L.nx, Dual(0.0));
                Vec<Dual> diff(L.nx);
                for (std::size_t i = 0; i < L.P; ++i) {
                    for (std::size_t r = 0; r < L.nx; ++r)
                        diff[r] = loc[i * L.nx + r] - mean_next[r];
                    outer_acc(pred, weights.cov_w[i], diff, diff);
                }
                for (std::size_t r = 0; r < L.nx; ++r)
                    for (std::size_t cc = 0; cc <= r; ++cc) {
                        Dual v = loc[(L.P + 1) * L.nx + vech_index(r, cc)] - pred(r, cc) -
                                 spec.model.noise.process_cov(r, cc);
                        scatter_row(L.r_cov(k) + vech_index(r, cc), v, g, jac);
                    }
            }
        }

        // Inequalities.
        for (std::size_t ci = 0; ci < m_in; ++ci) {
            const auto& c = spec.constraints[ci];
            std::vector<std::size_t> g;
            bool mean_is_var = c.stage >= 1;
            if (mean_is_var) push_range(g, L.mean(c.stage), L.nx);
            auto src = L.cov_source(c.stage);
            if (src) push_range(g, *src, L.nc);
            Vec<Dual> loc = seed_block(z, g);
            Vec<Dual> mean(L.nx);
            std::size_t pos = 0;
            for (std::size_t r = 0; r < L.nx; ++r) mean[r] = loc[pos + r];
            pos += L.nx;
            Vec<Dual> covv(L.nc);
            if (src) {
                for (std::size_t r = 0; r < L.nc; ++r) covv[r] = loc[pos + r];
            } else {
                for (std::size_t r = 0; r < L.nx; ++r)
                    for (std::size_t cc = 0; cc <= r; ++cc)
                        covv[vech_index(r, cc)] = Dual(spec.initial_belief.cov(r, cc));
            }
            Mat<Dual> cov = mat_from_vech(covv, L.nx);
            Dual v = tighten_smoothed(c.h, c.g, quantiles[ci], mean, cov);
            scatter_row(L.m_eq + ci, v, g, jac);
        }

        // Objective gradient.
        {
            std::vector<std::size_t> g;
            push_range(g, 0, L.N * L.nu);
            push_range(g, L.mean(L.N), L.nx);
            auto src = L.cov_source(L.N);
            if (src) push_range(g, *src, L.nc);
            Vec<Dual> loc = seed_block(z, g);
            Dual obj(0.0);
            std::size_t base = L.N * L.nu;
            Dual cov24 = src ? loc[base + L.nx + vech_index(2, 4)]
                             : Dual(spec.initial_belief.cov(2, 4));
            obj = -(loc[base + 2] * loc[base + 4] + cov24);
            for (std::size_t k = 1; k < L.N; ++k)
                for (std::size_t j = 0; j < L.nu; ++j) {
                    Dual du = loc[k * L.nu + j] - loc[(k - 1) * L.nu + j];
                    obj += spec.smoothing_diag[j] * du * du;
                }
            for (std::size_t i = 0; i < g.size(); ++i) {
                double dv = obj.deriv(i);
                if (dv != 0.0) grad[g[i]] = dv;
            }
        }
        z_der = z;
    }
};

}  // namespace

namespace detail {

NlpProblem transcribe_simultaneous(const OcpSpec& spec) {
    auto ev = std::make_shared<SimultaneousEvaluator>(spec);
    const auto& L = ev->L;
    // The dense NLP solver caps the tractable size; this mode is for
    // fidelity checks at short horizons.
    std::size_t kkt_dim = L.n_vars + 2 * (L.m_eq + ev->m_in);
    require(kkt_dim <= 4500,
            "simultaneous transcription exceeds the dense solver budget; "
            "reduce the horizon or use sequential mode");

    NlpProblem P;
    P.n = L.n_vars;
    P.m_eq = L.m_eq;
    P.m_ineq = ev->m_in;
    P.lb = VecD(P.n, -std::numeric_limits<double>::infinity());
    P.ub = VecD(P.n, std::numeric_limits<double>::infinity());
    for (std::size_t k = 0; k < L.N; ++k)
        for (std::size_t j = 0; j < L.nu; ++j) {
            P.lb[k * L.nu + j] = spec.input_lb[j];
            P.ub[k * L.nu + j] = spec.input_ub[j];
        }
    P.objective = [ev](const VecD& z) {
        ev->ensure_value(z);
        return ev->f_val;
    };
    P.constraints = [ev](const VecD& z) {
        ev->ensure_value(z);
        return ev->c_val;
    };
    P.gradient = [ev](const VecD& z) {
        ev->ensure_derivs(z);
        return ev->grad;
    };
    P.jacobian = [ev](const VecD& z) {
        ev->ensure_derivs(z);
        return ev->jac;
    };
    return P;
}

}  // namespace detail

VecD simultaneous_point(const OcpSpec& spec, const VecD& controls_flat) {
    SimLayout L(spec);
    require(controls_flat.size() == L.N * L.nu, "simultaneous_point: control vector size");
    VecD z(L.n_vars, 0.0);
    for (std::size_t i = 0; i < controls_flat.size(); ++i) z[i] = controls_flat[i];

    UTWeights w = ut_weights(spec.ut);
    GaussianBelief belief = spec.initial_belief;
    for (std::size_t k = 0; k < L.N; ++k) {
        VecD u(L.nu);
        for (std::size_t j = 0; j < L.nu; ++j) u[j] = controls_flat[k * L.nu + j];
        auto sp = sigma_points<double>(belief, spec.ut);
        MatD ends(L.P, L.nx);
        for (std::size_t i = 0; i < L.P; ++i) {
            VecD start(L.nx);
            for (std::size_t r = 0; r < L.nx; ++r) start[r] = sp.points(r, i);
            for (std::size_t s = 0; s < L.S; ++s) {
                MatD nodes = spec.model.stepper->segment_nodes(start, u);
                for (std::size_t j = 0; j < L.d; ++j)
                    for (std::size_t r = 0; r < L.nx; ++r)
                        z[L.node(k, i, s, j) + r] = nodes(j, r);
                for (std::size_t r = 0; r < L.nx; ++r) start[r] = nodes(L.d - 1, r);
            }
            for (std::size_t r = 0; r < L.nx; ++r) ends(i, r) = start[r];
        }
        // Belief recursion at the boundary.
        VecD mean_next(L.nx, 0.0);
        for (std::size_t i = 0; i < L.P; ++i)
            for (std::size_t r = 0; r < L.nx; ++r) mean_next[r] += w.mean_w[i] * ends(i, r);
        MatD cov_next(L.nx, L.nx, 0.0);
        if (k + 1 <= L.tr) {
            VecD diff(L.nx);
            for (std::size_t i = 0; i < L.P; ++i) {
                for (std::size_t r = 0; r < L.nx; ++r) diff[r] = ends(i, r) - mean_next[r];
                outer_acc(cov_next, w.cov_w[i], diff, diff);
            }
            for (std::size_t r = 0; r < L.nx; ++r)
                for (std::size_t c = 0; c < L.nx; ++c)
                    cov_next(r, c) += spec.model.noise.process_cov(r, c);
            for (std::size_t r = 0; r < L.nx; ++r)
                for (std::size_t c = 0; c <= r; ++c)
                    z[L.covv(k + 1) + vech_index(r, c)] = cov_next(r, c);
        } else {
            cov_next = belief.cov;
        }
        for (std::size_t r = 0; r < L.nx; ++r) z[L.mean(k + 1) + r] = mean_next[r];
        belief.mean = mean_next;
        belief.cov = cov_next;
    }
    return z;
}

}  // namespace snmpc
