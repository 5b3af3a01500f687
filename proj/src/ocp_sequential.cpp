#include "snmpc/ocp.hpp"

#include <cmath>

namespace snmpc {

namespace {

void check_spec(const OcpSpec& spec) {
    require(spec.horizon >= 1, "ocp: horizon must be positive");
    require(spec.t_r <= spec.horizon, "ocp: t_R must not exceed the horizon");
    require(spec.input_lb.size() == spec.input_ub.size(), "ocp: bound size mismatch");
    for (std::size_t i = 0; i < spec.input_lb.size(); ++i)
        require(spec.input_lb[i] <= spec.input_ub[i], "ocp: lb must not exceed ub");
    require(spec.smoothing_diag.size() == spec.input_lb.size(), "ocp: S diagonal size mismatch");
    require(spec.ut.L == spec.n_x(), "ocp: UT dimension must equal the state dimension");
    for (const auto& c : spec.constraints) {
        require(c.stage >= 1 && c.stage <= spec.horizon, "ocp: constraint stage out of range");
        require(c.h.size() == spec.n_x(), "ocp: constraint dimension mismatch");
    }
}

template <class T>
std::vector<Vec<T>> unflatten(const VecD& z, std::size_t count, std::size_t dim);

template <>
std::vector<Vec<double>> unflatten<double>(const VecD& z, std::size_t count, std::size_t dim) {
    std::vector<VecD> out(count, VecD(dim));
    for (std::size_t k = 0; k < count; ++k)
        for (std::size_t j = 0; j < dim; ++j) out[k][j] = z[k * dim + j];
    return out;
}

template <>
std::vector<Vec<Dual>> unflatten<Dual>(const VecD& z, std::size_t count, std::size_t dim) {
    std::vector<Vec<Dual>> out(count, Vec<Dual>(dim));
    for (std::size_t k = 0; k < count; ++k)
        for (std::size_t j = 0; j < dim; ++j)
            out[k][j] = Dual::seed(z[k * dim + j], k * dim + j);
    return out;
}

template <class T>
BeliefT<T> lift_belief(const GaussianBelief& b) {
    BeliefT<T> out;
    out.mean = Vec<T>(b.mean.size());
    for (std::size_t i = 0; i < b.mean.size(); ++i) out.mean[i] = T(b.mean[i]);
    out.cov = Mat<T>(b.cov.rows(), b.cov.cols());
    for (std::size_t i = 0; i < b.cov.rows(); ++i)
        for (std::size_t j = 0; j < b.cov.cols(); ++j) out.cov(i, j) = T(b.cov(i, j));
    return out;
}

// Shared chain evaluation: beliefs, objective and tightened slacks in the
// requested scalar type.
template <class T>
struct ChainResult {
    T objective;
    std::vector<T> slacks;
};

template <class T>
ChainResult<T> evaluate_chain(const OcpSpec& spec, const VecD& quantiles, const VecD& z) {
    auto controls = unflatten<T>(z, spec.horizon, spec.n_u());
    BeliefT<T> b0 = lift_belief<T>(spec.initial_belief);
    auto f = [&spec](const Vec<T>& x, const Vec<T>& u) { return spec.model.transition(x, u); };
    auto beliefs =
        propagate_horizon(b0, controls, f, spec.model.noise, spec.ut, spec.t_r);
    ChainResult<T> out;
    out.objective = economic_objective(beliefs, controls, spec.smoothing_diag);
    out.slacks.reserve(spec.constraints.size());
    for (std::size_t i = 0; i < spec.constraints.size(); ++i) {
        const auto& c = spec.constraints[i];
        const auto& b = beliefs[c.stage - 1];
        out.slacks.push_back(tighten_smoothed(c.h, c.g, quantiles[i], b.mean, b.cov));
    }
    return out;
}

// Value and derivative caches shared by the NLP callbacks; the dual pass
// produces objective gradient and constraint Jacobian in one sweep.
struct SequentialEvaluator {
    OcpSpec spec;
    VecD quantiles;
    std::size_t n = 0, m = 0;

    mutable VecD z_val;
    mutable double f_val = 0.0;
    mutable VecD c_val;
    mutable VecD z_der;
    mutable VecD grad;
    mutable MatD jac;

    explicit SequentialEvaluator(OcpSpec s) : spec(std::move(s)) {
        quantiles = VecD(spec.constraints.size());
        for (std::size_t i = 0; i < spec.constraints.size(); ++i)
            quantiles[i] = spec.constraints[i].backoff();
        n = spec.horizon * spec.n_u();
        m = spec.constraints.size();
    }

    static bool same(const VecD& a, const VecD& b) {
        if (a.size() != b.size()) return false;
        for (std::size_t i = 0; i < a.size(); ++i)
            if (a[i] != b[i]) return false;
        return true;
    }

    void ensure_value(const VecD& z) const {
        if (same(z, z_val)) return;
        auto r = evaluate_chain<double>(spec, quantiles, z);
        f_val = r.objective;
        c_val = VecD(m);
        for (std::size_t i = 0; i < m; ++i) c_val[i] = r.slacks[i];
        z_val = z;
    }

    void ensure_derivs(const VecD& z) const {
        if (same(z, z_der)) return;
        auto r = evaluate_chain<Dual>(spec, quantiles, z);
        grad = VecD(n);
        r.objective.copy_tangent(grad.data(), n);
        jac = MatD(m, n);
        for (std::size_t i = 0; i < m; ++i) r.slacks[i].copy_tangent(jac.row(i), n);
        z_der = z;
        // The dual pass carries values too; refresh the value cache for free.
        f_val = r.objective.value();
        c_val = VecD(m);
        for (std::size_t i = 0; i < m; ++i) c_val[i] = r.slacks[i].value();
        z_val = z;
    }
};

NlpProblem transcribe_sequential(const OcpSpec& spec) {
    auto ev = std::make_shared<SequentialEvaluator>(spec);
    NlpProblem P;
    P.n = ev->n;
    P.m_eq = 0;
    P.m_ineq = ev->m;
    P.lb = VecD(P.n);
    P.ub = VecD(P.n);
    const std::size_t nu = spec.n_u();
    for (std::size_t k = 0; k < spec.horizon; ++k)
        for (std::size_t j = 0; j < nu; ++j) {
            P.lb[k * nu + j] = spec.input_lb[j];
            P.ub[k * nu + j] = spec.input_ub[j];
        }
    P.objective = [ev](const VecD& z) {
        ev->ensure_value(z);
        return ev->f_val;
    };
    P.gradient = [ev](const VecD& z) {
        ev->ensure_derivs(z);
        return ev->grad;
    };
    P.constraints = [ev](const VecD& z) {
        ev->ensure_value(z);
        return ev->c_val;
    };
    P.jacobian = [ev](const VecD& z) {
        ev->ensure_derivs(z);
        return ev->jac;
    };
    return P;
}

}  // namespace

namespace detail {

std::vector<GaussianBelief> propagate_controls(const OcpSpec& spec, const VecD& controls_flat) {
    auto controls = unflatten<double>(controls_flat, spec.horizon, spec.n_u());
    auto f = [&spec](const VecD& x, const VecD& u) { return spec.model.transition(x, u); };
    return propagate_horizon(spec.initial_belief, controls, f, spec.model.noise, spec.ut,
                             spec.t_r);
}

}  // namespace detail

NlpProblem transcribe(const OcpSpec& spec) {
    check_spec(spec);
    if (spec.transcription == OcpSpec::Transcription::kSequential)
        return transcribe_sequential(spec);
    return detail::transcribe_simultaneous(spec);
}

VecD warm_start(const std::optional<OcpSolution>& previous, const OcpSpec& spec) {
    const std::size_t nu = spec.n_u();
    VecD z(spec.horizon * nu);
    if (!previous || previous->controls.empty()) {
        for (std::size_t k = 0; k < spec.horizon; ++k)
            for (std::size_t j = 0; j < nu; ++j)
                z[k * nu + j] = 0.5 * (spec.input_lb[j] + spec.input_ub[j]);
        return z;
    }
    const auto& prev = previous->controls;
    for (std::size_t k = 0; k < spec.horizon; ++k) {
        const VecD& src = k + 1 < prev.size() ? prev[k + 1] : prev.back();
        for (std::size_t j = 0; j < nu; ++j)
            z[k * nu + j] = std::min(std::max(src[j], spec.input_lb[j]), spec.input_ub[j]);
    }
    return z;
}

OcpSolution solve_ocp(const OcpSpec& spec, const VecD& controls_guess, const SolverOptions& opts) {
    check_spec(spec);
    NlpProblem P = transcribe(spec);
    OcpSolution sol;
    const std::size_t nu = spec.n_u();

    VecD z;
    if (spec.transcription == OcpSpec::Transcription::kSequential) {
        z = controls_guess;
    } else {
        z = simultaneous_point(spec, controls_guess);
    }
    sol.solver_report = solve(P, z, opts);

    VecD controls_flat(spec.horizon * nu);
    for (std::size_t i = 0; i < controls_flat.size(); ++i) controls_flat[i] = z[i];
    sol.controls.resize(spec.horizon, VecD(nu));
    for (std::size_t k = 0; k < spec.horizon; ++k)
        for (std::size_t j = 0; j < nu; ++j) sol.controls[k][j] = controls_flat[k * nu + j];

    // Predicted beliefs: re-run the recursion at the returned controls.
    sol.beliefs = detail::propagate_controls(spec, controls_flat);
    {
        std::vector<VecD> cs(spec.horizon, VecD(nu));
        for (std::size_t k = 0; k < spec.horizon; ++k) cs[k] = sol.controls[k];
        std::vector<GaussianBelief> bs = sol.beliefs;
        sol.objective_value = economic_objective(bs, cs, spec.smoothing_diag);
    }
    return sol;
}

}  // namespace snmpc
