#include "snmpc/simulate.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <thread>

namespace snmpc {

namespace {

VecD gaussian_draw(Rng& rng, const MatD& cov) {
    const std::size_t n = cov.rows();
    VecD z(n);
    for (std::size_t i = 0; i < n; ++i) z[i] = rng.normal();
    auto chol = cholesky_sqrt(cov, 1e-8);
    VecD out(n, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j <= i; ++j) out[i] += chol.L(i, j) * z[j];
    return out;
}

// Restage a constraint set onto a shorter horizon: path rows keep their
// stage while it fits, terminal rows move to the new final stage.
std::vector<LinearChanceConstraint> shrink_constraints(
    const std::vector<LinearChanceConstraint>& cs, std::size_t horizon) {
    std::vector<LinearChanceConstraint> out;
    for (const auto& c : cs) {
        if (c.terminal) {
            auto t = c;
            t.stage = horizon;
            out.push_back(std::move(t));
        } else if (c.stage < horizon) {
            out.push_back(c);
        }
    }
    return out;
}

}  // namespace

std::pair<VecD, VecD> step_plant(const PlantSimulator& sim, Rng& rng, const VecD& state,
                                 const VecD& input, double dt) {
    require(dt > 0.0, "step_plant: dt must be positive");
    DualFn rhs;
    auto params = sim.params;
    rhs.value = [params](const VecD& x, const VecD& u) { return reactor_rhs(x, u, params); };
    rhs.dual = [params](const Vec<Dual>& x, const Vec<Dual>& u) {
        return reactor_rhs(x, u, params);
    };
    VecD next = integrate_adaptive(rhs, state, input, dt, sim.tol);

    VecD w = gaussian_draw(rng, sim.noise.process_cov);
    for (std::size_t i = 0; i < next.size(); ++i) next[i] += w[i];
    for (std::size_t i = 0; i < 3; ++i) next[i] = std::max(0.0, next[i]);  // physical floor

    VecD y = reactor_measurement<double>(next, input);
    VecD v = gaussian_draw(rng, sim.noise.measurement_cov);
    for (std::size_t i = 0; i < y.size(); ++i) y[i] += v[i];
    return {next, y};
}

ClosedLoopRecord run_closed_loop(const OcpSpec& spec_template, const PlantSimulator& sim,
                                 std::size_t steps, const ClosedLoopInit& init,
                                 std::uint64_t seed, const SolverOptions& opts,
                                 bool shrink_horizon) {
    require(steps >= 1, "closed loop: steps must be >= 1");
    ClosedLoopRecord rec;
    Rng rng(seed);

    // Draw order: initial-state perturbation, initial measurement noise,
    // then (state noise, measurement noise) per plant step.
    VecD x_true = init.x0_mean;
    {
        VecD dx = gaussian_draw(rng, init.x0_cov);
        for (std::size_t i = 0; i < x_true.size(); ++i) x_true[i] += dx[i];
        for (std::size_t i = 0; i < 3; ++i) x_true[i] = std::max(0.0, x_true[i]);
    }
    rec.initial_state = x_true;
    VecD y = reactor_measurement<double>(x_true, init.u0);
    {
        VecD v = gaussian_draw(rng, sim.noise.measurement_cov);
        for (std::size_t i = 0; i < y.size(); ++i) y[i] += v[i];
    }

    GaussianBelief prior{init.x0_mean, init.x0_cov};
    VecD u_prev = init.u0;
    std::optional<OcpSolution> prev_solution;

    auto h_fn = [&spec_template](const VecD& x, const VecD& u) {
        return spec_template.model.measurement(x, u);
    };
    auto f_fn = [&spec_template](const VecD& x, const VecD& u) {
        return spec_template.model.transition(x, u);
    };

    for (std::size_t k = 0; k < steps; ++k) {
        StepRecord sr;
        sr.state_before = x_true;
        sr.measurement = y;
        sr.prior = prior;

        GaussianBelief post = prior;
        try {
            auto stats =
                observe(prior, u_prev, h_fn, spec_template.model.noise, spec_template.ut);
            post = update(prior, stats, y);
        } catch (const std::exception&) {
            // Degenerate innovation covariance (noise-free configurations):
            // carry the prior forward.
        }
        sr.posterior = post;

        OcpSpec spec = spec_template;
        spec.initial_belief = post;
        spec.prev_input = u_prev;
        if (shrink_horizon) {
            std::size_t h = std::max<std::size_t>(2, std::min(spec.horizon, steps - k));
            if (h != spec.horizon) {
                spec.horizon = h;
                spec.constraints = shrink_constraints(spec_template.constraints, h);
                if (spec.t_r > h) spec.t_r = h;
            }
        }

        VecD guess = warm_start(prev_solution, spec);
        SolverOptions solve_opts = opts;
        if (prev_solution) solve_opts.mu_init = std::min(opts.mu_init, 1e-2);

        auto t0 = std::chrono::steady_clock::now();
        OcpSolution sol;
        bool solve_ok = false;
        try {
            sol = solve_ocp(spec, guess, solve_opts);
            solve_ok = sol.solver_report.converged();
        } catch (const std::exception&) {
            solve_ok = false;
        }
        sr.solve_seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        rec.total_solve_seconds += sr.solve_seconds;

        VecD u_apply = u_prev;
        if (solve_ok) {
            u_apply = sol.controls.front();
            sr.ocp_objective = sol.objective_value;
            prev_solution = sol;
        } else {
            ++rec.failed_solves;
            sr.fallback_used = true;
            // Keep the previous action but stay inside the input box.
        }
        for (std::size_t j = 0; j < u_apply.size(); ++j)
            u_apply[j] = std::min(std::max(u_apply[j], spec_template.input_lb[j]),
                                  spec_template.input_ub[j]);
        sr.solver_converged = solve_ok;
        sr.control = u_apply;

        try {
            auto [next, meas] = step_plant(sim, rng, x_true, u_apply, spec_template.dt);
            x_true = next;
            y = meas;
        } catch (const std::exception& e) {
            rec.aborted = true;
            rec.abort_reason = e.what();
            rec.steps.push_back(std::move(sr));
            break;
        }
        sr.state_after = x_true;
        sr.viol_T = x_true[3] > 440.0;
        sr.viol_V = x_true[4] > 750.0;

        prior = predict(post, u_apply, f_fn, spec_template.model.noise, spec_template.ut);
        u_prev = u_apply;
        rec.steps.push_back(std::move(sr));
    }

    rec.final_state = x_true;
    rec.terminal_product_moles = x_true[2] * x_true[4];
    rec.terminal_ca_violation = x_true[0] > 0.5;
    return rec;
}

MonteCarloResult run_monte_carlo(const OcpSpec& spec_template, const PlantSimulator& sim,
                                 std::size_t steps, const ClosedLoopInit& init,
                                 std::size_t n_realizations, std::uint64_t base_seed,
                                 const SolverOptions& opts, std::size_t n_threads,
                                 bool shrink_horizon) {
    require(n_realizations >= 1, "monte carlo: need at least one realization");
    MonteCarloResult out;
    out.records.resize(n_realizations);

    if (n_threads == 0) n_threads = std::thread::hardware_concurrency();
    n_threads = std::max<std::size_t>(1, std::min(n_threads, n_realizations));

    std::atomic<std::size_t> next_index{0};
    auto worker = [&]() {
        for (;;) {
            std::size_t i = next_index.fetch_add(1);
            if (i >= n_realizations) return;
            try {
                out.records[i] = run_closed_loop(spec_template, sim, steps, init,
                                                 base_seed + i, opts, shrink_horizon);
            } catch (const std::exception& e) {
                out.records[i].aborted = true;
                out.records[i].abort_reason = e.what();
            }
        }
    };
    if (n_threads == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (std::size_t t = 0; t < n_threads; ++t) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }

    // Deterministic fold over the records in index order.
    auto& s = out.summary;
    s.realizations = n_realizations;
    s.steps_per_realization = steps;
    std::size_t total_steps = 0, viol_t = 0, viol_v = 0, term_ca = 0;
    double product_sum = 0.0, solve_sum = 0.0;
    std::size_t solve_count = 0;
    for (const auto& r : out.records) {
        if (r.aborted) ++s.aborted_realizations;
        for (const auto& st : r.steps) {
            ++total_steps;
            viol_t += st.viol_T ? 1 : 0;
            viol_v += st.viol_V ? 1 : 0;
            solve_sum += st.solve_seconds;
            ++solve_count;
            s.max_solve_seconds = std::max(s.max_solve_seconds, st.solve_seconds);
        }
        s.failed_solves += r.failed_solves;
        term_ca += r.terminal_ca_violation ? 1 : 0;
        product_sum += r.terminal_product_moles;
    }
    if (total_steps > 0) {
        s.viol_freq_T = static_cast<double>(viol_t) / static_cast<double>(total_steps);
        s.viol_freq_V = static_cast<double>(viol_v) / static_cast<double>(total_steps);
    }
    s.terminal_ca_viol_fraction =
        static_cast<double>(term_ca) / static_cast<double>(n_realizations);
    s.mean_terminal_product = product_sum / static_cast<double>(n_realizations);
    if (solve_count > 0) s.mean_solve_seconds = solve_sum / static_cast<double>(solve_count);
    return out;
}

}  // namespace snmpc
