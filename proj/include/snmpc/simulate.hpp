#pragma once

#include <cstdint>

#include "snmpc/ocp.hpp"
#include "snmpc/rng.hpp"

// Plant-truth simulation and the receding-horizon closed loop: an adaptive
// implicit integrator stands in for the true continuous reactor, additive
// Gaussian noise enters per discrete step, and the Monte Carlo harness runs
// independent realizations concurrently with per-realization generators.

namespace snmpc {

// Adaptive implicit integrator (Radau stages with step-doubling error
// control). Integrates dx/dt = rhs(x, u) over dt with local tolerance tol.
// Throws on step-size underflow, reporting the state.
VecD integrate_adaptive(const DualFn& rhs, const VecD& x0, const VecD& u, double dt, double tol);

struct PlantSimulator {
    ReactorParams params;
    double tol = 1e-8;
    NoiseModel noise;  // process / measurement covariances of the truth
};

// One plant step: integrate the continuous truth over dt, add process noise
// to the state (concentrations floored at zero afterwards), and measure the
// new state with additive noise. Draw order per call: state noise first,
// then measurement noise.
std::pair<VecD, VecD> step_plant(const PlantSimulator& sim, Rng& rng, const VecD& state,
                                 const VecD& input, double dt);

struct StepRecord {
    VecD state_before;       // x(k), the state the controller acted on
    VecD measurement;        // y(k) assimilated at this step
    GaussianBelief prior;    // belief before the measurement update
    GaussianBelief posterior;  // belief the OCP was solved from
    VecD control;            // u(k) actually applied
    VecD state_after;        // x(k+1)
    double ocp_objective = 0.0;
    bool solver_converged = false;
    bool fallback_used = false;  // previous control reused after a failure
    bool viol_T = false;         // T > 440 at x(k+1)
    bool viol_V = false;         // V > 750 at x(k+1)
    double solve_seconds = 0.0;
};

struct ClosedLoopRecord {
    std::vector<StepRecord> steps;
    VecD initial_state;  // true x(0)
    VecD final_state;    // true x(steps)
    double terminal_product_moles = 0.0;  // C_C * V at the final state
    bool terminal_ca_violation = false;   // C_A > 0.5 at the final state
    double total_solve_seconds = 0.0;
    std::size_t failed_solves = 0;
    bool aborted = false;  // plant integration failure mid-run
    std::string abort_reason;
};

struct ClosedLoopInit {
    VecD x0_mean;
    MatD x0_cov;
    VecD u0;  // control action "before" time zero (warm-start anchor)
};

// Receding-horizon loop: measure, update, solve, apply the first control,
// predict. The spec_template provides everything except the per-step initial
// belief and previous input. A failed OCP solve falls back to the previous
// control and flags the step.
ClosedLoopRecord run_closed_loop(const OcpSpec& spec_template, const PlantSimulator& sim,
                                 std::size_t steps, const ClosedLoopInit& init,
                                 std::uint64_t seed, const SolverOptions& opts,
                                 bool shrink_horizon = false);

struct MonteCarloSummary {
    std::size_t realizations = 0;
    std::size_t steps_per_realization = 0;
    double viol_freq_T = 0.0;             // fraction of realization-steps
    double viol_freq_V = 0.0;             // fraction of realization-steps
    double terminal_ca_viol_fraction = 0.0;  // fraction of realizations
    double mean_terminal_product = 0.0;
    std::size_t failed_solves = 0;
    std::size_t aborted_realizations = 0;
    double mean_solve_seconds = 0.0;
    double max_solve_seconds = 0.0;
};

struct MonteCarloResult {
    std::vector<ClosedLoopRecord> records;
    MonteCarloSummary summary;
};

// Realization i runs with seed base_seed + i; realizations execute on up to
// n_threads workers with no shared mutable state, and the summary is a fold
// over the records in index order (bit-reproducible for fixed inputs).
MonteCarloResult run_monte_carlo(const OcpSpec& spec_template, const PlantSimulator& sim,
                                 std::size_t steps, const ClosedLoopInit& init,
                                 std::size_t n_realizations, std::uint64_t base_seed,
                                 const SolverOptions& opts, std::size_t n_threads = 0,
                                 bool shrink_horizon = false);

}  // namespace snmpc
