#pragma once

#include <memory>
#include <optional>

#include "snmpc/collocation.hpp"
#include "snmpc/constraints.hpp"
#include "snmpc/nlp.hpp"

// Transcription of the finite-horizon chance-constrained OCP: decision
// variables, belief propagation, tightened inequalities, bounds and the
// economic objective, in two equivalent forms.
//
//   sequential   - the decision vector is the control sequence only; the
//                  belief recursion is evaluated inside the callbacks and
//                  differentiated by forward duals through the whole chain
//                  (collocation root-solves included).
//   simultaneous - per-sigma-point collocation node states, stage means and
//                  pre-freeze covariances are decision variables tied by
//                  defect and recursion equality constraints.

namespace snmpc {

struct OcpSpec {
    enum class Transcription { kSequential, kSimultaneous };

    std::size_t horizon = 30;
    double dt = 4.0 / 30.0;
    SystemModel model;
    UTConfig ut;
    std::size_t t_r = 2;
    std::vector<LinearChanceConstraint> constraints;
    VecD input_lb, input_ub;
    VecD smoothing_diag;  // diagonal of S
    GaussianBelief initial_belief;
    VecD prev_input;
    Transcription transcription = Transcription::kSequential;

    std::size_t n_u() const { return input_lb.size(); }
    std::size_t n_x() const { return initial_belief.mean.size(); }
};

struct OcpSolution {
    std::vector<VecD> controls;
    std::vector<GaussianBelief> beliefs;  // predicted stages 1..N
    double objective_value = 0.0;
    SolverReport solver_report;
};

// Economic objective: -(E[x_C * x_V] at the terminal stage) plus the
// control-increment penalty sum_{k=1}^{N-1} du_k^T S du_k.
template <class T>
T economic_objective(const std::vector<BeliefT<T>>& beliefs, const std::vector<Vec<T>>& controls,
                     const VecD& smoothing_diag) {
    require(!beliefs.empty() && beliefs.size() == controls.size(),
            "objective: trajectory length mismatch");
    const auto& term = beliefs.back();
    T obj = -(term.mean[2] * term.mean[4] + term.cov(2, 4));
    for (std::size_t k = 1; k < controls.size(); ++k)
        for (std::size_t j = 0; j < smoothing_diag.size(); ++j) {
            T du = controls[k][j] - controls[k - 1][j];
            obj += smoothing_diag[j] * du * du;
        }
    return obj;
}

// Transcribes the spec into a smooth NLP (mode per spec.transcription).
NlpProblem transcribe(const OcpSpec& spec);

// Control-sequence initial guess: shift-and-repeat of the previous solution,
// or the midpoint of the input box.
VecD warm_start(const std::optional<OcpSolution>& previous, const OcpSpec& spec);

// Embed a control sequence into a simultaneous-mode decision vector by
// forward propagation (all defects and recursions hold exactly).
VecD simultaneous_point(const OcpSpec& spec, const VecD& controls_flat);

// Solve the OCP from a control-space starting guess.
OcpSolution solve_ocp(const OcpSpec& spec, const VecD& controls_guess,
                      const SolverOptions& opts = {});

namespace detail {

// Predicted belief trajectory for a flat control vector (double path).
std::vector<GaussianBelief> propagate_controls(const OcpSpec& spec, const VecD& controls_flat);

NlpProblem transcribe_simultaneous(const OcpSpec& spec);

}  // namespace detail

}  // namespace snmpc
