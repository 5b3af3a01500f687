#pragma once

#include <functional>
#include <string>

#include "snmpc/linalg.hpp"

// Dense smooth NLP solver: primal-dual interior point with a filter line
// search, slack variables for inequalities, and damped-BFGS curvature when
// no exact Hessian is supplied.
//
//   minimize f(z)
//   s.t.     c_eq(z)  = 0
//            c_in(z) >= 0
//            lb <= z <= ub
//
// Callback layout: constraints() and jacobian() stack the equality rows
// first, then the inequality rows.

namespace snmpc {

struct NlpProblem {
    std::size_t n = 0;
    std::size_t m_eq = 0;
    std::size_t m_ineq = 0;
    VecD lb, ub;  // may contain +-infinity

    std::function<double(const VecD&)> objective;
    std::function<VecD(const VecD&)> gradient;
    std::function<VecD(const VecD&)> constraints;  // m_eq + m_ineq values
    std::function<MatD(const VecD&)> jacobian;     // (m_eq + m_ineq) x n

    // Optional Lagrangian Hessian: H(z, sigma, y) = sigma * hess f(z)
    // - sum_i y_i hess c_i(z). Damped BFGS is used when absent.
    std::function<MatD(const VecD&, double, const VecD&)> hessian;
};

struct SolverOptions {
    std::size_t max_iter = 500;
    double kkt_tol = 1e-6;
    double feas_tol = 1e-6;
    double mu_init = 0.1;
    bool verbose = false;
};

enum class SolveStatus { kConverged, kMaxIter, kInfeasible, kError };

struct SolverReport {
    SolveStatus status = SolveStatus::kError;
    std::size_t iterations = 0;
    double kkt_residual = 0.0;
    double constraint_violation = 0.0;
    double objective = 0.0;
    std::string message;

    bool converged() const { return status == SolveStatus::kConverged; }
};

// Solves the problem starting from x (projected into the bounds); on return
// x holds the best iterate. Deterministic for identical inputs.
SolverReport solve(const NlpProblem& problem, VecD& x, const SolverOptions& opts = {});

struct DerivativeCheck {
    double grad_max_err = 0.0;
    std::size_t grad_worst = 0;
    double jac_max_err = 0.0;
    std::size_t jac_worst_row = 0;
    std::size_t jac_worst_col = 0;

    double max_rel_error() const { return grad_max_err > jac_max_err ? grad_max_err : jac_max_err; }
};

// Central-difference verification of gradient and Jacobian at an interior
// point; errors are relative to max(1, |analytic|, |numeric|).
DerivativeCheck check_derivatives(const NlpProblem& problem, const VecD& x, double h = 1e-6);

}  // namespace snmpc
