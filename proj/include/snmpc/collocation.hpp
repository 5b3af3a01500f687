#pragma once

#include "snmpc/model.hpp"

// Direct-collocation machinery shared by the discretized model and the
// simultaneous transcription: Radau node tables, per-segment implicit
// solves, and an implicit-function tangent rule so the one-step map is
// differentiable through its root-solve.

namespace snmpc {

struct CollocationTableau {
    std::size_t degree = 0;
    VecD tau;  // degree+1 points on [0,1], tau[0] = 0, Radau nodes after
    MatD C;    // C(j, i) = dL_j/dtau at tau_{i+1}; (degree+1) x degree
    VecD D;    // D(j) = L_j(1); end-state weights
};

// Radau (right-endpoint) collocation points; degrees 1 to 3.
CollocationTableau radau_tableau(std::size_t degree);

class CollocationStepper {
public:
    CollocationStepper(DualFn rhs, std::size_t n_x, std::size_t n_u, double dt,
                       std::size_t degree, std::size_t segments);

    std::size_t degree() const { return tab_.degree; }
    std::size_t segments() const { return segments_; }
    double dt() const { return dt_; }
    double segment_length() const { return dt_ / static_cast<double>(segments_); }
    const CollocationTableau& tableau() const { return tab_; }
    const DualFn& rhs() const { return rhs_; }

    // Node states of a single segment of length dt/segments starting at
    // x_start: row i is the state at tau_{i+1}. Newton-solved; throws with
    // the residual norm if the root-solve stalls.
    MatD segment_nodes(const VecD& x_start, const VecD& u) const;

    // Integrate one full interval (all segments).
    VecD step(const VecD& x0, const VecD& u) const;
    Vec<Dual> step(const Vec<Dual>& x0, const Vec<Dual>& u) const;

    // Single implicit step of arbitrary length (no segment splitting, no
    // bisection fallback); throws if the stage solve fails. Building block
    // for adaptive integrators.
    VecD step_once(const VecD& x0, const VecD& u, double h) const;

    DualFn as_dualfn() const;

private:
    VecD step_value(const VecD& x0, const VecD& u, double h, int depth) const;
    void step_dual_rec(VecD& x_val, MatD& dx, const VecD& u_val, const MatD& du, double h,
                       int depth) const;

    DualFn rhs_;
    std::size_t n_x_, n_u_;
    double dt_;
    std::size_t segments_;
    CollocationTableau tab_;
};

// Implicit midpoint steps (single-stage Gauss); the simple stiff-capable
// fallback scheme.
class ImplicitRkStepper {
public:
    ImplicitRkStepper(DualFn rhs, std::size_t n_x, std::size_t n_u, double dt,
                      std::size_t substeps);

    VecD step(const VecD& x0, const VecD& u) const;
    Vec<Dual> step(const Vec<Dual>& x0, const Vec<Dual>& u) const;

    DualFn as_dualfn() const;

private:
    DualFn rhs_;
    std::size_t n_x_, n_u_;
    double dt_;
    std::size_t substeps_;
};

namespace detail {

// Dense Jacobians of a DualFn at (x, u) via dual seeding.
MatD jacobian_x(const DualFn& f, const VecD& x, const VecD& u, std::size_t m);
MatD jacobian_u(const DualFn& f, const VecD& x, const VecD& u, std::size_t m);

}  // namespace detail

}  // namespace snmpc
