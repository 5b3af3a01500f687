#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "snmpc/nlp.hpp"

using namespace snmpc;

namespace {

NlpProblem qp_problem(const oracle::Qp& qp) {
    NlpProblem P;
    const std::size_t n = qp.Q.rows();
    const std::size_t m = qp.A.rows();
    P.n = n;
    P.m_ineq = m;
    P.lb = VecD(n, -std::numeric_limits<double>::infinity());
    P.ub = VecD(n, std::numeric_limits<double>::infinity());
    P.objective = [qp, n](const VecD& x) {
        double f = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            f += qp.q[i] * x[i];
            for (std::size_t j = 0; j < n; ++j) f += 0.5 * x[i] * qp.Q(i, j) * x[j];
        }
        return f;
    };
    P.gradient = [qp, n](const VecD& x) {
        VecD g = matvec(qp.Q, x);
        for (std::size_t i = 0; i < n; ++i) g[i] += qp.q[i];
        return g;
    };
    P.constraints = [qp, m](const VecD& x) {
        VecD ax = matvec(qp.A, x);
        VecD c(m);
        for (std::size_t i = 0; i < m; ++i) c[i] = qp.b[i] - ax[i];  // >= 0
        return c;
    };
    P.jacobian = [qp, m, n](const VecD&) {
        MatD J(m, n);
        for (std::size_t r = 0; r < m; ++r)
            for (std::size_t c = 0; c < n; ++c) J(r, c) = -qp.A(r, c);
        return J;
    };
    P.hessian = [qp](const VecD&, double sigma, const VecD&) {
        MatD H = qp.Q;
        for (std::size_t i = 0; i < H.rows(); ++i)
            for (std::size_t j = 0; j < H.cols(); ++j) H(i, j) *= sigma;
        return H;
    };
    return P;
}

}  // namespace

TEST_SUITE_BEGIN("nlp");

TEST_CASE("unconstrained parabola") {
    NlpProblem P;
    P.n = 1;
    P.lb = VecD{-std::numeric_limits<double>::infinity()};
    P.ub = VecD{std::numeric_limits<double>::infinity()};
    P.objective = [](const VecD& x) { return (x[0] - 3.0) * (x[0] - 3.0); };
    P.gradient = [](const VecD& x) { return VecD{2.0 * (x[0] - 3.0)}; };
    VecD x{0.0};
    auto rep = solve(P, x);
    CHECK(rep.converged());
    CHECK(std::fabs(x[0] - 3.0) < 1e-6);
}

TEST_CASE("rosenbrock in a box (quasi-newton)") {
    NlpProblem P;
    P.n = 2;
    P.lb = VecD{-2.0, -2.0};
    P.ub = VecD{2.0, 2.0};
    P.objective = [](const VecD& x) {
        double a = 1.0 - x[0];
        double b = x[1] - x[0] * x[0];
        return a * a + 100.0 * b * b;
    };
    P.gradient = [](const VecD& x) {
        double b = x[1] - x[0] * x[0];
        return VecD{-2.0 * (1.0 - x[0]) - 400.0 * x[0] * b, 200.0 * b};
    };
    VecD x{-1.2, 1.0};
    SolverOptions opts;
    opts.max_iter = 1000;
    opts.kkt_tol = 1e-8;
    auto rep = solve(P, x, opts);
    CHECK(rep.converged());
    CHECK(std::fabs(x[0] - 1.0) < 1e-4);
    CHECK(std::fabs(x[1] - 1.0) < 1e-4);
}

TEST_CASE("active inequality constraint") {
    NlpProblem P;
    P.n = 1;
    P.m_ineq = 1;
    P.lb = VecD{-std::numeric_limits<double>::infinity()};
    P.ub = VecD{std::numeric_limits<double>::infinity()};
    P.objective = [](const VecD& x) { return x[0] * x[0]; };
    P.gradient = [](const VecD& x) { return VecD{2.0 * x[0]}; };
    P.constraints = [](const VecD& x) { return VecD{x[0] - 1.0}; };  // x >= 1
    P.jacobian = [](const VecD&) {
        MatD J(1, 1);
        J(0, 0) = 1.0;
        return J;
    };
    VecD x{5.0};
    auto rep = solve(P, x);
    CHECK(rep.converged());
    CHECK(std::fabs(x[0] - 1.0) < 1e-6);
    // Constraint is active at the solution.
    CHECK(std::fabs(P.constraints(x)[0]) < 1e-6);
}

TEST_CASE("equality constrained projection") {
    NlpProblem P;
    P.n = 2;
    P.m_eq = 1;
    P.lb = VecD(2, -std::numeric_limits<double>::infinity());
    P.ub = VecD(2, std::numeric_limits<double>::infinity());
    P.objective = [](const VecD& x) {
        return (x[0] - 1.0) * (x[0] - 1.0) + (x[1] - 2.0) * (x[1] - 2.0);
    };
    P.gradient = [](const VecD& x) { return VecD{2.0 * (x[0] - 1.0), 2.0 * (x[1] - 2.0)}; };
    P.constraints = [](const VecD& x) { return VecD{x[0] + x[1] - 1.0}; };
    P.jacobian = [](const VecD&) {
        MatD J(1, 2);
        J(0, 0) = J(0, 1) = 1.0;
        return J;
    };
    VecD x{3.0, -3.0};
    auto rep = solve(P, x);
    CHECK(rep.converged());
    CHECK(std::fabs(x[0] - 0.0) < 1e-6);
    CHECK(std::fabs(x[1] - 1.0) < 1e-6);
}

TEST_CASE("random convex qps match the exhaustive active-set oracle") {
    Rng rng(61);
    int solved = 0;
    for (int t = 0; t < 8; ++t) {
        std::size_t n = 2 + static_cast<std::size_t>(rng.uniform() * 10);
        std::size_t m = 1 + static_cast<std::size_t>(rng.uniform() * 8);
        auto qp = oracle::random_convex_qp(rng, n, m);
        VecD x_ref;
        double f_ref;
        REQUIRE(oracle::qp_active_set_solve(qp, x_ref, f_ref));
        auto P = qp_problem(qp);
        VecD x(n, 0.0);
        SolverOptions opts;
        opts.kkt_tol = 1e-8;
        auto rep = solve(P, x, opts);
        CHECK(rep.converged());
        CHECK(rep.constraint_violation <= 1e-6);
        CHECK(std::fabs(rep.objective - f_ref) <= 1e-6 * std::max(1.0, std::fabs(f_ref)));
        ++solved;
    }
    CHECK(solved == 8);
}

TEST_CASE("deterministic: identical inputs give identical iterates") {
    Rng rng(62);
    auto qp = oracle::random_convex_qp(rng, 6, 4);
    auto P = qp_problem(qp);
    VecD x1(6, 0.5), x2(6, 0.5);
    auto r1 = solve(P, x1);
    auto r2 = solve(P, x2);
    CHECK(r1.iterations == r2.iterations);
    for (std::size_t i = 0; i < 6; ++i) CHECK(x1[i] == x2[i]);  // bitwise
}

TEST_CASE("infeasible constraint set is reported, never 'converged'") {
    NlpProblem P;
    P.n = 1;
    P.m_ineq = 2;
    P.lb = VecD{-10.0};
    P.ub = VecD{10.0};
    P.objective = [](const VecD& x) { return x[0] * x[0]; };
    P.gradient = [](const VecD& x) { return VecD{2.0 * x[0]}; };
    P.constraints = [](const VecD& x) { return VecD{x[0] - 1.0, -x[0] - 1.0}; };
    P.jacobian = [](const VecD&) {
        MatD J(2, 1);
        J(0, 0) = 1.0;
        J(1, 0) = -1.0;
        return J;
    };
    VecD x{0.0};
    SolverOptions opts;
    opts.max_iter = 200;
    auto rep = solve(P, x, opts);
    CHECK(!rep.converged());
}

TEST_CASE("non-finite callback at the start is an error naming the point") {
    NlpProblem P;
    P.n = 1;
    P.lb = VecD{-1.0};
    P.ub = VecD{1.0};
    P.objective = [](const VecD&) { return std::nan(""); };
    P.gradient = [](const VecD&) { return VecD{0.0}; };
    VecD x{0.5};
    auto rep = solve(P, x);
    CHECK(rep.status == SolveStatus::kError);
    CHECK(rep.message.find("non-finite") != std::string::npos);
}

TEST_CASE("check_derivatives: exact quadratic, then a corrupted entry is flagged") {
    Rng rng(63);
    auto qp = oracle::random_convex_qp(rng, 5, 3);
    auto P = qp_problem(qp);
    VecD x = oracle::random_vector(rng, 5);
    auto chk = check_derivatives(P, x);
    CHECK(chk.grad_max_err < 1e-9);
    CHECK(chk.jac_max_err < 1e-9);

    auto Pbad = P;
    Pbad.gradient = [&](const VecD& xx) {
        VecD g = P.gradient(xx);
        g[3] += 0.5;  // inject a wrong entry
        return g;
    };
    auto chk2 = check_derivatives(Pbad, x);
    CHECK(chk2.grad_max_err > 0.1);
    CHECK(chk2.grad_worst == 3);
}

TEST_SUITE_END();
