#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "reactor_fixture.hpp"

using namespace snmpc;

namespace {

VecD random_controls(Rng& rng, const OcpSpec& spec) {
    VecD z(spec.horizon * spec.n_u());
    for (std::size_t k = 0; k < spec.horizon; ++k)
        for (std::size_t j = 0; j < spec.n_u(); ++j) {
            double lo = spec.input_lb[j], hi = spec.input_ub[j];
            z[k * spec.n_u() + j] = lo + (0.2 + 0.6 * rng.uniform()) * (hi - lo);
        }
    return z;
}

}  // namespace

TEST_SUITE_BEGIN("ocp");

TEST_CASE("sequential transcription of the full reactor instance has 60 variables") {
    auto spec = fixture::reactor_ocp(30, 2);
    auto P = transcribe(spec);
    CHECK(P.n == 60);
    CHECK(P.m_eq == 0);
    CHECK(P.m_ineq == 2 * 29 + 3);
    // Input box attached to every stage.
    for (std::size_t k = 0; k < 30; ++k) {
        CHECK(P.lb[2 * k] == 0.0);
        CHECK(P.ub[2 * k] == 250.0);
        CHECK(P.lb[2 * k + 1] == 200.0);
        CHECK(P.ub[2 * k + 1] == 500.0);
    }
}

TEST_CASE("reactor constraint builder counts and contents") {
    auto cs = build_reactor_constraints(30);
    CHECK(cs.size() == 61);
    std::size_t terminal = 0;
    bool has_ca = false;
    for (const auto& c : cs) {
        CHECK(c.p == 0.9);
        if (c.terminal) {
            ++terminal;
            if (c.h[0] == 1.0) {
                has_ca = true;
                CHECK(c.g == 0.5);
            }
        }
    }
    CHECK(terminal == 3);
    CHECK(has_ca);
}

TEST_CASE("warm start: midpoint without a previous solution, shift with one") {
    auto spec = fixture::reactor_ocp(5, 2);
    VecD z0 = warm_start(std::nullopt, spec);
    for (std::size_t k = 0; k < 5; ++k) {
        CHECK(z0[2 * k] == doctest::Approx(125.0));
        CHECK(z0[2 * k + 1] == doctest::Approx(350.0));
    }
    OcpSolution prev;
    prev.controls = {VecD{10.0, 210.0}, VecD{20.0, 220.0}, VecD{30.0, 230.0}, VecD{40.0, 240.0},
                     VecD{50.0, 250.0}};
    VecD z1 = warm_start(prev, spec);
    CHECK(z1[0] == 20.0);
    CHECK(z1[1] == 220.0);
    CHECK(z1[6] == 50.0);
    CHECK(z1[8] == 50.0);  // repeated last control
    for (std::size_t i = 0; i < z1.size(); i += 2) {
        CHECK(z1[i] >= 0.0);
        CHECK(z1[i] <= 250.0);
    }
}

TEST_CASE("objective: zero covariance and constant controls reduce to -C*V") {
    std::vector<GaussianBelief> beliefs(3);
    std::vector<VecD> controls(3, VecD{100.0, 300.0});
    for (auto& b : beliefs) {
        b.mean = VecD{0.1, 0.2, 1.5, 330.0, 400.0};
        b.cov = MatD(5, 5, 0.0);
    }
    double obj = economic_objective(beliefs, controls, VecD{2e-4, 5e-5});
    CHECK(obj == doctest::Approx(-1.5 * 400.0));

    // Doubling a single control jump quadruples its smoothing contribution.
    controls[1][0] = 110.0;
    double o1 = economic_objective(beliefs, controls, VecD{2e-4, 5e-5}) + 1.5 * 400.0;
    controls[1][0] = 120.0;
    double o2 = economic_objective(beliefs, controls, VecD{2e-4, 5e-5}) + 1.5 * 400.0;
    CHECK(o2 == doctest::Approx(4.0 * o1).epsilon(1e-9));
}

TEST_CASE("sequential gradients and jacobians match finite differences") {
    auto spec = fixture::reactor_ocp(6, 2);
    auto P = transcribe(spec);
    Rng rng(71);
    for (int t = 0; t < 2; ++t) {
        VecD z = random_controls(rng, spec);
        auto chk = check_derivatives(P, z, 1e-6);
        CHECK(chk.grad_max_err < 1e-5);
        CHECK(chk.jac_max_err < 1e-5);
    }
}

TEST_CASE("robust horizon: solved reactor instance freezes covariances bit-identically") {
    auto spec = fixture::reactor_ocp(30, 2);
    Rng rng(72);
    VecD z = random_controls(rng, spec);
    auto beliefs = detail::propagate_controls(spec, z);
    REQUIRE(beliefs.size() == 30);
    // Exactly two distinct covariances along the horizon, stages >= 3 equal
    // stage 2 bit for bit.
    const MatD& frozen = beliefs[1].cov;
    bool stage1_differs = oracle::max_abs_diff(beliefs[0].cov, frozen) > 0.0;
    CHECK(stage1_differs);
    for (std::size_t k = 2; k < 30; ++k)
        for (std::size_t i = 0; i < 5; ++i)
            for (std::size_t j = 0; j < 5; ++j) CHECK(beliefs[k].cov(i, j) == frozen(i, j));
}

TEST_CASE("deterministic limit: zero noise and p = 0.5 reproduce the plain rollout") {
    auto spec = fixture::reactor_ocp(4, 4, DiscretizeScheme{}, 0.5);
    spec.model.noise.process_cov = MatD(5, 5, 0.0);
    spec.initial_belief.cov = MatD(5, 5, 0.0);
    auto P = transcribe(spec);

    Rng rng(73);
    VecD z = random_controls(rng, spec);

    // Plain deterministic rollout of the mean.
    VecD x = spec.initial_belief.mean;
    std::vector<VecD> traj;
    for (std::size_t k = 0; k < 4; ++k) {
        VecD u{z[2 * k], z[2 * k + 1]};
        x = spec.model.transition(x, u);
        traj.push_back(x);
    }
    double obj_det = -(traj.back()[2] * traj.back()[4]);
    for (std::size_t k = 1; k < 4; ++k) {
        double du0 = z[2 * k] - z[2 * (k - 1)];
        double du1 = z[2 * k + 1] - z[2 * (k - 1) + 1];
        obj_det += 2e-4 * du0 * du0 + 5e-5 * du1 * du1;
    }
    CHECK(P.objective(z) == doctest::Approx(obj_det).epsilon(1e-10));

    // Tightening vanishes: slack is the raw linear margin.
    VecD c = P.constraints(z);
    std::size_t idx = 0;
    for (const auto& con : spec.constraints) {
        double lin = con.g;
        for (std::size_t i = 0; i < 5; ++i) lin -= con.h[i] * traj[con.stage - 1][i];
        CHECK(c[idx] == doctest::Approx(lin).epsilon(1e-9));
        ++idx;
    }
}

TEST_CASE("simultaneous and sequential transcriptions agree at an embedded point") {
    auto spec = fixture::reactor_ocp(2, 2);
    auto seq = transcribe(spec);
    auto sim_spec = spec;
    sim_spec.transcription = OcpSpec::Transcription::kSimultaneous;
    auto sim = transcribe(sim_spec);

    Rng rng(74);
    VecD u = random_controls(rng, spec);
    VecD z = simultaneous_point(sim_spec, u);

    CHECK(std::fabs(seq.objective(u) - sim.objective(z)) < 1e-8);
    VecD cs = seq.constraints(u);
    VecD cz = sim.constraints(z);
    REQUIRE(cz.size() == sim.m_eq + cs.size());
    // Equalities hold at the embedded point.
    for (std::size_t r = 0; r < sim.m_eq; ++r) CHECK(std::fabs(cz[r]) < 1e-8);
    // Inequality values coincide across modes.
    for (std::size_t r = 0; r < cs.size(); ++r)
        CHECK(cz[sim.m_eq + r] == doctest::Approx(cs[r]).epsilon(1e-8));
}

TEST_CASE("simultaneous derivatives match finite differences") {
    DiscretizeScheme scheme;
    scheme.segments = 1;  // keep the NLP small
    auto spec = fixture::reactor_ocp(2, 1, scheme);
    spec.transcription = OcpSpec::Transcription::kSimultaneous;
    auto P = transcribe(spec);
    Rng rng(75);
    VecD u = random_controls(rng, spec);
    VecD z = simultaneous_point(spec, u);
    // Covariance entries are ~1e-5 with strongly curved Cholesky
    // sensitivities, so the FD probe needs a smaller step and a looser gate
    // than the control-space check.
    auto chk = check_derivatives(P, z, 1e-7);
    CHECK(chk.grad_max_err < 1e-4);
    CHECK(chk.jac_max_err < 2e-4);
}

TEST_CASE("solve_ocp: small reactor instance converges within bounds and slack") {
    auto spec = fixture::reactor_ocp(5, 2);
    auto sol = solve_ocp(spec, warm_start(std::nullopt, spec));
    CHECK(sol.solver_report.converged());
    REQUIRE(sol.controls.size() == 5);
    for (const auto& u : sol.controls) {
        CHECK(u[0] >= -1e-9);
        CHECK(u[0] <= 250.0 + 1e-9);
        CHECK(u[1] >= 200.0 - 1e-9);
        CHECK(u[1] <= 500.0 + 1e-9);
    }
    // Tightened slacks at the solution.
    for (const auto& c : spec.constraints) {
        const auto& b = sol.beliefs[c.stage - 1];
        CHECK(tighten(c, b) >= -1e-6);
    }
    CHECK(sol.beliefs.size() == 5);
}

TEST_CASE("simultaneous solve agrees with sequential on a tiny instance") {
    DiscretizeScheme scheme;
    scheme.segments = 1;
    auto spec = fixture::reactor_ocp(2, 1, scheme);
    auto seq_sol = solve_ocp(spec, warm_start(std::nullopt, spec));
    REQUIRE(seq_sol.solver_report.converged());

    auto sim_spec = spec;
    sim_spec.transcription = OcpSpec::Transcription::kSimultaneous;
    SolverOptions opts;
    opts.max_iter = 800;
    VecD guess(spec.horizon * 2);
    for (std::size_t k = 0; k < spec.horizon; ++k)
        for (std::size_t j = 0; j < 2; ++j) guess[2 * k + j] = seq_sol.controls[k][j];
    auto sim_sol = solve_ocp(sim_spec, guess, opts);
    REQUIRE(sim_sol.solver_report.converged());
    CHECK(std::fabs(sim_sol.objective_value - seq_sol.objective_value) <
          1e-4 * std::max(1.0, std::fabs(seq_sol.objective_value)));
}

TEST_SUITE_END();
