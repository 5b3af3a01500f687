#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "snmpc/collocation.hpp"

using namespace snmpc;

namespace {

ReactorParams test_params() {
    ReactorParams p;
    p.A1 = 1.25;
    p.A2 = 0.08;
    p.E1A = 9500.0 / 1.987;
    p.E2B = 7000.0 / 1.987;
    p.UA = 35000.0;
    p.C_A0 = 4.0;
    p.T0 = 305.0;
    p.dH_Rx1A = -6500.0;
    p.dH_Rx2B = 8000.0;
    p.Cp_A = 30.0;
    p.Cp_B = 60.0;
    p.Cp_C = 20.0;
    p.Cp_H2SO4 = 35.0;
    p.N_H2SO4 = 100.0;
    return p;
}

std::string params_json(const char* drop_field = nullptr, double dh1_override = -6500.0) {
    auto p = test_params();
    std::string s = "{";
    auto add = [&](const char* name, double v) {
        if (drop_field && std::string(name) == drop_field) return;
        s += "\"" + std::string(name) + "\":" + std::to_string(v) + ",";
    };
    add("A1", p.A1);
    add("A2", p.A2);
    add("E1A", p.E1A);
    add("E2B", p.E2B);
    add("UA", p.UA);
    add("C_A0", p.C_A0);
    add("T0", p.T0);
    add("dH_Rx1A", dh1_override);
    add("dH_Rx2B", p.dH_Rx2B);
    add("Cp_A", p.Cp_A);
    add("Cp_B", p.Cp_B);
    add("Cp_C", p.Cp_C);
    add("Cp_H2SO4", p.Cp_H2SO4);
    add("N_H2SO4", p.N_H2SO4);
    s.back() = '}';
    return s;
}

VecD interior_state(Rng& rng) {
    return VecD{0.2 + 2.0 * rng.uniform(), 0.2 + 1.5 * rng.uniform(), 0.2 + 2.0 * rng.uniform(),
                300.0 + 100.0 * rng.uniform(), 150.0 + 400.0 * rng.uniform()};
}

VecD interior_input(Rng& rng) {
    return VecD{20.0 + 200.0 * rng.uniform(), 220.0 + 250.0 * rng.uniform()};
}

}  // namespace

TEST_SUITE_BEGIN("model");

TEST_CASE("reactor_rhs: zero feed freezes the volume") {
    auto p = test_params();
    VecD x{1.0, 0.5, 0.2, 330.0, 200.0};
    VecD u{0.0, 300.0};
    auto dx = reactor_rhs(x, u, p);
    CHECK(dx[4] == 0.0);
}

TEST_CASE("reactor_rhs: rate constants hit their reference values") {
    auto p = test_params();
    // At T = 320 the first exponent vanishes: with C_B = 0 and F = 0,
    // dC_A/dt = -k1A * C_A, so k1A == A1.
    VecD x{2.0, 0.0, 0.0, 320.0, 100.0};
    VecD u{0.0, 320.0};
    auto dx = reactor_rhs(x, u, p);
    CHECK(-dx[0] / x[0] == doctest::Approx(p.A1).epsilon(1e-14));

    // At T = 300 with C_A = 0: dC_B/dt = -k2B * C_B, dC_C/dt = 3 k2B C_B.
    VecD x2{0.0, 1.5, 0.0, 300.0, 100.0};
    auto dx2 = reactor_rhs(x2, u, p);
    CHECK(-dx2[1] / x2[1] == doctest::Approx(p.A2).epsilon(1e-14));
    CHECK(dx2[2] == doctest::Approx(3.0 * p.A2 * x2[1]).epsilon(1e-14));
}

TEST_CASE("reactor_rhs rejects nonpositive volume and non-finite states") {
    auto p = test_params();
    VecD u{10.0, 300.0};
    CHECK_THROWS(reactor_rhs(VecD{1.0, 0.0, 0.0, 300.0, 0.0}, u, p));
    CHECK_THROWS(reactor_rhs(VecD{1.0, 0.0, 0.0, 300.0, -5.0}, u, p));
    VecD bad{1.0, 0.0, 0.0, std::nan(""), 100.0};
    CHECK_THROWS(reactor_rhs(bad, u, p));
}

TEST_CASE("load_params round-trips and validates") {
    auto p = load_params(params_json());
    CHECK(p.A1 == doctest::Approx(1.25));
    CHECK(p.UA == doctest::Approx(35000.0));
    CHECK(p.dH_Rx1A == doctest::Approx(-6500.0));

    // Missing field is a hard error naming the field.
    try {
        load_params(params_json("UA"));
        FAIL("expected an exception");
    } catch (const std::exception& e) {
        CHECK(std::string(e.what()).find("UA") != std::string::npos);
    }

    // Wrong enthalpy sign violates the exothermic invariant.
    CHECK_THROWS(load_params(params_json(nullptr, +100.0)));
}

TEST_CASE("collocation integrates the linear test equation to high order") {
    DualFn rhs = DualFn::wrap([](const auto& x, const auto&) {
        using T = std::decay_t<decltype(x[0])>;
        Vec<T> dx(1);
        dx[0] = -1.0 * x[0];
        return dx;
    });
    for (std::size_t segments : {1u, 2u}) {
        CollocationStepper stepper(rhs, 1, 0, 0.1, 3, segments);
        VecD x1 = stepper.step(VecD{1.0}, VecD(0));
        CHECK(std::fabs(x1[0] - std::exp(-0.1)) < 1e-8);
    }
}

TEST_CASE("collocation convergence order on the reactor is at least the degree") {
    auto p = test_params();
    DualFn rhs;
    rhs.value = [p](const VecD& x, const VecD& u) { return reactor_rhs(x, u, p); };
    rhs.dual = [p](const Vec<Dual>& x, const Vec<Dual>& u) { return reactor_rhs(x, u, p); };
    VecD x0{1.0, 0.8, 0.3, 330.0, 200.0};
    VecD u{120.0, 350.0};
    const double dt = 0.2;
    auto reference = oracle::rk4([&](const VecD& x) { return rhs.value(x, u); }, x0, dt, 1e-5);

    auto err_for = [&](std::size_t segments) {
        CollocationStepper st(rhs, 5, 2, dt, 3, segments);
        VecD x1 = st.step(x0, u);
        double e = 0.0;
        for (std::size_t i = 0; i < 5; ++i)
            e = std::max(e, std::fabs(x1[i] - reference[i]) / (1.0 + std::fabs(reference[i])));
        return e;
    };
    double e1 = err_for(1), e2 = err_for(2);
    CHECK(e2 < e1);
    if (e2 > 1e-13)  // above roundoff the ratio must reflect order >= 3
        CHECK(e1 / e2 >= std::pow(2.0, 3.0) * 0.8);
}

TEST_CASE("discretize: volume row is exact and the measurement selects CA, CB, V") {
    auto model = discretize(test_params(), 4.0 / 30.0, DiscretizeScheme{});
    VecD x0{0.5, 0.3, 0.1, 320.0, 150.0};
    VecD u{90.0, 310.0};
    VecD x1 = model.transition(x0, u);
    CHECK(x1[4] == doctest::Approx(150.0 + 90.0 * 4.0 / 30.0).epsilon(1e-13));

    VecD y = model.measurement(VecD{0.0, 0.0, 0.0, 290.0, 100.0}, u);
    REQUIRE(y.size() == 3);
    CHECK(y[0] == 0.0);
    CHECK(y[1] == 0.0);
    CHECK(y[2] == 100.0);
}

TEST_CASE("discretize matches a fine-step reference on molar balances (zero feed)") {
    auto p = test_params();
    const double dt = 4.0 / 30.0;
    auto model = discretize(p, dt, DiscretizeScheme{});
    VecD x0{1.2, 0.9, 0.4, 330.0, 180.0};
    VecD u{0.0, 330.0};
    VecD got = model.transition(x0, u);
    auto reference = oracle::rk4(
        [&](const VecD& x) { return reactor_rhs(x, u, p); }, x0, dt, 1e-5);
    for (std::size_t i = 0; i < 3; ++i) {
        double moles_got = got[i] * got[4];
        double moles_ref = reference[i] * reference[4];
        CHECK(std::fabs(moles_got - moles_ref) <= 1e-6 * std::max(1.0, std::fabs(moles_ref)));
    }
    CHECK(got[4] == doctest::Approx(x0[4]).epsilon(1e-14));  // no feed, no volume change
}

TEST_CASE("transition jacobian matches central differences at random interior points") {
    auto model = discretize(test_params(), 4.0 / 30.0, DiscretizeScheme{});
    Rng rng(51);
    for (int trial = 0; trial < 4; ++trial) {
        VecD x0 = interior_state(rng);
        VecD u = interior_input(rng);
        MatD J = detail::jacobian_x(model.transition, x0, u, 5);
        for (std::size_t c = 0; c < 5; ++c) {
            double h = 1e-6 * std::max(1.0, std::fabs(x0[c]));
            VecD xp = x0, xm = x0;
            xp[c] += h;
            xm[c] -= h;
            VecD fp = model.transition(xp, u);
            VecD fm = model.transition(xm, u);
            for (std::size_t r = 0; r < 5; ++r) {
                double fd = (fp[r] - fm[r]) / (2.0 * h);
                double denom = std::max({1.0, std::fabs(fd), std::fabs(J(r, c))});
                CHECK(std::fabs(J(r, c) - fd) / denom < 1e-5);
            }
        }
        // Input derivatives too.
        MatD Ju = detail::jacobian_u(model.transition, x0, u, 5);
        for (std::size_t c = 0; c < 2; ++c) {
            double h = 1e-6 * std::max(1.0, std::fabs(u[c]));
            VecD up = u, um = u;
            up[c] += h;
            um[c] -= h;
            VecD fp = model.transition(x0, up);
            VecD fm = model.transition(x0, um);
            for (std::size_t r = 0; r < 5; ++r) {
                double fd = (fp[r] - fm[r]) / (2.0 * h);
                double denom = std::max({1.0, std::fabs(fd), std::fabs(Ju(r, c))});
                CHECK(std::fabs(Ju(r, c) - fd) / denom < 1e-5);
            }
        }
    }
}

TEST_CASE("implicit-rk fallback converges to the same flow") {
    auto p = test_params();
    DiscretizeScheme scheme;
    scheme.kind = DiscretizeScheme::Kind::kImplicitRk;
    scheme.segments = 64;
    auto model = discretize(p, 0.1, scheme);
    VecD x0{0.8, 0.5, 0.2, 325.0, 160.0};
    VecD u{60.0, 320.0};
    VecD got = model.transition(x0, u);
    auto reference = oracle::rk4(
        [&](const VecD& x) { return reactor_rhs(x, u, p); }, x0, 0.1, 1e-5);
    for (std::size_t i = 0; i < 5; ++i)
        CHECK(std::fabs(got[i] - reference[i]) <= 1e-5 * std::max(1.0, std::fabs(reference[i])));
}

TEST_SUITE_END();
