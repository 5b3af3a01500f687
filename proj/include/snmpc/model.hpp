#pragma once

#include <functional>
#include <memory>
#include <string>

#include "snmpc/ukf.hpp"

// Discrete-time stochastic system interface and the concrete semi-batch
// reactor model (series reactions 2A -> B -> 3C with heat balance).

namespace snmpc {

// A map evaluable on plain doubles and on AD duals; module boundaries store
// both instantiations of the same templated code.
struct DualFn {
    std::function<VecD(const VecD&, const VecD&)> value;
    std::function<Vec<Dual>(const Vec<Dual>&, const Vec<Dual>&)> dual;

    VecD operator()(const VecD& x, const VecD& u) const { return value(x, u); }
    Vec<Dual> operator()(const Vec<Dual>& x, const Vec<Dual>& u) const { return dual(x, u); }

    template <class F>
    static DualFn wrap(F f) {
        DualFn fn;
        fn.value = [f](const VecD& x, const VecD& u) { return f(x, u); };
        fn.dual = [f](const Vec<Dual>& x, const Vec<Dual>& u) { return f(x, u); };
        return fn;
    }
};

class CollocationStepper;

struct SystemModel {
    std::size_t n_x = 0;
    std::size_t n_u = 0;
    std::size_t n_y = 0;
    DualFn transition;   // x(k+1) = transition(x(k), u(k)) (+ w)
    DualFn measurement;  // y(k) = measurement(x(k), u(k)) (+ v)
    NoiseModel noise;    // additive process/measurement covariances
    // Set when the transition is a collocation integrator; the simultaneous
    // transcription needs the node-level recipe.
    std::shared_ptr<const CollocationStepper> stepper;
};

// Physical constants of the semi-batch reactor. Units: rates in 1/h,
// activation-energy groups E/R in K, UA in energy/(h K), concentrations in
// mol/dm^3, enthalpies in energy/mol, heat capacities in energy/(mol K).
struct ReactorParams {
    double A1 = 0.0;        // rate of reaction 1 at 320 K
    double A2 = 0.0;        // rate of reaction 2 at 300 K
    double E1A = 0.0;       // activation-energy group of reaction 1
    double E2B = 0.0;       // activation-energy group of reaction 2
    double UA = 0.0;        // heat-exchanger coefficient
    double C_A0 = 0.0;      // feed concentration of A
    double T0 = 0.0;        // feed temperature
    double dH_Rx1A = 0.0;   // reaction 1 enthalpy (exothermic, <= 0)
    double dH_Rx2B = 0.0;   // reaction 2 enthalpy (endothermic, >= 0)
    double Cp_A = 0.0;
    double Cp_B = 0.0;
    double Cp_C = 0.0;
    double Cp_H2SO4 = 0.0;
    double N_H2SO4 = 0.0;   // catalyst moles
};

// Validates sign conventions; throws naming the offending field.
void check_params(const ReactorParams& p);

// Parses a JSON document with exactly the ReactorParams field names.
// Missing or non-numeric fields are hard errors naming the field.
ReactorParams load_params(const std::string& json_text);
ReactorParams load_params_file(const std::string& path);

// State layout [C_A, C_B, C_C, T, V]; input layout [F, Ta].
inline constexpr std::size_t kReactorNx = 5;
inline constexpr std::size_t kReactorNu = 2;
inline constexpr std::size_t kReactorNy = 3;

// Continuous-time right-hand side of the reactor balance equations.
template <class T>
Vec<T> reactor_rhs(const Vec<T>& x, const Vec<T>& u, const ReactorParams& p) {
    require(x.size() == kReactorNx && u.size() == kReactorNu, "reactor_rhs: dimension mismatch");
    const T& ca = x[0];
    const T& cb = x[1];
    const T& cc = x[2];
    const T& temp = x[3];
    const T& vol = x[4];
    const T& feed = u[0];
    const T& ta = u[1];
    if (!(value_of(vol) > 0.0)) throw std::runtime_error("reactor_rhs: volume must be positive");
    for (std::size_t i = 0; i < x.size(); ++i)
        if (!isfinite_value(x[i])) throw std::runtime_error("reactor_rhs: non-finite state");

    // Rate constants referenced to 320 K / 300 K in the standard Arrhenius
    // form k(T) = k(T_ref) exp(E (1/T_ref - 1/T)).
    T k1a = p.A1 * exp(T(p.E1A) * (1.0 / 320.0 - 1.0 / temp));
    T k2b = p.A2 * exp(T(p.E2B) * (1.0 / 300.0 - 1.0 / temp));
    T dilution = feed / vol;

    Vec<T> dx(kReactorNx);
    dx[0] = -k1a * ca + (p.C_A0 - ca) * dilution;
    dx[1] = 0.5 * k1a * ca - k2b * cb - cb * dilution;
    dx[2] = 3.0 * k2b * cb - cc * dilution;
    T heat_cap = (ca * p.Cp_A + cb * p.Cp_B + cc * p.Cp_C) * vol + p.N_H2SO4 * p.Cp_H2SO4;
    T heat = p.UA * (ta - temp) - feed * p.C_A0 * p.Cp_A * (temp - p.T0) +
             (-p.dH_Rx1A * k1a * ca - p.dH_Rx2B * k2b * cb) * vol;
    dx[3] = heat / heat_cap;
    dx[4] = feed;
    return dx;
}

inline Vec<Dual> reactor_rhs_dual(const Vec<Dual>& x, const Vec<Dual>& u, const ReactorParams& p) {
    return reactor_rhs(x, u, p);
}

// Reactor measurement: C_A, C_B and V are observed directly.
template <class T>
Vec<T> reactor_measurement(const Vec<T>& x, const Vec<T>& /*u*/) {
    require(x.size() == kReactorNx, "reactor_measurement: dimension mismatch");
    Vec<T> y(kReactorNy);
    y[0] = x[0];
    y[1] = x[1];
    y[2] = x[4];
    return y;
}

struct DiscretizeScheme {
    enum class Kind { kCollocation, kImplicitRk } kind = Kind::kCollocation;
    std::size_t degree = 3;    // collocation polynomial degree (Radau nodes)
    std::size_t segments = 2;  // polynomials per control interval
};

// Discrete-time reactor model integrating the balance equations over dt with
// the requested scheme. Noise covariances start at zero; callers fill them.
SystemModel discretize(const ReactorParams& params, double dt, const DiscretizeScheme& scheme);

}  // namespace snmpc
