#include "snmpc/collocation.hpp"

namespace snmpc {

SystemModel discretize(const ReactorParams& params, double dt, const DiscretizeScheme& scheme) {
    require(dt > 0.0, "discretize: dt must be positive");
    check_params(params);

    SystemModel m;
    m.n_x = kReactorNx;
    m.n_u = kReactorNu;
    m.n_y = kReactorNy;

    DualFn rhs;
    rhs.value = [params](const VecD& x, const VecD& u) { return reactor_rhs(x, u, params); };
    rhs.dual = [params](const Vec<Dual>& x, const Vec<Dual>& u) {
        return reactor_rhs(x, u, params);
    };

    if (scheme.kind == DiscretizeScheme::Kind::kCollocation) {
        auto stepper = std::make_shared<const CollocationStepper>(
            rhs, kReactorNx, kReactorNu, dt, scheme.degree, scheme.segments);
        m.transition = stepper->as_dualfn();
        m.stepper = stepper;
    } else {
        ImplicitRkStepper stepper(rhs, kReactorNx, kReactorNu, dt,
                                  std::max<std::size_t>(1, scheme.segments));
        m.transition = stepper.as_dualfn();
    }

    m.measurement = DualFn::wrap([](const auto& x, const auto& u) {
        using T = std::decay_t<decltype(x[0])>;
        (void)u;
        return reactor_measurement<T>(x, u);
    });

    m.noise.process_cov = MatD(kReactorNx, kReactorNx, 0.0);
    m.noise.measurement_cov = MatD(kReactorNy, kReactorNy, 0.0);
    return m;
}

}  // namespace snmpc
