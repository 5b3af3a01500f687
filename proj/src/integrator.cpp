#include <cmath>
#include <sstream>

#include "snmpc/collocation.hpp"
#include "snmpc/simulate.hpp"

namespace snmpc {

namespace {

double scaled_diff(const VecD& a, const VecD& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i)
        m = std::max(m, std::fabs(a[i] - b[i]) / (1.0 + std::fabs(b[i])));
    return m;
}

}  // namespace

VecD integrate_adaptive(const DualFn& rhs, const VecD& x0, const VecD& u, double dt, double tol) {
    require(dt > 0.0 && tol > 0.0, "integrate_adaptive: bad arguments");
    const std::size_t n = x0.size();
    CollocationStepper stage(rhs, n, u.size(), dt, 3, 1);  // single Radau stage solver

    VecD x = x0;
    double t = 0.0;
    double h = dt;
    const double h_min = dt * 1e-12;
    int consecutive_failures = 0;
    while (t < dt * (1.0 - 1e-14)) {
        h = std::min(h, dt - t);
        bool ok = true;
        VecD full, half;
        try {
            full = stage.step_once(x, u, h);
            VecD mid = stage.step_once(x, u, 0.5 * h);
            half = stage.step_once(mid, u, 0.5 * h);
        } catch (const std::exception&) {
            ok = false;
        }
        if (ok) {
            double err = scaled_diff(full, half);
            if (err <= tol) {
                // Richardson extrapolation of the fifth-order pair.
                for (std::size_t i = 0; i < n; ++i) half[i] += (half[i] - full[i]) / 31.0;
                x = half;
                t += h;
                double grow = err > 0.0 ? 0.9 * std::pow(tol / err, 1.0 / 6.0) : 5.0;
                h *= std::min(5.0, std::max(0.2, grow));
                consecutive_failures = 0;
                continue;
            }
            h *= std::max(0.1, 0.9 * std::pow(tol / err, 1.0 / 6.0));
        } else {
            h *= 0.25;
        }
        if (++consecutive_failures > 60 || h < h_min) {
            std::ostringstream ss;
            ss << "integrate_adaptive: step-size underflow at t = " << t << ", state = [";
            for (std::size_t i = 0; i < n; ++i) ss << (i ? ", " : "") << x[i];
            ss << "]";
            throw std::runtime_error(ss.str());
        }
    }
    return x;
}

}  // namespace snmpc
