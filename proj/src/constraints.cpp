#include "snmpc/constraints.hpp"

#include <cmath>

namespace snmpc {

LinearChanceConstraint make_constraint(VecD h, double g, double p, std::size_t stage,
                                       bool terminal) {
    require(p > 0.0 && p < 1.0, "chance constraint: p must lie in (0, 1)");
    bool nonzero = false;
    for (std::size_t i = 0; i < h.size(); ++i) nonzero = nonzero || h[i] != 0.0;
    require(nonzero, "chance constraint: zero rows must be dropped at construction");
    return LinearChanceConstraint{std::move(h), g, p, stage, terminal};
}

double tighten(const LinearChanceConstraint& c, const GaussianBelief& belief) {
    require(c.h.size() == belief.mean.size(), "tighten: dimension mismatch");
    double hx = 0.0;
    for (std::size_t i = 0; i < c.h.size(); ++i) hx += c.h[i] * belief.mean[i];
    double quad = 0.0;
    for (std::size_t i = 0; i < c.h.size(); ++i) {
        if (c.h[i] == 0.0) continue;
        for (std::size_t j = 0; j < c.h.size(); ++j)
            quad += c.h[i] * c.h[j] * belief.cov(i, j);
    }
    if (quad < -1e-12)
        throw std::runtime_error("tighten: negative variance h^T S h (corrupted covariance)");
    quad = std::max(quad, 0.0);
    return c.g - hx - gaussian_quantile(c.p) * std::sqrt(quad);
}

std::vector<LinearChanceConstraint> build_reactor_constraints(std::size_t horizon,
                                                              double probability) {
    require(horizon >= 2, "reactor constraints: horizon must be at least 2");
    std::vector<LinearChanceConstraint> out;
    out.reserve(2 * (horizon - 1) + 3);
    auto unit = [](std::size_t i) {
        VecD h(5, 0.0);
        h[i] = 1.0;
        return h;
    };
    for (std::size_t k = 1; k < horizon; ++k) {
        out.push_back(make_constraint(unit(3), 440.0, probability, k));  // temperature
        out.push_back(make_constraint(unit(4), 750.0, probability, k));  // volume
    }
    out.push_back(make_constraint(unit(0), 0.5, probability, horizon, true));  // terminal C_A
    out.push_back(make_constraint(unit(3), 440.0, probability, horizon, true));
    out.push_back(make_constraint(unit(4), 750.0, probability, horizon, true));
    return out;
}

}  // namespace snmpc
