#pragma once

#include <doctest.h>

#include <cmath>
#include <functional>
#include <vector>

#include "fusionlab/tape.hpp"
#include "fusionlab/tensor.hpp"

// Shared gradient-check machinery: central finite differences with step 1e-5
// against tape gradients, tolerance 1e-3 relative with a 1e-5 absolute floor.

namespace testsupport {

using fusionlab::Tape;
using fusionlab::Tensor;
using fusionlab::Var;

inline std::vector<double> finite_diff(Tensor<double>& p, const std::function<double()>& loss,
                                       double step = 1e-5) {
    std::vector<double> g(p.numel());
    for (std::size_t i = 0; i < p.numel(); ++i) {
        const double save = p.values[i];
        p.values[i] = save + step;
        const double up = loss();
        p.values[i] = save - step;
        const double down = loss();
        p.values[i] = save;
        g[i] = (up - down) / (2.0 * step);
    }
    return g;
}

inline void check_grad(const std::vector<double>& analytic, const std::vector<double>& numeric,
                       double rel = 1e-3, double abs_floor = 1e-5) {
    REQUIRE(analytic.size() == numeric.size());
    for (std::size_t i = 0; i < analytic.size(); ++i) {
        const double a = analytic[i], n = numeric[i];
        const double tol = abs_floor + rel * std::max(std::abs(a), std::abs(n));
        CHECK_MESSAGE(std::abs(a - n) <= tol,
                      "grad[" << i << "]: analytic " << a << " vs numeric " << n);
    }
}

using LossBuilder = std::function<Var(Tape<double>&, const std::vector<Var>&)>;

/// Check tape gradients of a scalar loss against finite differences for every
/// listed parameter. The builder must reconstruct the same graph from the
/// parameters' current values on each call.
inline void gradcheck(const std::vector<Tensor<double>*>& params, const LossBuilder& build,
                      double rel = 1e-3, double abs_floor = 1e-5, double step = 1e-5) {
    for (auto* p : params) {
        p->requires_grad = true;
        p->grad.reset();
    }
    Tape<double> tape;
    std::vector<Var> vars;
    vars.reserve(params.size());
    for (auto* p : params) vars.push_back(tape.param(*p));
    tape.backward(build(tape, vars));

    auto loss_value = [&]() {
        Tape<double> t;
        std::vector<Var> vs;
        vs.reserve(params.size());
        for (auto* p : params) vs.push_back(t.param(*p));
        return t.value(build(t, vs)).values[0];
    };
    for (auto* p : params) {
        REQUIRE(p->grad.has_value());
        check_grad(*p->grad, finite_diff(*p, loss_value, step), rel, abs_floor);
    }
}

}  // namespace testsupport
