#pragma once

// Central finite-difference gradient oracle for tests. Kept independent of
// the autodiff path it checks: it only perturbs parameter values and reruns
// the provided forward function.
//
// Relative error uses a denominator floor of 1e-3: an O(1) loss carries about
// 1e-10 of cancellation noise at step 1e-5, so gradients far below that scale
// are compared absolutely (|a - n| <= tol * 1e-3); everything of meaningful
// magnitude is held to the full relative tolerance.

#include <cmath>
#include <functional>
#include <vector>

#include "gtprune/tensor.hpp"

namespace gtprune_tests {

struct FdMismatch {
    bool ok = true;
    std::size_t param_index = 0;
    std::size_t flat_index = 0;
    double analytic = 0.0;
    double numeric = 0.0;
    double rel_err = 0.0;
};

// forward() must rebuild the whole computation from the current parameter
// values and return the scalar loss value.
inline FdMismatch fd_compare(std::vector<gtprune::Tensor> params,
                             const std::function<double()>& forward,
                             const std::vector<std::vector<double>>& analytic_grads,
                             double step = 1e-5, double tol = 1e-4) {
    FdMismatch worst;
    worst.ok = true;
    for (std::size_t p = 0; p < params.size(); ++p) {
        auto& vals = params[p].value();
        for (std::size_t i = 0; i < vals.size(); ++i) {
            const double saved = vals[i];
            vals[i] = saved + step;
            const double up = forward();
            vals[i] = saved - step;
            const double down = forward();
            vals[i] = saved;
            const double numeric = (up - down) / (2.0 * step);
            const double analytic = analytic_grads[p][i];
            const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-3});
            const double rel = std::abs(analytic - numeric) / denom;
            if (rel > worst.rel_err) {
                worst.rel_err = rel;
                worst.param_index = p;
                worst.flat_index = i;
                worst.analytic = analytic;
                worst.numeric = numeric;
                worst.ok = rel <= tol;
            }
        }
    }
    worst.ok = worst.rel_err <= tol;
    return worst;
}

}  // namespace gtprune_tests
