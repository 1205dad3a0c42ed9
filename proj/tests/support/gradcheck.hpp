#pragma once

// Central finite-difference gradient checking for the autodiff engine.

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "npd/tensor.hpp"

namespace npd::testing {

struct GradCheckResult {
    double max_rel_error = 0.0;
};

// Norm-wise relative error ||a - n|| / max(||a|| + ||n||, floor) per input,
// maximised over inputs.
inline GradCheckResult grad_check(const std::function<ad::Tensor(std::vector<ad::Tensor>&)>& f,
                                  std::vector<ad::Tensor>& inputs, double h = 1e-5) {
    for (auto& t : inputs) t.zero_grad();
    ad::backward(f(inputs));
    GradCheckResult r;
    for (auto& t : inputs) {
        if (!t.requires_grad()) continue;
        std::vector<double> analytic(t.grad().begin(), t.grad().end());
        if (analytic.empty()) analytic.assign(t.numel(), 0.0);
        std::vector<double> numeric(t.numel());
        auto v = t.mutable_values();
        for (std::size_t i = 0; i < v.size(); ++i) {
            const double x0 = v[i];
            v[i] = x0 + h;
            const double fp = f(inputs).item();
            v[i] = x0 - h;
            const double fm = f(inputs).item();
            v[i] = x0;
            numeric[i] = (fp - fm) / (2.0 * h);
        }
        double diff = 0.0, na = 0.0, nn = 0.0;
        for (std::size_t i = 0; i < v.size(); ++i) {
            diff += (analytic[i] - numeric[i]) * (analytic[i] - numeric[i]);
            na += analytic[i] * analytic[i];
            nn += numeric[i] * numeric[i];
        }
        const double denom = std::max(std::sqrt(na) + std::sqrt(nn), 1e-10);
        r.max_rel_error = std::max(r.max_rel_error, std::sqrt(diff) / denom);
    }
    return r;
}

}  // namespace npd::testing
