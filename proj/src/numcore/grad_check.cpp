// SPDX-License-Identifier: Apache-2.0
#include "tli/numcore/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "tli/numcore/error.hpp"

namespace tli {

GradCheckResult grad_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x,
                           double h) {
    Tensor leaf = x.clone();
    leaf.set_requires_grad(true);
    std::vector<Tensor> params{leaf};
    return grad_check([&]() { return f(leaf); }, params, h);
}

GradCheckResult grad_check(const std::function<Tensor()>& f, std::span<Tensor> params,
                           double h, double relative_floor) {
    for (auto& p : params) {
        p.set_requires_grad(true);
        p.zero_grad();
    }
    {
        Tape tape;
        TapeScope scope(tape);
        const Tensor loss = f();
        backward(loss, tape);
    }
    std::vector<std::vector<double>> analytic;
    analytic.reserve(params.size());
    for (auto& p : params) {
        analytic.emplace_back(p.grad().begin(), p.grad().end());
    }

    GradCheckResult result;
    NoGradScope no_grad;
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        auto values = params[pi].mutable_data();
        for (std::size_t i = 0; i < values.size(); ++i) {
            const double saved = values[i];
            values[i] = saved + h;
            const double up = f().item();
            values[i] = saved - h;
            const double down = f().item();
            values[i] = saved;
            const double numeric = (up - down) / (2.0 * h);
            const double a = analytic[pi][i];
            const double diff = std::abs(a - numeric);
            result.max_error = std::max(result.max_error, diff / std::max(1.0, std::abs(a)));
            const double denom = std::max({std::abs(a), std::abs(numeric), relative_floor});
            result.max_relative = std::max(result.max_relative, diff / denom);
            ++result.coordinates;
        }
    }
    return result;
}

} // namespace tli
