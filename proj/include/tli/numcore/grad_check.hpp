// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <span>

#include "tli/numcore/tensor.hpp"

namespace tli {

struct GradCheckResult {
    /// max over coordinates of |analytic - numeric| / max(1, |analytic|)
    double max_error = 0.0;
    /// max over coordinates of |analytic - numeric| / max(|analytic|, |numeric|, floor)
    double max_relative = 0.0;
    std::size_t coordinates = 0;
};

/// Compares tape gradients of scalar `f` at `x` with central differences of
/// step `h`. `f` must be deterministic.
GradCheckResult grad_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x,
                           double h = 1e-5);

/// Same, over several trainable tensors that `f` closes over. Values are
/// perturbed in place and restored.
GradCheckResult grad_check(const std::function<Tensor()>& f, std::span<Tensor> params,
                           double h = 1e-5, double relative_floor = 1e-6);

} // namespace tli
