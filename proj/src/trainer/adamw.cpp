// SPDX-License-Identifier: Apache-2.0
#include <cmath>

#include "tli/numcore/error.hpp"
#include "tli/trainer/trainer.hpp"

namespace tli {

AdamW::AdamW(std::vector<Tensor> params, AdamWConfig config)
    : params_{std::move(params)}, config_{config} {
    for (const auto& p : params_) {
        m_.emplace_back(p.size(), 0.0);
        v_.emplace_back(p.size(), 0.0);
    }
}

void AdamW::step(double lr) {
    for (std::size_t pi = 0; pi < params_.size(); ++pi) {
        for (const double g : params_[pi].grad()) {
            if (!std::isfinite(g)) {
                throw NumericError("adamw: non-finite gradient in parameter " +
                                   std::to_string(pi) + " at step " + std::to_string(t_ + 1));
            }
        }
    }
    ++t_;
    const double b1 = config_.beta1;
    const double b2 = config_.beta2;
    const double correction1 = 1.0 - std::pow(b1, static_cast<double>(t_));
    const double correction2 = 1.0 - std::pow(b2, static_cast<double>(t_));
    for (std::size_t pi = 0; pi < params_.size(); ++pi) {
        auto theta = params_[pi].mutable_data();
        const auto grad = params_[pi].grad();
        auto& m = m_[pi];
        auto& v = v_[pi];
        for (std::size_t i = 0; i < theta.size(); ++i) {
            const double g = grad.empty() ? 0.0 : grad[i];
            m[i] = b1 * m[i] + (1.0 - b1) * g;
            v[i] = b2 * v[i] + (1.0 - b2) * g * g;
            const double m_hat = m[i] / correction1;
            const double v_hat = v[i] / correction2;
            theta[i] -= lr * (m_hat / (std::sqrt(v_hat) + config_.eps) +
                              config_.weight_decay * theta[i]);
        }
    }
}

double lr_at(std::size_t step, double base_lr, std::size_t warmup_steps, std::size_t total_steps) {
    if (total_steps <= warmup_steps) {
        throw ConfigError("lr schedule: total steps " + std::to_string(total_steps) +
                          " must exceed warmup steps " + std::to_string(warmup_steps));
    }
    if (step > total_steps) {
        throw ContractError("lr schedule: step " + std::to_string(step) + " beyond total " +
                            std::to_string(total_steps));
    }
    if (step < warmup_steps) {
        return base_lr * static_cast<double>(step) / static_cast<double>(warmup_steps);
    }
    return base_lr * static_cast<double>(total_steps - step) /
           static_cast<double>(total_steps - warmup_steps);
}

double clip_grad_norm(std::span<Tensor> params, double max_norm) {
    double sq = 0.0;
    for (const auto& p : params) {
        for (const double g : p.grad()) {
            sq += g * g;
        }
    }
    const double norm = std::sqrt(sq);
    if (max_norm > 0.0 && norm > max_norm) {
        const double factor = max_norm / norm;
        for (auto& p : params) {
            if (!p.has_grad()) {
                continue;
            }
            for (double& g : p.grad_buffer()) {
                g *= factor;
            }
        }
    }
    return norm;
}

} // namespace tli
