// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "tli/model/transformer.hpp"
#include "tli/numcore/rng.hpp"
#include "tli/numcore/tensor.hpp"

namespace tli {

struct LoraConfig {
    std::size_t rank = 16;
    double alpha = 32.0;
    double dropout_p = 0.05;
    std::vector<std::string> target_names{"q_proj", "v_proj"};
    /// 0-based block indices; empty means every block.
    std::vector<std::size_t> target_layers;
    /// Standard deviation of the Gaussian used for A.
    double init_std = 0.02;

    double scaling() const { return alpha / static_cast<double>(rank); }
    void validate() const;
};

/// delta W = scaling * B * A, with A [r x d_in] and B [d_out x r]. No bias.
struct LoraAdapter {
    Tensor a;
    Tensor b;
    double scaling = 1.0;
    std::size_t layer = 0;
    std::string name;
};

/// W x + scaling * B (A drop(x)), applied to each row of x ([t x d_in] or a
/// single [d_in] vector). Dropout is active only when `training`.
Tensor adapted_forward(const Tensor& weight, const LoraAdapter& adapter, const Tensor& x,
                       bool training, double dropout_p, Rng& rng);

/// The set of adapters attached to one base model. Acts as the model's
/// projection hook; the base model itself is never modified.
class LoraSet : public ProjectionHook {
public:
    /// One adapter per (target layer, target name); A ~ N(0, init_std^2),
    /// B = 0. Freezes the base model's parameters.
    static LoraSet inject(MicroTransformer& base, const LoraConfig& config, Rng& rng);

    std::optional<Tensor> delta(std::size_t layer, std::string_view name,
                                const Tensor& input) override;

    /// Training mode turns on adapter-input dropout driven by `rng`.
    void train(Rng& rng) { dropout_rng_ = &rng; }
    void eval() { dropout_rng_ = nullptr; }
    bool training() const noexcept { return dropout_rng_ != nullptr; }

    const LoraConfig& config() const noexcept { return config_; }
    std::vector<LoraAdapter>& adapters() noexcept { return adapters_; }
    const std::vector<LoraAdapter>& adapters() const noexcept { return adapters_; }
    const LoraAdapter* find(std::size_t layer, std::string_view name) const;

    /// A and B of every adapter, in adapter order.
    std::vector<Tensor> trainable_parameters() const;
    std::size_t trainable_parameter_count() const;

    /// Deep copy (independent A/B storage).
    LoraSet clone() const;

    void save(const std::filesystem::path& path) const;
    /// Validates the stored adapters against `base` (names, layers, shapes).
    static LoraSet load(const std::filesystem::path& path, const MicroTransformer& base);

private:
    LoraConfig config_;
    std::vector<LoraAdapter> adapters_;
    Rng* dropout_rng_ = nullptr;
};

/// Base model with W' = W + scaling * B * A folded into every adapted
/// projection. Returns an independent copy.
MicroTransformer merge(const MicroTransformer& base, const LoraSet& adapters);

} // namespace tli
