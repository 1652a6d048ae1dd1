// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "tli/lora/lora.hpp"
#include "tli/model/transformer.hpp"
#include "tli/numcore/tensor.hpp"
#include "tli/synth/pairs.hpp"

namespace tli {

// ------------------------------------------------------------------ loss

/// Anchors (source language) and positives (their translations), one
/// L2-normalized target-layer embedding per row.
struct EmbeddingBatch {
    Tensor anchors;   // [B x d]
    Tensor positives; // [B x d]
};

/// Row-norm tolerance enforced on EmbeddingBatch rows.
inline constexpr double kUnitNormTolerance = 1e-6;

struct ContrastiveLossResult {
    Tensor loss; // scalar
    /// Hardest negative column per row; equals the row itself when B == 1.
    std::vector<std::size_t> negatives;
    std::vector<double> row_losses;
};

/// S = anchors * positives^T; per row i the hardest negative is the
/// first-index argmax over j != i of S[i][j], the row loss is
/// max(0, margin + S[i][n(i)] - S[i][i]), and the loss is their mean.
/// The gradient at the hinge kink is zero.
ContrastiveLossResult in_batch_contrastive_loss(const EmbeddingBatch& batch, double margin);

// ------------------------------------------------------------- optimizer

struct AdamWConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.01;
};

/// Decoupled-weight-decay Adam. Moments are kept per parameter, in the
/// order the parameters were given at construction.
class AdamW {
public:
    AdamW(std::vector<Tensor> params, AdamWConfig config = {});

    /// Applies one update using each parameter's current grad (a missing
    /// grad counts as zero). Throws NumericError, leaving every parameter
    /// untouched, if any gradient is non-finite.
    void step(double lr);

    std::size_t step_count() const noexcept { return t_; }
    const std::vector<Tensor>& params() const noexcept { return params_; }
    const std::vector<std::vector<double>>& first_moments() const noexcept { return m_; }
    const std::vector<std::vector<double>>& second_moments() const noexcept { return v_; }

private:
    std::vector<Tensor> params_;
    AdamWConfig config_;
    std::vector<std::vector<double>> m_;
    std::vector<std::vector<double>> v_;
    std::size_t t_ = 0;
};

/// Linear warmup from 0 to base_lr over warmup_steps, then linear decay to
/// 0 at total_steps.
double lr_at(std::size_t step, double base_lr, std::size_t warmup_steps, std::size_t total_steps);

/// Scales all grads so their global L2 norm is at most max_norm. Returns the
/// norm before clipping.
double clip_grad_norm(std::span<Tensor> params, double max_norm);

// -------------------------------------------------------------- training

struct TliConfig {
    std::size_t target_layer = 2;
    double margin = 0.4;
    double lr = 2e-4;
    std::size_t epochs = 5;
    std::size_t batch_size = 8;
    std::size_t warmup_steps = 50;
    AdamWConfig adam{};
    /// Global grad-norm clip; 0 disables.
    double clip_norm = 1.0;
    std::uint64_t seed = 42;

    void validate() const;
};

struct TrainingStep {
    std::size_t step = 0;
    std::size_t epoch = 0;
    std::size_t batch_rows = 0;
    double loss = 0.0;
    double lr = 0.0;
    /// Global gradient norm before clipping.
    double grad_norm = 0.0;
    /// (adapter name, norm of its A and B gradients) in adapter order.
    std::vector<std::pair<std::string, double>> adapter_grad_norms;
};

struct TrainingLog {
    std::vector<TrainingStep> steps;

    /// Mean step loss of each epoch.
    std::vector<double> epoch_mean_losses() const;
    /// One JSON object per line.
    std::string to_jsonl() const;
    void save(const std::filesystem::path& path) const;
};

/// Builds the batch for `pairs` at `layer` with gradients flowing through
/// the adapters in `hook`.
EmbeddingBatch embed_pairs(const MicroTransformer& model, std::span<const WordPair> pairs,
                           std::size_t layer, ProjectionHook* hook);

/// Fine-tunes `adapters` in place on `pairs` with the in-batch contrastive
/// loss at config.target_layer. The base model is read only.
TrainingLog train_tli(const MicroTransformer& model, LoraSet& adapters, const WordPairSet& pairs,
                      const TliConfig& config);

} // namespace tli
