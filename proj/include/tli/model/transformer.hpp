// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <filesystem>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "tli/model/vocabulary.hpp"
#include "tli/numcore/rng.hpp"
#include "tli/numcore/tensor.hpp"

namespace tli {

struct TransformerConfig {
    std::size_t vocab_size = 512;
    std::size_t d_model = 64;
    std::size_t n_layers = 4;
    std::size_t n_heads = 4;
    std::size_t d_ff = 256;
    std::size_t max_seq = 16;
    /// RMS normalization epsilon; every norm in the model is RMSNorm.
    double norm_eps = 1e-5;

    void validate() const;
    /// Hidden-state probes: input embeddings, one per block, final norm.
    std::size_t n_states() const noexcept { return n_layers + 2; }
    std::size_t final_layer() const noexcept { return n_layers + 1; }

    bool operator==(const TransformerConfig&) const = default;
};

/// Projection names every block exposes; adapters target these by name.
inline constexpr std::string_view kAttentionProjections[] = {"q_proj", "k_proj", "v_proj",
                                                             "o_proj"};

struct TransformerBlock {
    Tensor attn_norm; // [d]
    Tensor q_proj;    // [d x d], output-major
    Tensor k_proj;
    Tensor v_proj;
    Tensor o_proj;
    Tensor ffn_norm;  // [d]
    Tensor gate_proj; // [d_ff x d]
    Tensor up_proj;   // [d_ff x d]
    Tensor down_proj; // [d x d_ff]

    /// Resolves q_proj/k_proj/v_proj/o_proj/gate_proj/up_proj/down_proj.
    Tensor* projection(std::string_view name);
    const Tensor* projection(std::string_view name) const;
};

/// Decoder-only, pre-norm transformer with SwiGLU feed-forward blocks, no
/// positional embedding (causal masking supplies order), no biases.
struct MicroTransformer {
    TransformerConfig config;
    Vocabulary vocab;
    Tensor token_embedding; // [vocab x d]
    std::vector<TransformerBlock> blocks;
    Tensor final_norm; // [d]
    Tensor lm_head;    // [vocab x d]

    /// Gaussian init: embeddings with `embedding_std`, projections with
    /// `weight_std`, norm gains one.
    static MicroTransformer random(const TransformerConfig& config, Vocabulary vocab, Rng& rng,
                                   double weight_std = 0.02, double embedding_std = 1.0);

    /// Parameters in checkpoint order: token_embedding, then per block
    /// blocks.{i}.{attn_norm,q_proj,k_proj,v_proj,o_proj,ffn_norm,gate_proj,up_proj,down_proj},
    /// then final_norm, lm_head.
    std::vector<std::pair<std::string, Tensor>> named_parameters() const;

    /// Deep copy with independent storage.
    MicroTransformer clone() const;

    void set_requires_grad(bool value);
};

/// Supplies an additive term for a named projection inside block `layer`
/// (0-based). Returning nullopt leaves the projection unchanged.
class ProjectionHook {
public:
    virtual ~ProjectionHook() = default;
    virtual std::optional<Tensor> delta(std::size_t layer, std::string_view name,
                                        const Tensor& input) = 0;
};

struct ForwardOptions {
    ProjectionHook* hook = nullptr;
    /// Stop after this hidden-state index; later states are not computed.
    std::size_t last_state = std::numeric_limits<std::size_t>::max();
};

struct HiddenStates {
    /// index 0: input embeddings; k in 1..n_layers: residual stream after
    /// block k; n_layers + 1: after the final norm. Each [t x d].
    std::vector<Tensor> per_layer;
    std::vector<int> attention_mask;
};

HiddenStates forward_with_hidden_states(const MicroTransformer& model,
                                        std::span<const std::size_t> ids,
                                        std::span<const int> mask,
                                        const ForwardOptions& options = {});

/// lm_head applied to the final-norm state.
Tensor output_logits(const MicroTransformer& model, const HiddenStates& states);

/// tokenize -> forward -> per_layer[layer] -> masked mean pool -> L2 normalize.
Tensor embed_word(const MicroTransformer& model, std::string_view word, std::size_t layer,
                  ProjectionHook* hook = nullptr);

// Checkpoints. Layout, all text lines '\n'-terminated:
//   TLI-CHECKPOINT 1
//   kind <kind>
//   meta <key> <value>        (repeated)
//   tokens <count>            (optional; followed by <count> token lines)
//   tensor <name> <dims...>   (repeated, payload order)
//   end
// followed by each tensor's values as little-endian IEEE-754 binary64.

struct CheckpointContainer {
    std::string kind;
    std::vector<std::pair<std::string, std::string>> meta;
    std::vector<std::string> tokens;
    std::vector<std::pair<std::string, Tensor>> tensors;

    const std::string& meta_value(std::string_view key) const;
    const Tensor& tensor(std::string_view name) const;
};

void write_container(const CheckpointContainer& container, const std::filesystem::path& path);
CheckpointContainer read_container(const std::filesystem::path& path);

void save_checkpoint(const MicroTransformer& model, const std::filesystem::path& path);
MicroTransformer load_checkpoint(const std::filesystem::path& path);

} // namespace tli
