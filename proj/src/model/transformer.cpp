// SPDX-License-Identifier: Apache-2.0
#include "tli/model/transformer.hpp"

#include <algorithm>

#include "tli/numcore/error.hpp"
#include "tli/numcore/ops.hpp"

namespace tli {

void TransformerConfig::validate() const {
    const auto require = [](bool ok, const std::string& what) {
        if (!ok) {
            throw ConfigError("transformer config: " + what);
        }
    };
    require(vocab_size > 0, "vocab_size must be positive");
    require(d_model > 0, "d_model must be positive");
    require(n_layers > 0, "n_layers must be positive");
    require(n_heads > 0, "n_heads must be positive");
    require(d_model % n_heads == 0, "d_model " + std::to_string(d_model) +
                                        " not divisible by n_heads " + std::to_string(n_heads));
    require(d_ff > 0, "d_ff must be positive");
    require(max_seq > 0, "max_seq must be positive");
    require(norm_eps > 0.0, "norm_eps must be positive");
}

Tensor* TransformerBlock::projection(std::string_view name) {
    return const_cast<Tensor*>(std::as_const(*this).projection(name));
}

const Tensor* TransformerBlock::projection(std::string_view name) const {
    if (name == "q_proj") return &q_proj;
    if (name == "k_proj") return &k_proj;
    if (name == "v_proj") return &v_proj;
    if (name == "o_proj") return &o_proj;
    if (name == "gate_proj") return &gate_proj;
    if (name == "up_proj") return &up_proj;
    if (name == "down_proj") return &down_proj;
    return nullptr;
}

namespace {

Tensor gaussian(Shape shape, double stddev, Rng& rng) {
    std::vector<double> values(shape_size(shape));
    for (double& v : values) {
        v = rng.normal(0.0, stddev);
    }
    return Tensor(std::move(shape), std::move(values));
}

} // namespace

MicroTransformer MicroTransformer::random(const TransformerConfig& config, Vocabulary vocab,
                                          Rng& rng, double weight_std, double embedding_std) {
    config.validate();
    if (vocab.size() != config.vocab_size) {
        throw ConfigError("vocabulary has " + std::to_string(vocab.size()) +
                          " tokens but config.vocab_size is " +
                          std::to_string(config.vocab_size));
    }
    const std::size_t d = config.d_model;
    const std::size_t ff = config.d_ff;
    MicroTransformer model;
    model.config = config;
    model.vocab = std::move(vocab);
    model.token_embedding = gaussian({config.vocab_size, d}, embedding_std, rng);
    for (std::size_t i = 0; i < config.n_layers; ++i) {
        TransformerBlock b;
        b.attn_norm = Tensor::filled({d}, 1.0);
        b.q_proj = gaussian({d, d}, weight_std, rng);
        b.k_proj = gaussian({d, d}, weight_std, rng);
        b.v_proj = gaussian({d, d}, weight_std, rng);
        b.o_proj = gaussian({d, d}, weight_std, rng);
        b.ffn_norm = Tensor::filled({d}, 1.0);
        b.gate_proj = gaussian({ff, d}, weight_std, rng);
        b.up_proj = gaussian({ff, d}, weight_std, rng);
        b.down_proj = gaussian({d, ff}, weight_std, rng);
        model.blocks.push_back(std::move(b));
    }
    model.final_norm = Tensor::filled({d}, 1.0);
    model.lm_head = gaussian({config.vocab_size, d}, weight_std, rng);
    return model;
}

std::vector<std::pair<std::string, Tensor>> MicroTransformer::named_parameters() const {
    std::vector<std::pair<std::string, Tensor>> params;
    params.emplace_back("token_embedding", token_embedding);
    for (std::size_t i = 0; i < blocks.size(); ++i) {
        const auto prefix = "blocks." + std::to_string(i) + ".";
        const auto& b = blocks[i];
        params.emplace_back(prefix + "attn_norm", b.attn_norm);
        params.emplace_back(prefix + "q_proj", b.q_proj);
        params.emplace_back(prefix + "k_proj", b.k_proj);
        params.emplace_back(prefix + "v_proj", b.v_proj);
        params.emplace_back(prefix + "o_proj", b.o_proj);
        params.emplace_back(prefix + "ffn_norm", b.ffn_norm);
        params.emplace_back(prefix + "gate_proj", b.gate_proj);
        params.emplace_back(prefix + "up_proj", b.up_proj);
        params.emplace_back(prefix + "down_proj", b.down_proj);
    }
    params.emplace_back("final_norm", final_norm);
    params.emplace_back("lm_head", lm_head);
    return params;
}

MicroTransformer MicroTransformer::clone() const {
    MicroTransformer copy;
    copy.config = config;
    copy.vocab = vocab;
    copy.token_embedding = token_embedding.clone();
    for (const auto& b : blocks) {
        copy.blocks.push_back(TransformerBlock{b.attn_norm.clone(), b.q_proj.clone(),
                                               b.k_proj.clone(), b.v_proj.clone(),
                                               b.o_proj.clone(), b.ffn_norm.clone(),
                                               b.gate_proj.clone(), b.up_proj.clone(),
                                               b.down_proj.clone()});
    }
    copy.final_norm = final_norm.clone();
    copy.lm_head = lm_head.clone();
    return copy;
}

void MicroTransformer::set_requires_grad(bool value) {
    for (auto& [name, t] : named_parameters()) {
        t.set_requires_grad(value);
    }
}

namespace {

Tensor project(const TransformerBlock& block, std::size_t layer, std::string_view name,
               const Tensor& input, ProjectionHook* hook) {
    Tensor out = linear(input, *block.projection(name));
    if (hook != nullptr) {
        if (auto extra = hook->delta(layer, name, input)) {
            out = add(out, *extra);
        }
    }
    return out;
}

} // namespace

HiddenStates forward_with_hidden_states(const MicroTransformer& model,
                                        std::span<const std::size_t> ids,
                                        std::span<const int> mask,
                                        const ForwardOptions& options) {
    const auto& cfg = model.config;
    if (ids.empty()) {
        throw ContractError("forward: empty token sequence");
    }
    if (ids.size() > cfg.max_seq) {
        throw ContractError("forward: sequence of " + std::to_string(ids.size()) +
                            " tokens exceeds max_seq " + std::to_string(cfg.max_seq));
    }
    if (mask.size() != ids.size()) {
        throw DimensionError("forward: mask length " + std::to_string(mask.size()) + " vs " +
                             std::to_string(ids.size()) + " tokens");
    }
    const std::size_t last = std::min(options.last_state, cfg.final_layer());

    HiddenStates states;
    states.attention_mask.assign(mask.begin(), mask.end());
    Tensor x = embedding(model.token_embedding, ids);
    states.per_layer.push_back(x);
    for (std::size_t i = 0; i < model.blocks.size() && states.per_layer.size() <= last; ++i) {
        const auto& b = model.blocks[i];
        const Tensor h = rms_norm(x, b.attn_norm, cfg.norm_eps);
        const Tensor q = project(b, i, "q_proj", h, options.hook);
        const Tensor k = project(b, i, "k_proj", h, options.hook);
        const Tensor v = project(b, i, "v_proj", h, options.hook);
        const Tensor att = causal_self_attention(q, k, v, cfg.n_heads, mask);
        x = add(x, project(b, i, "o_proj", att, options.hook));

        const Tensor h2 = rms_norm(x, b.ffn_norm, cfg.norm_eps);
        const Tensor gate = silu(project(b, i, "gate_proj", h2, options.hook));
        const Tensor up = project(b, i, "up_proj", h2, options.hook);
        x = add(x, project(b, i, "down_proj", mul(gate, up), options.hook));
        states.per_layer.push_back(x);
    }
    if (states.per_layer.size() <= last) {
        states.per_layer.push_back(rms_norm(x, model.final_norm, cfg.norm_eps));
    }
    return states;
}

Tensor output_logits(const MicroTransformer& model, const HiddenStates& states) {
    if (states.per_layer.size() != model.config.n_states()) {
        throw ContractError("output_logits: hidden states stop before the final layer");
    }
    return linear(states.per_layer.back(), model.lm_head);
}

Tensor embed_word(const MicroTransformer& model, std::string_view word, std::size_t layer,
                  ProjectionHook* hook) {
    if (layer > model.config.final_layer()) {
        throw ContractError("embed_word: layer " + std::to_string(layer) + " outside [0, " +
                            std::to_string(model.config.final_layer()) + "]");
    }
    const TokenizedText tokens = tokenize(word, model.vocab);
    ForwardOptions options;
    options.hook = hook;
    options.last_state = layer;
    const HiddenStates states = forward_with_hidden_states(model, tokens.ids, tokens.mask, options);
    return l2_normalize(mean_pool_masked(states.per_layer[layer], states.attention_mask));
}

} // namespace tli
