// SPDX-License-Identifier: Apache-2.0
#include "tli/lora/lora.hpp"

#include <algorithm>
#include <cmath>

#include "tli/numcore/error.hpp"
#include "tli/numcore/ops.hpp"
#include "tli/numcore/text.hpp"

namespace tli {

void LoraConfig::validate() const {
    if (rank == 0) {
        throw ConfigError("lora: rank must be positive");
    }
    if (!(alpha > 0.0) || !std::isfinite(scaling())) {
        throw ConfigError("lora: alpha / rank must be finite and positive");
    }
    if (dropout_p < 0.0 || dropout_p >= 1.0) {
        throw ConfigError("lora: dropout must be in [0, 1), got " + format_double(dropout_p));
    }
    if (target_names.empty()) {
        throw ConfigError("lora: no target projections");
    }
    if (init_std < 0.0) {
        throw ConfigError("lora: init_std must be non-negative");
    }
}

namespace {

Tensor as_rows(const Tensor& x) {
    if (x.rank() == 1) {
        return Tensor({1, x.size()}, x.to_vector());
    }
    return x;
}

Tensor low_rank_term(const LoraAdapter& adapter, const Tensor& rows, double dropout_p,
                     Rng* rng) {
    Tensor input = rows;
    if (rng != nullptr && dropout_p > 0.0) {
        input = dropout(rows, dropout_p, *rng);
    }
    return scale(linear(linear(input, adapter.a), adapter.b), adapter.scaling);
}

std::string valid_names() {
    return "q_proj, k_proj, v_proj, o_proj, gate_proj, up_proj, down_proj";
}

std::string adapter_key(std::size_t layer, std::string_view name) {
    return "blocks." + std::to_string(layer) + "." + std::string(name);
}

} // namespace

Tensor adapted_forward(const Tensor& weight, const LoraAdapter& adapter, const Tensor& x,
                       bool training, double dropout_p, Rng& rng) {
    const bool vector_input = x.rank() == 1;
    const Tensor rows = as_rows(x);
    if (adapter.a.cols() != weight.cols() || adapter.b.rows() != weight.rows() ||
        adapter.a.rows() != adapter.b.cols()) {
        throw DimensionError("adapted_forward: adapter A " + shape_to_string(adapter.a.shape()) +
                             ", B " + shape_to_string(adapter.b.shape()) +
                             " do not fit weight " + shape_to_string(weight.shape()));
    }
    Tensor out = add(linear(rows, weight),
                     low_rank_term(adapter, rows, dropout_p, training ? &rng : nullptr));
    if (vector_input) {
        return Tensor({out.size()}, out.to_vector());
    }
    return out;
}

LoraSet LoraSet::inject(MicroTransformer& base, const LoraConfig& config, Rng& rng) {
    config.validate();
    std::vector<std::size_t> layers = config.target_layers;
    if (layers.empty()) {
        for (std::size_t i = 0; i < base.blocks.size(); ++i) {
            layers.push_back(i);
        }
    }
    std::sort(layers.begin(), layers.end());
    layers.erase(std::unique(layers.begin(), layers.end()), layers.end());

    LoraSet set;
    set.config_ = config;
    set.config_.target_layers = layers;
    for (const std::size_t layer : layers) {
        if (layer >= base.blocks.size()) {
            throw ConfigError("lora: target layer " + std::to_string(layer) + " outside [0, " +
                              std::to_string(base.blocks.size()) + ")");
        }
        for (const auto& name : config.target_names) {
            const Tensor* w = base.blocks[layer].projection(name);
            if (w == nullptr) {
                throw ConfigError("lora: unknown target module '" + name + "'; valid names: " +
                                  valid_names());
            }
            LoraAdapter adapter;
            const std::size_t d_out = w->rows();
            const std::size_t d_in = w->cols();
            std::vector<double> a_values(config.rank * d_in);
            for (double& v : a_values) {
                v = rng.normal(0.0, config.init_std);
            }
            adapter.a = Tensor::parameter({config.rank, d_in}, std::move(a_values));
            adapter.b = Tensor::parameter({d_out, config.rank},
                                          std::vector<double>(d_out * config.rank, 0.0));
            adapter.scaling = config.scaling();
            adapter.layer = layer;
            adapter.name = name;
            set.adapters_.push_back(std::move(adapter));
        }
    }
    base.set_requires_grad(false);
    return set;
}

std::optional<Tensor> LoraSet::delta(std::size_t layer, std::string_view name,
                                     const Tensor& input) {
    const LoraAdapter* adapter = find(layer, name);
    if (adapter == nullptr) {
        return std::nullopt;
    }
    return low_rank_term(*adapter, input, config_.dropout_p, dropout_rng_);
}

const LoraAdapter* LoraSet::find(std::size_t layer, std::string_view name) const {
    for (const auto& a : adapters_) {
        if (a.layer == layer && a.name == name) {
            return &a;
        }
    }
    return nullptr;
}

std::vector<Tensor> LoraSet::trainable_parameters() const {
    std::vector<Tensor> params;
    for (const auto& a : adapters_) {
        params.push_back(a.a);
        params.push_back(a.b);
    }
    return params;
}

std::size_t LoraSet::trainable_parameter_count() const {
    std::size_t n = 0;
    for (const auto& a : adapters_) {
        n += a.a.size() + a.b.size();
    }
    return n;
}

LoraSet LoraSet::clone() const {
    LoraSet copy;
    copy.config_ = config_;
    for (const auto& a : adapters_) {
        LoraAdapter c = a;
        c.a = a.a.clone();
        c.b = a.b.clone();
        c.a.set_requires_grad(a.a.requires_grad());
        c.b.set_requires_grad(a.b.requires_grad());
        copy.adapters_.push_back(std::move(c));
    }
    return copy;
}

void LoraSet::save(const std::filesystem::path& path) const {
    CheckpointContainer c;
    c.kind = "lora";
    std::vector<std::string> layer_text;
    for (const std::size_t l : config_.target_layers) {
        layer_text.push_back(std::to_string(l));
    }
    c.meta = {{"rank", std::to_string(config_.rank)},
              {"alpha", format_double(config_.alpha)},
              {"dropout_p", format_double(config_.dropout_p)},
              {"init_std", format_double(config_.init_std)},
              {"target_names", join(config_.target_names, ",")},
              {"target_layers", join(layer_text, ",")}};
    for (const auto& a : adapters_) {
        c.tensors.emplace_back(adapter_key(a.layer, a.name) + ".lora_A", a.a);
        c.tensors.emplace_back(adapter_key(a.layer, a.name) + ".lora_B", a.b);
    }
    write_container(c, path);
}

LoraSet LoraSet::load(const std::filesystem::path& path, const MicroTransformer& base) {
    const CheckpointContainer c = read_container(path);
    if (c.kind != "lora") {
        throw IoError("adapter checkpoint " + path.string() + ": kind is '" + c.kind +
                      "', expected 'lora'");
    }
    LoraConfig cfg;
    cfg.rank = parse_size(c.meta_value("rank"), "rank");
    cfg.alpha = parse_double(c.meta_value("alpha"), "alpha");
    cfg.dropout_p = parse_double(c.meta_value("dropout_p"), "dropout_p");
    cfg.init_std = parse_double(c.meta_value("init_std"), "init_std");
    cfg.target_names = split(c.meta_value("target_names"), ',');
    cfg.target_layers.clear();
    for (const auto& l : split(c.meta_value("target_layers"), ',')) {
        cfg.target_layers.push_back(parse_size(l, "target_layers"));
    }
    cfg.validate();

    // Shape template from the base, then overwrite A/B from the file.
    MicroTransformer shape_source = base.clone();
    Rng unused(0);
    LoraSet set = inject(shape_source, cfg, unused);
    if (c.tensors.size() != 2 * set.adapters_.size()) {
        throw IoError("adapter checkpoint " + path.string() + ": " +
                      std::to_string(c.tensors.size()) + " tensors, expected " +
                      std::to_string(2 * set.adapters_.size()));
    }
    for (auto& a : set.adapters_) {
        const auto key = adapter_key(a.layer, a.name);
        const Tensor& fa = c.tensor(key + ".lora_A");
        const Tensor& fb = c.tensor(key + ".lora_B");
        if (fa.shape() != a.a.shape()) {
            throw IoError("adapter checkpoint: '" + key + ".lora_A' has shape " +
                          shape_to_string(fa.shape()) + ", expected " +
                          shape_to_string(a.a.shape()));
        }
        if (fb.shape() != a.b.shape()) {
            throw IoError("adapter checkpoint: '" + key + ".lora_B' has shape " +
                          shape_to_string(fb.shape()) + ", expected " +
                          shape_to_string(a.b.shape()));
        }
        std::copy(fa.data().begin(), fa.data().end(), a.a.mutable_data().begin());
        std::copy(fb.data().begin(), fb.data().end(), a.b.mutable_data().begin());
    }
    return set;
}

MicroTransformer merge(const MicroTransformer& base, const LoraSet& adapters) {
    MicroTransformer merged = base.clone();
    for (const auto& a : adapters.adapters()) {
        if (a.layer >= merged.blocks.size()) {
            throw DimensionError("merge: adapter layer " + std::to_string(a.layer) +
                                 " outside model");
        }
        Tensor* w = merged.blocks[a.layer].projection(a.name);
        if (w == nullptr) {
            throw DimensionError("merge: unknown projection '" + a.name + "'");
        }
        const std::size_t d_out = w->rows();
        const std::size_t d_in = w->cols();
        const std::size_t r = a.a.rows();
        if (a.b.rows() != d_out || a.a.cols() != d_in || a.b.cols() != r) {
            throw DimensionError("merge: adapter " + adapter_key(a.layer, a.name) +
                                 " shapes do not fit " + shape_to_string(w->shape()));
        }
        std::vector<double> product(d_out * d_in, 0.0);
        kernels::gemm_nn(d_out, r, d_in, a.b.data(), a.a.data(), product);
        auto values = w->mutable_data();
        for (std::size_t i = 0; i < values.size(); ++i) {
            values[i] += a.scaling * product[i];
        }
    }
    return merged;
}

} // namespace tli
