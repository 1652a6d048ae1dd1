// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <fstream>
#include <numeric>

#include <json.hpp>

#include "tli/numcore/error.hpp"
#include "tli/numcore/ops.hpp"
#include "tli/trainer/trainer.hpp"

namespace tli {

void TliConfig::validate() const {
    if (margin < 0.0) {
        throw ConfigError("tli: margin must be >= 0");
    }
    if (batch_size == 0) {
        throw ConfigError("tli: batch_size must be >= 1");
    }
    if (epochs == 0) {
        throw ConfigError("tli: epochs must be >= 1");
    }
    if (!(lr > 0.0)) {
        throw ConfigError("tli: lr must be positive");
    }
}

std::vector<double> TrainingLog::epoch_mean_losses() const {
    std::vector<double> sums;
    std::vector<std::size_t> counts;
    for (const auto& s : steps) {
        if (s.epoch >= sums.size()) {
            sums.resize(s.epoch + 1, 0.0);
            counts.resize(s.epoch + 1, 0);
        }
        sums[s.epoch] += s.loss;
        ++counts[s.epoch];
    }
    for (std::size_t e = 0; e < sums.size(); ++e) {
        sums[e] /= static_cast<double>(std::max<std::size_t>(counts[e], 1));
    }
    return sums;
}

std::string TrainingLog::to_jsonl() const {
    std::string out;
    for (const auto& s : steps) {
        nlohmann::ordered_json j;
        j["step"] = s.step;
        j["epoch"] = s.epoch;
        j["batch_rows"] = s.batch_rows;
        j["loss"] = s.loss;
        j["lr"] = s.lr;
        j["grad_norm"] = s.grad_norm;
        nlohmann::ordered_json adapters = nlohmann::ordered_json::object();
        for (const auto& [name, norm] : s.adapter_grad_norms) {
            adapters[name] = norm;
        }
        j["adapter_grad_norms"] = adapters;
        out += j.dump();
        out += '\n';
    }
    return out;
}

void TrainingLog::save(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw IoError("cannot write training log " + path.string());
    }
    out << to_jsonl();
}

EmbeddingBatch embed_pairs(const MicroTransformer& model, std::span<const WordPair> pairs,
                           std::size_t layer, ProjectionHook* hook) {
    std::vector<Tensor> anchors;
    std::vector<Tensor> positives;
    anchors.reserve(pairs.size());
    positives.reserve(pairs.size());
    for (const auto& p : pairs) {
        anchors.push_back(embed_word(model, p.source, layer, hook));
        positives.push_back(embed_word(model, p.target, layer, hook));
    }
    return EmbeddingBatch{stack_rows(anchors), stack_rows(positives)};
}

TrainingLog train_tli(const MicroTransformer& model, LoraSet& adapters, const WordPairSet& pairs,
                      const TliConfig& config) {
    config.validate();
    if (pairs.empty()) {
        throw ContractError("train_tli: no training pairs");
    }
    if (config.target_layer > model.config.final_layer()) {
        throw ContractError("train_tli: target layer " + std::to_string(config.target_layer) +
                            " outside [0, " + std::to_string(model.config.final_layer()) + "]");
    }
    const std::size_t n = pairs.size();
    const std::size_t batches_per_epoch = (n + config.batch_size - 1) / config.batch_size;
    const std::size_t total_steps = config.epochs * batches_per_epoch;

    Rng root(config.seed);
    Rng shuffle_rng = root.fork();
    Rng dropout_rng = root.fork();

    std::vector<Tensor> params = adapters.trainable_parameters();
    AdamW optimizer(params, config.adam);
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});

    struct EvalOnExit {
        LoraSet& set;
        ~EvalOnExit() { set.eval(); }
    } restore{adapters};

    TrainingLog log;
    std::size_t step = 0;
    adapters.train(dropout_rng);
    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        shuffle_rng.shuffle(order);
        for (std::size_t start = 0; start < n; start += config.batch_size) {
            const std::size_t end = std::min(n, start + config.batch_size);
            std::vector<WordPair> batch_pairs;
            for (std::size_t i = start; i < end; ++i) {
                batch_pairs.push_back(pairs[order[i]]);
            }
            for (auto& p : params) {
                p.zero_grad();
            }

            TrainingStep record;
            record.step = step;
            record.epoch = epoch;
            record.batch_rows = batch_pairs.size();
            {
                Tape tape;
                TapeScope scope(tape);
                const EmbeddingBatch batch =
                    embed_pairs(model, batch_pairs, config.target_layer, &adapters);
                const ContrastiveLossResult result = in_batch_contrastive_loss(batch, config.margin);
                record.loss = result.loss.item();
                if (!std::isfinite(record.loss)) {
                    throw NumericError("train_tli: non-finite loss at step " +
                                       std::to_string(step));
                }
                if (result.loss.requires_grad()) {
                    backward(result.loss, tape);
                }
            }

            for (const auto& a : adapters.adapters()) {
                double sq = 0.0;
                for (const Tensor* t : {&a.a, &a.b}) {
                    for (const double g : t->grad()) {
                        sq += g * g;
                    }
                }
                record.adapter_grad_norms.emplace_back(
                    "blocks." + std::to_string(a.layer) + "." + a.name, std::sqrt(sq));
            }
            record.grad_norm = clip_grad_norm(params, config.clip_norm);
            // The first optimizer step runs at lr_at(0), i.e. zero during warmup.
            record.lr = lr_at(step, config.lr, config.warmup_steps, total_steps);
            optimizer.step(record.lr);
            log.steps.push_back(std::move(record));
            ++step;
        }
    }
    return log;
}

} // namespace tli
