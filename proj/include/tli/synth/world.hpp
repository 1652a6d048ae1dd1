// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "tli/model/transformer.hpp"
#include "tli/model/vocabulary.hpp"
#include "tli/synth/pairs.hpp"

namespace tli {

struct WorldConfig {
    std::size_t concepts = 200;
    std::size_t corpus_sentences = 20000;
    std::size_t sentence_len = 12;
    double zipf_exponent = 1.1;
    /// Concepts are grouped into topics of this size.
    std::size_t topic_size = 4;
    /// Probability that the next concept is drawn from the current topic.
    double topic_stay = 0.7;
    std::uint64_t seed = 42;

    void validate() const;
};

/// Two languages over one concept inventory. Concept ids are frequency
/// ranks (0 = most frequent). Each sentence is written entirely in one
/// language; concept sequences follow the same topic Markov chain in both,
/// whose stationary distribution is exactly the Zipf law.
struct SyntheticWorld {
    WorldConfig config;
    std::vector<std::string> words_a;
    std::vector<std::string> words_b;
    std::vector<std::size_t> topic_of;
    std::vector<double> zipf;
    std::vector<std::vector<std::string>> corpus;
    /// 0 = language A, 1 = language B, per sentence.
    std::vector<int> sentence_language;
    /// Concept ids behind each corpus sentence.
    std::vector<std::vector<std::size_t>> sentence_concepts;

    std::size_t concept_count() const noexcept { return words_a.size(); }
    /// Unknown token then A words then B words.
    Vocabulary vocabulary() const;
    /// (A word, B word) per concept, all tagged trained.
    std::vector<WordPair> lexicon_pairs() const;

    /// lexicon.csv (concept,probability,topic,word_a,word_b) and
    /// corpus.txt (one sentence of space-separated tokens per line).
    void save(const std::filesystem::path& lexicon_path,
              const std::filesystem::path& corpus_path) const;
};

SyntheticWorld generate_world(const WorldConfig& config);

/// Reads the two files written by SyntheticWorld::save. Generation-only
/// settings (exponent, topic parameters, seed) keep their defaults.
SyntheticWorld load_world(const std::filesystem::path& lexicon_path,
                          const std::filesystem::path& corpus_path);

/// Convenience overload with default topic structure.
SyntheticWorld generate_world(std::size_t concepts, std::size_t corpus_sentences,
                              std::size_t sentence_len, std::uint64_t seed);

/// Zipf probabilities p(r) proportional to (r + 1)^-exponent, r in [0, n).
std::vector<double> zipf_distribution(std::size_t n, double exponent);

/// Defaults stop early enough that the inner layers still share more
/// structure across languages than the embeddings or the output layer.
struct PretrainConfig {
    std::size_t steps = 2000;
    double lr = 2.5e-4;
    std::size_t warmup_steps = 100;
    std::size_t batch_sentences = 8;
    double weight_decay = 0.0;
    double clip_norm = 1.0;
    std::uint64_t seed = 42;
};

struct PretrainResult {
    MicroTransformer model;
    /// Mean next-token cross-entropy per step.
    std::vector<double> losses;
};

/// Next-token cross-entropy training of every model parameter with AdamW on
/// randomly drawn corpus sentences. Returns an independent model; the input
/// is not modified. Zero steps returns an exact copy.
PretrainResult pretrain_toy(const MicroTransformer& model, const SyntheticWorld& world,
                            const PretrainConfig& config);

} // namespace tli
