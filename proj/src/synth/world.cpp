// SPDX-License-Identifier: Apache-2.0
#include "tli/synth/world.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <unordered_map>
#include <unordered_set>

#include "tli/numcore/error.hpp"
#include "tli/numcore/ops.hpp"
#include "tli/numcore/text.hpp"
#include "tli/trainer/trainer.hpp"

namespace tli {

void WorldConfig::validate() const {
    if (concepts < 20) {
        throw ConfigError("world: need at least 20 concepts, got " + std::to_string(concepts));
    }
    if (corpus_sentences == 0) {
        throw ConfigError("world: corpus_sentences must be positive");
    }
    if (sentence_len < 2) {
        throw ConfigError("world: sentence_len must be at least 2");
    }
    if (!(zipf_exponent > 0.0)) {
        throw ConfigError("world: zipf_exponent must be positive");
    }
    if (topic_size == 0 || topic_size > concepts) {
        throw ConfigError("world: topic_size must be in [1, concepts]");
    }
    if (topic_stay < 0.0 || topic_stay >= 1.0) {
        throw ConfigError("world: topic_stay must be in [0, 1)");
    }
}

std::vector<double> zipf_distribution(std::size_t n, double exponent) {
    std::vector<double> p(n);
    double z = 0.0;
    for (std::size_t r = 0; r < n; ++r) {
        p[r] = std::pow(static_cast<double>(r + 1), -exponent);
        z += p[r];
    }
    for (double& v : p) {
        v /= z;
    }
    return p;
}

namespace {

// Inverse-CDF draw over `cdf` restricted to [first, last) by rescaling.
std::size_t draw(const std::vector<double>& cdf, Rng& rng) {
    const double u = rng.uniform() * cdf.back();
    const auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
    return std::min<std::size_t>(static_cast<std::size_t>(it - cdf.begin()), cdf.size() - 1);
}

std::vector<double> cumulative(const std::vector<double>& p) {
    std::vector<double> cdf(p.size());
    std::partial_sum(p.begin(), p.end(), cdf.begin());
    return cdf;
}

// Language A: open syllables, always ends in a vowel.
std::string make_word_a(Rng& rng) {
    static constexpr std::string_view consonants = "kmtnswhlbdgpyz";
    static constexpr std::string_view vowels = "aeiou";
    const std::size_t syllables = 2 + rng.below(2);
    std::string w;
    for (std::size_t s = 0; s < syllables; ++s) {
        w.push_back(consonants[rng.below(consonants.size())]);
        w.push_back(vowels[rng.below(vowels.size())]);
    }
    return w;
}

// Language B: closed syllables, always ends in a consonant.
std::string make_word_b(Rng& rng) {
    static constexpr std::string_view onsets = "bcdfghjklmnprstvw";
    static constexpr std::string_view vowels = "aeiouy";
    static constexpr std::string_view codas = "dgklmnprstx";
    const std::size_t syllables = 1 + rng.below(2);
    std::string w;
    for (std::size_t s = 0; s < syllables; ++s) {
        w.push_back(onsets[rng.below(onsets.size())]);
        w.push_back(vowels[rng.below(vowels.size())]);
        w.push_back(codas[rng.below(codas.size())]);
    }
    return w;
}

std::vector<std::string> make_lexicon(std::size_t n, std::string (*make)(Rng&), Rng& rng) {
    std::vector<std::string> words;
    std::unordered_set<std::string> seen;
    while (words.size() < n) {
        auto w = make(rng);
        if (seen.insert(w).second) {
            words.push_back(std::move(w));
        }
    }
    return words;
}

} // namespace

SyntheticWorld generate_world(const WorldConfig& config) {
    config.validate();
    const std::size_t k = config.concepts;
    Rng root(config.seed);
    Rng lexicon_rng = root.fork();
    Rng topic_rng = root.fork();
    Rng corpus_rng = root.fork();

    SyntheticWorld world;
    world.config = config;
    world.words_a = make_lexicon(k, make_word_a, lexicon_rng);
    world.words_b = make_lexicon(k, make_word_b, lexicon_rng);
    world.zipf = zipf_distribution(k, config.zipf_exponent);

    std::vector<std::size_t> perm(k);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    topic_rng.shuffle(perm);
    world.topic_of.assign(k, 0);
    const std::size_t n_topics = (k + config.topic_size - 1) / config.topic_size;
    std::vector<std::vector<std::size_t>> members(n_topics);
    for (std::size_t i = 0; i < k; ++i) {
        world.topic_of[perm[i]] = i / config.topic_size;
    }
    for (std::size_t c = 0; c < k; ++c) {
        members[world.topic_of[c]].push_back(c);
    }
    std::vector<std::vector<double>> topic_cdf(n_topics);
    for (std::size_t t = 0; t < n_topics; ++t) {
        std::vector<double> p;
        for (const std::size_t c : members[t]) {
            p.push_back(world.zipf[c]);
        }
        topic_cdf[t] = cumulative(p);
    }
    const auto global_cdf = cumulative(world.zipf);

    // Within-topic moves are reversible w.r.t. the Zipf law, so mixing them
    // with independent Zipf draws keeps every position Zipf-distributed.
    for (std::size_t s = 0; s < config.corpus_sentences; ++s) {
        const int language = corpus_rng.uniform() < 0.5 ? 0 : 1;
        std::vector<std::size_t> concepts;
        std::size_t c = draw(global_cdf, corpus_rng);
        concepts.push_back(c);
        while (concepts.size() < config.sentence_len) {
            if (corpus_rng.uniform() < config.topic_stay) {
                const std::size_t t = world.topic_of[c];
                c = members[t][draw(topic_cdf[t], corpus_rng)];
            } else {
                c = draw(global_cdf, corpus_rng);
            }
            concepts.push_back(c);
        }
        std::vector<std::string> sentence;
        for (const std::size_t id : concepts) {
            sentence.push_back(language == 0 ? world.words_a[id] : world.words_b[id]);
        }
        world.corpus.push_back(std::move(sentence));
        world.sentence_language.push_back(language);
        world.sentence_concepts.push_back(std::move(concepts));
    }
    return world;
}

SyntheticWorld generate_world(std::size_t concepts, std::size_t corpus_sentences,
                              std::size_t sentence_len, std::uint64_t seed) {
    WorldConfig config;
    config.concepts = concepts;
    config.corpus_sentences = corpus_sentences;
    config.sentence_len = sentence_len;
    config.seed = seed;
    return generate_world(config);
}

Vocabulary SyntheticWorld::vocabulary() const {
    std::vector<std::string> tokens{std::string(kUnknownToken)};
    tokens.insert(tokens.end(), words_a.begin(), words_a.end());
    tokens.insert(tokens.end(), words_b.begin(), words_b.end());
    return Vocabulary(std::move(tokens));
}

std::vector<WordPair> SyntheticWorld::lexicon_pairs() const {
    std::vector<WordPair> pairs;
    for (std::size_t c = 0; c < words_a.size(); ++c) {
        pairs.push_back(WordPair{words_a[c], words_b[c], Split::trained});
    }
    return pairs;
}

void SyntheticWorld::save(const std::filesystem::path& lexicon_path,
                          const std::filesystem::path& corpus_path) const {
    std::ofstream lex(lexicon_path, std::ios::binary);
    if (!lex) {
        throw IoError("cannot write lexicon file " + lexicon_path.string());
    }
    lex << "concept,probability,topic,word_a,word_b\n";
    for (std::size_t c = 0; c < words_a.size(); ++c) {
        lex << c << ',' << format_double(zipf[c]) << ',' << topic_of[c] << ',' << words_a[c]
            << ',' << words_b[c] << '\n';
    }
    std::ofstream corp(corpus_path, std::ios::binary);
    if (!corp) {
        throw IoError("cannot write corpus file " + corpus_path.string());
    }
    for (const auto& sentence : corpus) {
        corp << join(sentence, " ") << '\n';
    }
    if (!lex || !corp) {
        throw IoError("failed writing world files");
    }
}

SyntheticWorld load_world(const std::filesystem::path& lexicon_path,
                          const std::filesystem::path& corpus_path) {
    std::ifstream lex(lexicon_path, std::ios::binary);
    if (!lex) {
        throw IoError("cannot read lexicon file " + lexicon_path.string());
    }
    SyntheticWorld world;
    std::string line;
    std::size_t line_no = 0;
    if (!std::getline(lex, line) || trim(line) != "concept,probability,topic,word_a,word_b") {
        throw ParseError(lexicon_path.string() + ":1: expected lexicon header");
    }
    ++line_no;
    while (std::getline(lex, line)) {
        ++line_no;
        if (trim(line).empty()) {
            continue;
        }
        const auto fields = split(trim(line), ',');
        const std::string where = lexicon_path.string() + ":" + std::to_string(line_no) + ": ";
        if (fields.size() != 5) {
            throw ParseError(where + "expected 5 fields, got " + std::to_string(fields.size()));
        }
        if (parse_size(fields[0], "concept") != world.words_a.size()) {
            throw ParseError(where + "concept ids must be 0, 1, 2, ... in order");
        }
        world.zipf.push_back(parse_double(fields[1], "probability"));
        world.topic_of.push_back(parse_size(fields[2], "topic"));
        world.words_a.push_back(fields[3]);
        world.words_b.push_back(fields[4]);
    }
    std::unordered_map<std::string, std::pair<int, std::size_t>> lookup;
    for (std::size_t c = 0; c < world.words_a.size(); ++c) {
        lookup[world.words_a[c]] = {0, c};
        lookup[world.words_b[c]] = {1, c};
    }
    if (lookup.size() != 2 * world.words_a.size()) {
        throw ParseError(lexicon_path.string() + ": lexicon words are not all distinct");
    }

    std::ifstream corp(corpus_path, std::ios::binary);
    if (!corp) {
        throw IoError("cannot read corpus file " + corpus_path.string());
    }
    line_no = 0;
    std::size_t longest = 0;
    while (std::getline(corp, line)) {
        ++line_no;
        const auto words = split_words(line);
        if (words.empty()) {
            continue;
        }
        const std::string where = corpus_path.string() + ":" + std::to_string(line_no) + ": ";
        std::vector<std::size_t> concepts;
        int language = -1;
        for (const auto& w : words) {
            const auto it = lookup.find(w);
            if (it == lookup.end()) {
                throw ParseError(where + "word '" + w + "' is not in the lexicon");
            }
            if (language >= 0 && it->second.first != language) {
                throw ParseError(where + "sentence mixes languages");
            }
            language = it->second.first;
            concepts.push_back(it->second.second);
        }
        longest = std::max(longest, words.size());
        world.corpus.push_back(words);
        world.sentence_language.push_back(language);
        world.sentence_concepts.push_back(std::move(concepts));
    }
    world.config.concepts = world.words_a.size();
    world.config.corpus_sentences = world.corpus.size();
    world.config.sentence_len = longest;
    return world;
}

PretrainResult pretrain_toy(const MicroTransformer& model, const SyntheticWorld& world,
                            const PretrainConfig& config) {
    PretrainResult result{model.clone(), {}};
    if (config.steps == 0) {
        return result;
    }
    MicroTransformer& m = result.model;
    const Vocabulary& vocab = m.vocab;
    std::vector<std::vector<std::size_t>> sentences;
    sentences.reserve(world.corpus.size());
    for (const auto& sentence : world.corpus) {
        std::vector<std::size_t> ids;
        for (const auto& w : sentence) {
            if (!vocab.contains(w)) {
                throw ContractError("pretrain: corpus word '" + w + "' missing from vocabulary");
            }
            ids.push_back(vocab.id_of(w));
        }
        if (ids.size() > m.config.max_seq + 1) {
            ids.resize(m.config.max_seq + 1);
        }
        sentences.push_back(std::move(ids));
    }

    m.set_requires_grad(true);
    std::vector<Tensor> params;
    for (auto& [name, t] : m.named_parameters()) {
        params.push_back(t);
    }
    AdamWConfig adam;
    adam.weight_decay = config.weight_decay;
    AdamW optimizer(params, adam);
    Rng rng(config.seed);
    const std::size_t warmup = std::min(config.warmup_steps, config.steps - 1);

    for (std::size_t step = 0; step < config.steps; ++step) {
        for (auto& p : params) {
            p.zero_grad();
        }
        Tape tape;
        TapeScope scope(tape);
        std::vector<Tensor> losses;
        for (std::size_t b = 0; b < config.batch_sentences; ++b) {
            const auto& ids = sentences[rng.below(sentences.size())];
            const std::span<const std::size_t> inputs(ids.data(), ids.size() - 1);
            const std::span<const std::size_t> targets(ids.data() + 1, ids.size() - 1);
            const std::vector<int> mask(inputs.size(), 1);
            const HiddenStates states = forward_with_hidden_states(m, inputs, mask);
            losses.push_back(cross_entropy(output_logits(m, states), targets));
        }
        Tensor total = losses.front();
        for (std::size_t i = 1; i < losses.size(); ++i) {
            total = add(total, losses[i]);
        }
        const Tensor loss = scale(total, 1.0 / static_cast<double>(losses.size()));
        const double value = loss.item();
        if (!std::isfinite(value)) {
            throw NumericError("pretrain: non-finite loss at step " + std::to_string(step));
        }
        backward(loss, tape);
        clip_grad_norm(params, config.clip_norm);
        // Offset by one so the first update is not a zero-lr step.
        optimizer.step(lr_at(std::min(step + 1, config.steps), config.lr, warmup, config.steps));
        result.losses.push_back(value);
    }
    m.set_requires_grad(false);
    for (auto& p : params) {
        p.clear_grad();
    }
    return result;
}

} // namespace tli
