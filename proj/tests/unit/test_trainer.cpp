// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <json.hpp>

#include "support.hpp"
#include "tli/numcore/error.hpp"
#include "tli/numcore/grad_check.hpp"
#include "tli/numcore/ops.hpp"
#include "tli/synth/world.hpp"
#include "tli/trainer/trainer.hpp"

using namespace tli;
using tli_test::max_abs_diff;
using tli_test::random_vector;
using tli_test::TempDir;

namespace {

/// Unit rows whose similarity matrix is exactly `s` (rows of s need norm < 1):
/// positive j is the basis vector e_j, anchor i is (s[i], sqrt(1 - |s[i]|^2)).
EmbeddingBatch batch_from_similarities(const std::vector<std::vector<double>>& s) {
    const std::size_t b = s.size();
    const std::size_t d = b + 1;
    std::vector<double> anchors(b * d, 0.0);
    std::vector<double> positives(b * d, 0.0);
    for (std::size_t i = 0; i < b; ++i) {
        double sq = 0.0;
        for (std::size_t j = 0; j < b; ++j) {
            anchors[i * d + j] = s[i][j];
            sq += s[i][j] * s[i][j];
        }
        anchors[i * d + b] = std::sqrt(1.0 - sq);
        positives[i * d + i] = 1.0;
    }
    return {Tensor::matrix(b, d, anchors), Tensor::matrix(b, d, positives)};
}

Tensor unit_rows(std::size_t rows, std::size_t d, Rng& rng) {
    std::vector<Tensor> out;
    for (std::size_t i = 0; i < rows; ++i) {
        out.push_back(l2_normalize(random_vector(d, rng)));
    }
    return stack_rows(out);
}

/// Positives near their anchors so some batches satisfy the margin.
EmbeddingBatch random_batch(std::size_t b, std::size_t d, Rng& rng, double noise) {
    std::vector<Tensor> anchors;
    std::vector<Tensor> positives;
    for (std::size_t i = 0; i < b; ++i) {
        const Tensor a = random_vector(d, rng);
        const Tensor n = random_vector(d, rng, noise);
        anchors.push_back(l2_normalize(a));
        positives.push_back(l2_normalize(add(a, n)));
    }
    return {stack_rows(anchors), stack_rows(positives)};
}

/// Loop oracle: hardest negative is the largest off-diagonal similarity.
double naive_loss(const EmbeddingBatch& batch, double margin) {
    const std::size_t b = batch.anchors.rows();
    const std::size_t d = batch.anchors.cols();
    auto sim = [&](std::size_t i, std::size_t j) {
        double acc = 0.0;
        for (std::size_t k = 0; k < d; ++k) {
            acc += batch.anchors.at(i, k) * batch.positives.at(j, k);
        }
        return acc;
    };
    double total = 0.0;
    for (std::size_t i = 0; i < b; ++i) {
        double hardest = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < b; ++j) {
            if (j != i) {
                hardest = std::max(hardest, sim(i, j));
            }
        }
        if (b > 1) {
            total += std::max(0.0, margin + hardest - sim(i, i));
        }
    }
    return total / static_cast<double>(b);
}

bool margin_condition_holds(const EmbeddingBatch& batch, double margin) {
    const Tensor s = linear(batch.anchors, batch.positives);
    const std::size_t b = s.rows();
    for (std::size_t i = 0; i < b; ++i) {
        for (std::size_t j = 0; j < b; ++j) {
            if (j != i && s.at(i, i) < margin + s.at(i, j)) {
                return false;
            }
        }
    }
    return true;
}

Tensor permute_rows(const Tensor& m, const std::vector<std::size_t>& perm) {
    std::vector<Tensor> rows;
    for (const auto p : perm) {
        const auto r = m.row(p);
        rows.push_back(Tensor::vector({r.begin(), r.end()}));
    }
    return stack_rows(rows);
}

std::vector<double> flatten(const std::vector<Tensor>& tensors) {
    std::vector<double> out;
    for (const auto& t : tensors) {
        out.insert(out.end(), t.data().begin(), t.data().end());
    }
    return out;
}

std::vector<double> flatten_model(const MicroTransformer& m) {
    std::vector<Tensor> ts;
    for (const auto& [name, t] : m.named_parameters()) {
        ts.push_back(t);
    }
    return flatten(ts);
}

LoraConfig quiet_lora() {
    LoraConfig c;
    c.rank = 4;
    c.alpha = 8.0;
    c.dropout_p = 0.0;
    return c;
}

} // namespace

// ------------------------------------------------------------------ loss

TEST_CASE("loss examples from hand-built similarity matrices") {
    SUBCASE("margin satisfied everywhere gives zero") {
        const auto batch = batch_from_similarities({{0.9, 0.2}, {0.1, 0.8}});
        const auto r = in_batch_contrastive_loss(batch, 0.4);
        CHECK(std::abs(r.loss.item()) < 1e-12);
        CHECK(r.negatives == std::vector<std::size_t>{1, 0});
    }
    SUBCASE("both rows violate the margin") {
        const auto batch = batch_from_similarities({{0.5, 0.4}, {0.3, 0.45}});
        const auto r = in_batch_contrastive_loss(batch, 0.4);
        // rows: 0.4 + 0.4 - 0.5 = 0.3 and 0.4 + 0.3 - 0.45 = 0.25
        CHECK(r.row_losses[0] == doctest::Approx(0.3).epsilon(1e-12));
        CHECK(r.row_losses[1] == doctest::Approx(0.25).epsilon(1e-12));
        CHECK(std::abs(r.loss.item() - 0.275) < 1e-12);
    }
}

TEST_CASE("loss matches the loop oracle for several batch sizes") {
    Rng rng(11);
    for (const std::size_t b : {1u, 2u, 8u, 17u}) {
        for (int trial = 0; trial < 20; ++trial) {
            const auto batch = random_batch(b, 6, rng, 0.6);
            for (const double margin : {0.0, 0.2, 0.4, 1.0}) {
                const double got = in_batch_contrastive_loss(batch, margin).loss.item();
                CHECK(std::abs(got - naive_loss(batch, margin)) < 1e-12);
            }
        }
    }
}

TEST_CASE("a batch of one has no negatives and zero loss") {
    Rng rng(3);
    const EmbeddingBatch batch{unit_rows(1, 5, rng), unit_rows(1, 5, rng)};
    const auto r = in_batch_contrastive_loss(batch, 0.4);
    CHECK(r.loss.item() == 0.0);
    CHECK(r.negatives == std::vector<std::size_t>{0});
}

TEST_CASE("hardest negative ties resolve to the first index") {
    const auto batch = batch_from_similarities({{0.5, 0.3, 0.3}, {0.2, 0.6, 0.2}, {0.1, 0.1, 0.7}});
    const auto r = in_batch_contrastive_loss(batch, 0.4);
    CHECK(r.negatives == std::vector<std::size_t>{1, 0, 0});
}

TEST_CASE("loss is invariant to a joint row permutation") {
    Rng rng(5);
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t b = 2 + rng.below(10);
        const auto batch = random_batch(b, 7, rng, 0.8);
        std::vector<std::size_t> perm(b);
        std::iota(perm.begin(), perm.end(), std::size_t{0});
        rng.shuffle(perm);
        const EmbeddingBatch permuted{permute_rows(batch.anchors, perm),
                                      permute_rows(batch.positives, perm)};
        CHECK(std::abs(in_batch_contrastive_loss(batch, 0.4).loss.item() -
                       in_batch_contrastive_loss(permuted, 0.4).loss.item()) < 1e-12);
    }
}

TEST_CASE("loss is zero exactly when every row clears the margin") {
    Rng rng(9);
    int zero = 0;
    int positive = 0;
    for (int trial = 0; trial < 300; ++trial) {
        const auto batch = random_batch(2 + rng.below(5), 12, rng, 0.1 + rng.uniform());
        const double margin = 0.3 * rng.uniform();
        const double loss = in_batch_contrastive_loss(batch, margin).loss.item();
        CHECK(loss >= 0.0);
        CHECK((loss == 0.0) == margin_condition_holds(batch, margin));
        (loss == 0.0 ? zero : positive)++;
    }
    // Both branches must actually be exercised.
    CHECK(zero > 10);
    CHECK(positive > 10);
}

TEST_CASE("loss rejects non-unit rows, shape mismatch and negative margin") {
    Rng rng(1);
    const Tensor good = unit_rows(3, 4, rng);
    std::vector<double> v(good.data().begin(), good.data().end());
    v[0] *= 1.01;
    const Tensor bad = Tensor::matrix(3, 4, v);
    CHECK_THROWS_AS(in_batch_contrastive_loss({bad, good}, 0.4), ContractError);
    CHECK_THROWS_AS(in_batch_contrastive_loss({good, bad}, 0.4), ContractError);
    CHECK_THROWS_AS(in_batch_contrastive_loss({good, unit_rows(2, 4, rng)}, 0.4),
                    DimensionError);
    CHECK_THROWS_AS(in_batch_contrastive_loss({good, good}, -0.1), ContractError);
}

TEST_CASE("loss gradient through row normalization matches finite differences") {
    Rng rng(21);
    for (int trial = 0; trial < 5; ++trial) {
        const std::size_t b = 3 + static_cast<std::size_t>(trial);
        std::vector<Tensor> raw;
        for (std::size_t i = 0; i < 2 * b; ++i) {
            raw.push_back(Tensor::parameter({5}, random_vector(5, rng).to_vector()));
        }
        auto f = [&]() {
            std::vector<Tensor> a;
            std::vector<Tensor> p;
            for (std::size_t i = 0; i < b; ++i) {
                a.push_back(l2_normalize(raw[i]));
                p.push_back(l2_normalize(raw[b + i]));
            }
            // A large margin keeps every row on the linear side of the hinge.
            return in_batch_contrastive_loss({stack_rows(a), stack_rows(p)}, 3.0).loss;
        };
        const auto r = grad_check(f, raw);
        CHECK(r.max_relative <= 1e-6);
    }
}

// ------------------------------------------------------------- optimizer

TEST_CASE("adamw with zero gradient and no decay leaves parameters unchanged") {
    Tensor p = Tensor::parameter({3}, {1.0, -2.0, 0.5});
    p.zero_grad();
    AdamWConfig cfg;
    cfg.weight_decay = 0.0;
    AdamW opt({p}, cfg);
    for (int i = 0; i < 10; ++i) {
        opt.step(0.1);
    }
    CHECK(p.to_vector() == std::vector<double>{1.0, -2.0, 0.5});
    CHECK(opt.step_count() == 10);
}

TEST_CASE("adamw single step hand value") {
    Tensor p = Tensor::parameter({1}, {1.0});
    p.grad_buffer()[0] = 0.1;
    AdamW opt({p}, AdamWConfig{0.9, 0.999, 1e-8, 0.01});
    opt.step(0.01);
    // m_hat = 0.1, v_hat = 0.01: 1 - 0.01 * (0.1 / (0.1 + 1e-8) + 0.01 * 1)
    const double expected = 1.0 - 0.01 * (0.1 / (0.1 + 1e-8) + 0.01);
    CHECK(std::abs(p[0] - expected) < 1e-15);
    CHECK(p[0] == doctest::Approx(0.98990).epsilon(1e-6));
    CHECK(std::abs(opt.first_moments()[0][0] - 0.01) < 1e-15);
    CHECK(std::abs(opt.second_moments()[0][0] - 1e-5) < 1e-18);
}

TEST_CASE("adamw weight decay alone shrinks parameters geometrically") {
    Tensor p = Tensor::parameter({2}, {2.0, -4.0});
    AdamW opt({p}, AdamWConfig{0.9, 0.999, 1e-8, 0.1});
    for (int i = 0; i < 5; ++i) {
        p.zero_grad();
        opt.step(0.5);
    }
    const double factor = std::pow(1.0 - 0.5 * 0.1, 5);
    CHECK(std::abs(p[0] - 2.0 * factor) < 1e-12);
    CHECK(std::abs(p[1] + 4.0 * factor) < 1e-12);
}

TEST_CASE("adamw minimizes a quadratic bowl") {
    Tensor p = Tensor::parameter({1}, {1.0});
    AdamWConfig cfg;
    cfg.weight_decay = 0.0;
    AdamW opt({p}, cfg);
    for (int i = 0; i < 100; ++i) {
        p.zero_grad();
        p.grad_buffer()[0] = 2.0 * p[0]; // d/dθ θ²
        opt.step(0.05);
    }
    CHECK(std::abs(p[0]) < 1e-2);
}

TEST_CASE("adamw refuses non-finite gradients without touching parameters") {
    Tensor p = Tensor::parameter({2}, {1.0, 2.0});
    Tensor q = Tensor::parameter({1}, {3.0});
    p.grad_buffer()[0] = 0.5;
    q.grad_buffer()[0] = std::numeric_limits<double>::quiet_NaN();
    AdamW opt({p, q});
    CHECK_THROWS_AS(opt.step(0.1), NumericError);
    CHECK(p.to_vector() == std::vector<double>{1.0, 2.0});
    CHECK(q[0] == 3.0);
    CHECK(opt.step_count() == 0);
    CHECK(opt.first_moments()[0][0] == 0.0);
    q.grad_buffer()[0] = std::numeric_limits<double>::infinity();
    CHECK_THROWS_AS(opt.step(0.1), NumericError);
}

TEST_CASE("learning-rate schedule") {
    CHECK(lr_at(0, 2e-4, 50, 100) == 0.0);
    CHECK(lr_at(25, 2e-4, 50, 100) == doctest::Approx(1e-4));
    CHECK(lr_at(50, 2e-4, 50, 100) == doctest::Approx(2e-4));
    CHECK(lr_at(75, 2e-4, 50, 100) == doctest::Approx(1e-4));
    CHECK(lr_at(100, 2e-4, 50, 100) == 0.0);
    CHECK(lr_at(0, 1.0, 0, 10) == 1.0);
    CHECK_THROWS_AS(lr_at(0, 1.0, 10, 10), ConfigError);
    CHECK_THROWS_AS(lr_at(0, 1.0, 20, 10), ConfigError);
    CHECK_THROWS_AS(lr_at(11, 1.0, 0, 10), ContractError);
    // Peak at the end of warmup, non-negative throughout.
    double peak = 0.0;
    for (std::size_t s = 0; s <= 100; ++s) {
        const double lr = lr_at(s, 1.0, 50, 100);
        CHECK(lr >= 0.0);
        peak = std::max(peak, lr);
    }
    CHECK(peak == 1.0);
}

TEST_CASE("clip_grad_norm scales only when above the limit") {
    Tensor a = Tensor::parameter({2}, {0.0, 0.0});
    Tensor b = Tensor::parameter({1}, {0.0});
    a.grad_buffer()[0] = 3.0;
    a.grad_buffer()[1] = 0.0;
    b.grad_buffer()[0] = 4.0;
    std::vector<Tensor> ps{a, b};
    CHECK(clip_grad_norm(ps, 10.0) == doctest::Approx(5.0));
    CHECK(b.grad()[0] == 4.0);
    CHECK(clip_grad_norm(ps, 1.0) == doctest::Approx(5.0));
    CHECK(a.grad()[0] == doctest::Approx(0.6));
    CHECK(b.grad()[0] == doctest::Approx(0.8));
    CHECK(clip_grad_norm(ps, 0.0) == doctest::Approx(1.0));
    CHECK(b.grad()[0] == doctest::Approx(0.8));
}

// -------------------------------------------------------------- training

TEST_CASE("tli config defaults and validation") {
    const TliConfig c;
    CHECK(c.target_layer == 2);
    CHECK(c.margin == 0.4);
    CHECK(c.lr == 2e-4);
    CHECK(c.epochs == 5);
    CHECK(c.batch_size == 8);
    CHECK(c.warmup_steps == 50);
    CHECK(c.adam.weight_decay == 0.01);
    CHECK_NOTHROW(c.validate());
    TliConfig bad = c;
    bad.batch_size = 0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = c;
    bad.margin = -1.0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = c;
    bad.lr = 0.0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("embed_pairs stacks unit-norm word embeddings") {
    const auto model = tli_test::small_model(4);
    const auto pairs = tli_test::word_pairs(3);
    const auto batch = embed_pairs(model, pairs, 2, nullptr);
    REQUIRE(batch.anchors.rows() == 3);
    for (std::size_t i = 0; i < 3; ++i) {
        const auto expected = embed_word(model, pairs[i].target, 2);
        CHECK(max_abs_diff(batch.positives.row(i), expected.data()) < 1e-15);
        CHECK(kernels::norm2(batch.anchors.row(i)) == doctest::Approx(1.0));
    }
}

TEST_CASE("pre-aligned pairs with zero margin are a fixed point") {
    auto model = tli_test::small_model(8);
    Rng rng(2);
    auto adapters = LoraSet::inject(model, quiet_lora(), rng);
    tli_test::randomize_b(adapters, rng, 0.1);
    const auto before = flatten(adapters.trainable_parameters());
    // Source and target tokenize identically, so S[i][i] = 1 >= S[i][j].
    std::vector<WordPair> pairs;
    for (int i = 0; i < 10; ++i) {
        pairs.push_back({"w" + std::to_string(i), "W" + std::to_string(i), Split::trained});
    }
    TliConfig cfg;
    cfg.margin = 0.0;
    cfg.epochs = 3;
    cfg.batch_size = 4;
    cfg.warmup_steps = 2;
    cfg.lr = 1e-2;
    cfg.adam.weight_decay = 0.0;
    const auto log = train_tli(model, adapters, WordPairSet(pairs), cfg);
    REQUIRE(log.steps.size() == 9);
    for (const auto& s : log.steps) {
        CHECK(s.loss == 0.0);
        CHECK(s.grad_norm == 0.0);
    }
    CHECK(flatten(adapters.trainable_parameters()) == before);
}

TEST_CASE("training updates only the adapters and is deterministic") {
    auto model = tli_test::small_model(12, 40);
    const auto base_before = flatten_model(model);
    const WordPairSet pairs(tli_test::word_pairs(12));
    TliConfig cfg;
    cfg.epochs = 3;
    cfg.batch_size = 5;
    cfg.warmup_steps = 2;
    cfg.lr = 5e-3;
    cfg.target_layer = 3;

    LoraConfig lc;
    lc.rank = 4;
    lc.alpha = 8.0;
    TempDir dir;
    std::vector<double> first;
    for (int run = 0; run < 2; ++run) {
        Rng rng(99);
        auto adapters = LoraSet::inject(model, lc, rng);
        const auto init = flatten(adapters.trainable_parameters());
        const auto log = train_tli(model, adapters, pairs, cfg);
        CHECK_FALSE(adapters.training());
        // 12 pairs in batches of 5: 5, 5, 2 per epoch.
        REQUIRE(log.steps.size() == 9);
        CHECK(log.steps[2].batch_rows == 2);
        CHECK(log.steps[0].lr == 0.0);
        CHECK(log.steps[3].epoch == 1);
        CHECK(flatten(adapters.trainable_parameters()) != init);
        adapters.save(dir / ("a" + std::to_string(run) + ".ckpt"));
    }
    CHECK(tli_test::read_file(dir / "a0.ckpt") == tli_test::read_file(dir / "a1.ckpt"));
    CHECK(flatten_model(model) == base_before);
}

TEST_CASE("adapters above the target layer receive no gradient") {
    auto model = tli_test::small_model(13, 40);
    LoraConfig lc = quiet_lora();
    Rng rng(4);
    auto adapters = LoraSet::inject(model, lc, rng);
    TliConfig cfg;
    cfg.target_layer = 2; // hidden state after block index 1
    cfg.epochs = 2;
    cfg.batch_size = 4;
    cfg.warmup_steps = 1;
    cfg.lr = 1e-2;
    // Two-token expressions so q_proj also sees a gradient.
    std::vector<WordPair> pairs;
    for (int i = 0; i < 8; ++i) {
        pairs.push_back({"w" + std::to_string(i) + " w" + std::to_string(i + 8),
                         "w" + std::to_string(i + 16) + " w" + std::to_string(i + 24),
                         Split::trained});
    }
    const auto log = train_tli(model, adapters, WordPairSet(pairs), cfg);
    for (const auto& a : adapters.adapters()) {
        const bool dead = a.layer >= 2;
        const auto b = a.b.data();
        const bool all_zero = std::all_of(b.begin(), b.end(), [](double v) { return v == 0.0; });
        CHECK(all_zero == dead);
    }
    for (const auto& s : log.steps) {
        for (const auto& [name, norm] : s.adapter_grad_norms) {
            if (name.rfind("blocks.2.", 0) == 0) {
                CHECK(norm == 0.0);
            }
        }
    }
}

TEST_CASE("training log serializes one JSON object per step") {
    auto model = tli_test::small_model(14, 40);
    Rng rng(5);
    auto adapters = LoraSet::inject(model, quiet_lora(), rng);
    TliConfig cfg;
    cfg.epochs = 2;
    cfg.batch_size = 3;
    cfg.warmup_steps = 1;
    const auto log = train_tli(model, adapters, WordPairSet(tli_test::word_pairs(6)), cfg);
    const auto text = log.to_jsonl();
    CHECK(tli_test::count_occurrences(text, "\n") == log.steps.size());
    std::size_t start = 0;
    for (const auto& s : log.steps) {
        const auto end = text.find('\n', start);
        const auto j = nlohmann::json::parse(text.substr(start, end - start));
        start = end + 1;
        CHECK(j.at("step").get<std::size_t>() == s.step);
        CHECK(j.at("epoch").get<std::size_t>() == s.epoch);
        CHECK(j.at("loss").get<double>() == s.loss);
        CHECK(j.at("lr").get<double>() == s.lr);
        CHECK(j.at("adapter_grad_norms").size() == adapters.adapters().size());
        CHECK(j.at("adapter_grad_norms").contains("blocks.0.q_proj"));
    }
    const auto means = log.epoch_mean_losses();
    REQUIRE(means.size() == 2);
    CHECK(means[0] == doctest::Approx((log.steps[0].loss + log.steps[1].loss) / 2.0));
    TempDir dir;
    log.save(dir / "log.jsonl");
    CHECK(tli_test::read_file(dir / "log.jsonl") == text);
}

TEST_CASE("train_tli rejects empty pairs and out-of-range layers") {
    auto model = tli_test::small_model(15);
    Rng rng(6);
    auto adapters = LoraSet::inject(model, quiet_lora(), rng);
    TliConfig cfg;
    CHECK_THROWS_AS(train_tli(model, adapters, WordPairSet{}, cfg), ContractError);
    cfg.target_layer = model.config.final_layer() + 1;
    CHECK_THROWS_AS(train_tli(model, adapters, WordPairSet(tli_test::word_pairs(2)), cfg),
                    ContractError);
}

TEST_CASE("training on a pretrained synthetic model lowers the epoch loss") {
    WorldConfig wc;
    wc.concepts = 60;
    wc.corpus_sentences = 3000;
    const auto world = generate_world(wc);
    TransformerConfig mc;
    mc.vocab_size = world.vocabulary().size();
    mc.d_model = 32;
    mc.n_layers = 3;
    mc.n_heads = 4;
    mc.d_ff = 64;
    Rng init(42);
    const auto random = MicroTransformer::random(mc, world.vocabulary(), init);
    PretrainConfig pc;
    pc.steps = 400;
    pc.lr = 1e-3;
    pc.warmup_steps = 20;
    auto model = pretrain_toy(random, world, pc).model;

    Rng rng(42);
    auto adapters = LoraSet::inject(model, LoraConfig{}, rng);
    TliConfig cfg;
    cfg.lr = 1e-3;
    cfg.epochs = 10;
    cfg.warmup_steps = 10;
    const auto log = train_tli(model, adapters, WordPairSet(world.lexicon_pairs()), cfg);
    const auto means = log.epoch_mean_losses();
    MESSAGE("first epoch " << means.front() << ", last epoch " << means.back());
    CHECK(means.back() < means.front());
}
