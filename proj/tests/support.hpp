// SPDX-License-Identifier: Apache-2.0
// Shared fixtures for the unit and acceptance binaries.
#pragma once

#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "tli/lora/lora.hpp"
#include "tli/model/transformer.hpp"
#include "tli/numcore/rng.hpp"
#include "tli/numcore/tensor.hpp"
#include "tli/synth/pairs.hpp"

namespace tli_test {

/// Scratch directory removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag = "tli") {
        static std::atomic<int> counter{0};
        path_ = std::filesystem::temp_directory_path() /
                (tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const noexcept { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

inline std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

inline void write_file(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    out << text;
}

inline std::size_t count_occurrences(const std::string& text, const std::string& needle) {
    std::size_t n = 0;
    for (auto pos = text.find(needle); pos != std::string::npos;
         pos = text.find(needle, pos + needle.size())) {
        ++n;
    }
    return n;
}

inline tli::Tensor random_matrix(std::size_t rows, std::size_t cols, tli::Rng& rng,
                                 double stddev = 1.0) {
    std::vector<double> v(rows * cols);
    for (auto& x : v) {
        x = rng.normal(0.0, stddev);
    }
    return tli::Tensor::matrix(rows, cols, std::move(v));
}

inline tli::Tensor random_vector(std::size_t n, tli::Rng& rng, double stddev = 1.0) {
    std::vector<double> v(n);
    for (auto& x : v) {
        x = rng.normal(0.0, stddev);
    }
    return tli::Tensor::vector(std::move(v));
}

/// "<unk>" followed by "w0" .. "w{n-1}".
inline tli::Vocabulary word_vocab(std::size_t n) {
    std::vector<std::string> tokens{std::string(tli::kUnknownToken)};
    for (std::size_t i = 0; i < n; ++i) {
        tokens.push_back("w" + std::to_string(i));
    }
    return tli::Vocabulary(std::move(tokens));
}

inline tli::TransformerConfig small_config(std::size_t vocab_size) {
    tli::TransformerConfig c;
    c.vocab_size = vocab_size;
    c.d_model = 16;
    c.n_layers = 3;
    c.n_heads = 2;
    c.d_ff = 32;
    c.max_seq = 8;
    return c;
}

/// Random model over word_vocab(words). Projection std 0.2 keeps the blocks
/// far from the identity so layer-to-layer changes are visible.
inline tli::MicroTransformer small_model(std::uint64_t seed, std::size_t words = 24,
                                         double weight_std = 0.2) {
    auto vocab = word_vocab(words);
    const auto config = small_config(vocab.size());
    tli::Rng rng(seed);
    return tli::MicroTransformer::random(config, std::move(vocab), rng, weight_std, 1.0);
}

/// Pairs (w{2i}, w{2i+1}) for i < n, all trained.
inline std::vector<tli::WordPair> word_pairs(std::size_t n) {
    std::vector<tli::WordPair> pairs;
    for (std::size_t i = 0; i < n; ++i) {
        pairs.push_back({"w" + std::to_string(2 * i), "w" + std::to_string(2 * i + 1),
                         tli::Split::trained});
    }
    return pairs;
}

/// Sets every adapter's B to N(0, stddev^2) so gradients reach A.
inline void randomize_b(tli::LoraSet& set, tli::Rng& rng, double stddev) {
    for (auto& a : set.adapters()) {
        for (double& v : a.b.mutable_data()) {
            v = rng.normal(0.0, stddev);
        }
    }
}

inline double max_abs_diff(std::span<const double> a, std::span<const double> b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        m = std::max(m, std::abs(a[i] - b[i]));
    }
    return m;
}

} // namespace tli_test
