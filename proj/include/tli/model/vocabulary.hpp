// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace tli {

inline constexpr std::string_view kUnknownToken = "<unk>";

/// Word-level vocabulary. Ids are dense in [0, size()); the unknown token
/// must be present.
class Vocabulary {
public:
    Vocabulary() = default;
    explicit Vocabulary(std::vector<std::string> tokens);

    std::size_t size() const noexcept { return tokens_.size(); }
    std::size_t unknown_id() const noexcept { return unknown_id_; }
    bool contains(std::string_view token) const;
    /// Unknown id for absent tokens.
    std::size_t id_of(std::string_view token) const;
    const std::string& token(std::size_t id) const { return tokens_.at(id); }
    const std::vector<std::string>& tokens() const noexcept { return tokens_; }

    /// One token per line, UTF-8; line number (from 0) is the id.
    void save(const std::filesystem::path& path) const;
    static Vocabulary load(const std::filesystem::path& path);

    bool operator==(const Vocabulary& other) const { return tokens_ == other.tokens_; }

private:
    std::vector<std::string> tokens_;
    std::unordered_map<std::string, std::size_t> index_;
    std::size_t unknown_id_ = 0;
};

struct TokenizedText {
    std::vector<std::size_t> ids;
    std::vector<int> mask;
    /// Words that fell back to the unknown id, in order of appearance.
    std::vector<std::string> unknown_words;

    bool has_unknown() const noexcept { return !unknown_words.empty(); }
};

/// Lowercases ASCII letters and splits on whitespace.
TokenizedText tokenize(std::string_view text, const Vocabulary& vocab);

std::vector<std::string> split_words(std::string_view text);
std::string to_lower_ascii(std::string_view text);

} // namespace tli
