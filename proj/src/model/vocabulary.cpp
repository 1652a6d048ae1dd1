// SPDX-License-Identifier: Apache-2.0
#include "tli/model/vocabulary.hpp"

#include <fstream>

#include "tli/numcore/error.hpp"

namespace tli {

namespace {
bool is_space(char c) {
    return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}
} // namespace

Vocabulary::Vocabulary(std::vector<std::string> tokens) : tokens_{std::move(tokens)} {
    bool found_unknown = false;
    for (std::size_t i = 0; i < tokens_.size(); ++i) {
        const auto& tok = tokens_[i];
        if (tok.empty()) {
            throw ParseError("vocabulary: empty token at id " + std::to_string(i));
        }
        if (!index_.emplace(tok, i).second) {
            throw ParseError("vocabulary: duplicate token '" + tok + "' at id " + std::to_string(i));
        }
        if (tok == kUnknownToken) {
            unknown_id_ = i;
            found_unknown = true;
        }
    }
    if (!found_unknown) {
        throw ParseError("vocabulary: missing unknown token " + std::string(kUnknownToken));
    }
}

bool Vocabulary::contains(std::string_view token) const {
    return index_.find(std::string(token)) != index_.end();
}

std::size_t Vocabulary::id_of(std::string_view token) const {
    const auto it = index_.find(std::string(token));
    return it == index_.end() ? unknown_id_ : it->second;
}

void Vocabulary::save(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw IoError("cannot write vocabulary file " + path.string());
    }
    for (const auto& tok : tokens_) {
        out << tok << '\n';
    }
    if (!out) {
        throw IoError("failed writing vocabulary file " + path.string());
    }
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot read vocabulary file " + path.string());
    }
    std::vector<std::string> tokens;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        tokens.push_back(line);
    }
    return Vocabulary(std::move(tokens));
}

std::string to_lower_ascii(std::string_view text) {
    std::string out(text);
    for (char& c : out) {
        if (c >= 'A' && c <= 'Z') {
            c = static_cast<char>(c - 'A' + 'a');
        }
    }
    return out;
}

std::vector<std::string> split_words(std::string_view text) {
    std::vector<std::string> words;
    std::size_t i = 0;
    while (i < text.size()) {
        while (i < text.size() && is_space(text[i])) {
            ++i;
        }
        const std::size_t start = i;
        while (i < text.size() && !is_space(text[i])) {
            ++i;
        }
        if (i > start) {
            words.emplace_back(text.substr(start, i - start));
        }
    }
    return words;
}

TokenizedText tokenize(std::string_view text, const Vocabulary& vocab) {
    const auto words = split_words(to_lower_ascii(text));
    if (words.empty()) {
        throw ContractError("tokenize: empty text");
    }
    TokenizedText result;
    for (const auto& w : words) {
        if (!vocab.contains(w)) {
            result.unknown_words.push_back(w);
        }
        result.ids.push_back(vocab.id_of(w));
        result.mask.push_back(1);
    }
    return result;
}

} // namespace tli
