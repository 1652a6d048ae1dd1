// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace tli {

enum class Split { trained, control };

std::string_view split_name(Split split);
Split parse_split(std::string_view text);

struct WordPair {
    std::string source;
    std::string target;
    Split split = Split::trained;

    bool operator==(const WordPair&) const = default;
};

/// Ordered translation pairs with trained/control tags.
/// Invariants: no duplicate (source, target); control pairs share no surface
/// word with trained pairs.
class WordPairSet {
public:
    WordPairSet() = default;
    explicit WordPairSet(std::vector<WordPair> pairs);

    const std::vector<WordPair>& pairs() const noexcept { return pairs_; }
    std::size_t size() const noexcept { return pairs_.size(); }
    bool empty() const noexcept { return pairs_.empty(); }
    const WordPair& operator[](std::size_t i) const { return pairs_[i]; }

    /// Pairs with the given tag, order preserved.
    WordPairSet subset(Split split) const;
    std::size_t count(Split split) const;

    /// Throws ContractError naming the first violation.
    void validate() const;

    bool operator==(const WordPairSet&) const = default;

private:
    std::vector<WordPair> pairs_;
};

/// CSV, UTF-8, header `source,target,split`. Fields containing a comma or
/// quote are double-quoted with "" escaping.
WordPairSet load_pairs(const std::filesystem::path& path);
void save_pairs(const WordPairSet& set, const std::filesystem::path& path);

/// Seeded shuffle, then tags round(control_fraction * n) pairs as control.
/// Candidates sharing a surface word with the trained set are skipped and
/// the next shuffled pair is tried.
WordPairSet split_pairs(const std::vector<WordPair>& pairs, double control_fraction,
                        std::uint64_t seed);

/// Whitespace-separated, lowercased words of an expression.
std::vector<std::string> surface_words(std::string_view expression);

} // namespace tli
