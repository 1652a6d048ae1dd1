// SPDX-License-Identifier: Apache-2.0
#include "tli/synth/pairs.hpp"

#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <unordered_map>
#include <unordered_set>

#include "tli/model/vocabulary.hpp"
#include "tli/numcore/error.hpp"
#include "tli/numcore/rng.hpp"

namespace tli {

std::string_view split_name(Split split) {
    return split == Split::trained ? "trained" : "control";
}

Split parse_split(std::string_view text) {
    if (text == "trained") {
        return Split::trained;
    }
    if (text == "control") {
        return Split::control;
    }
    throw ParseError("unknown split tag '" + std::string(text) + "' (expected trained or control)");
}

std::vector<std::string> surface_words(std::string_view expression) {
    return split_words(to_lower_ascii(expression));
}

WordPairSet::WordPairSet(std::vector<WordPair> pairs) : pairs_{std::move(pairs)} { validate(); }

WordPairSet WordPairSet::subset(Split split) const {
    std::vector<WordPair> out;
    for (const auto& p : pairs_) {
        if (p.split == split) {
            out.push_back(p);
        }
    }
    return WordPairSet(std::move(out));
}

std::size_t WordPairSet::count(Split split) const {
    std::size_t n = 0;
    for (const auto& p : pairs_) {
        n += p.split == split ? 1 : 0;
    }
    return n;
}

void WordPairSet::validate() const {
    std::set<std::pair<std::string, std::string>> seen;
    std::unordered_set<std::string> trained_words;
    for (const auto& p : pairs_) {
        if (surface_words(p.source).empty() || surface_words(p.target).empty()) {
            throw ContractError("word pair with an empty side: '" + p.source + "' / '" + p.target +
                                "'");
        }
        if (!seen.emplace(p.source, p.target).second) {
            throw ContractError("duplicate word pair ('" + p.source + "', '" + p.target + "')");
        }
        if (p.split == Split::trained) {
            for (const auto& side : {p.source, p.target}) {
                for (auto& w : surface_words(side)) {
                    trained_words.insert(std::move(w));
                }
            }
        }
    }
    for (const auto& p : pairs_) {
        if (p.split != Split::control) {
            continue;
        }
        for (const auto& side : {p.source, p.target}) {
            for (const auto& w : surface_words(side)) {
                if (trained_words.count(w) != 0) {
                    throw ContractError("control pair ('" + p.source + "', '" + p.target +
                                        "') shares the word '" + w + "' with the trained set");
                }
            }
        }
    }
}

namespace {

std::vector<std::string> parse_csv_line(const std::string& line, std::size_t line_no) {
    std::vector<std::string> fields;
    std::string field;
    bool quoted = false;
    bool was_quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    field.push_back('"');
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                field.push_back(c);
            }
        } else if (c == '"') {
            if (!field.empty() || was_quoted) {
                throw ParseError("line " + std::to_string(line_no) + ": stray quote");
            }
            quoted = true;
            was_quoted = true;
        } else if (c == ',') {
            fields.push_back(std::move(field));
            field.clear();
            was_quoted = false;
        } else {
            if (was_quoted) {
                throw ParseError("line " + std::to_string(line_no) +
                                 ": text after closing quote");
            }
            field.push_back(c);
        }
    }
    if (quoted) {
        throw ParseError("line " + std::to_string(line_no) + ": unterminated quote");
    }
    fields.push_back(std::move(field));
    return fields;
}

std::string csv_field(const std::string& value) {
    if (value.find_first_of(",\"\n") == std::string::npos) {
        return value;
    }
    std::string out = "\"";
    for (const char c : value) {
        if (c == '"') {
            out += "\"\"";
        } else {
            out.push_back(c);
        }
    }
    out.push_back('"');
    return out;
}

} // namespace

WordPairSet load_pairs(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot read pair file " + path.string());
    }
    std::string line;
    std::size_t line_no = 1;
    if (!std::getline(in, line)) {
        throw ParseError(path.string() + ": empty pair file (missing header)");
    }
    if (!line.empty() && line.back() == '\r') {
        line.pop_back();
    }
    if (line != "source,target,split") {
        throw ParseError(path.string() + ": line 1: expected header 'source,target,split'");
    }
    std::vector<WordPair> pairs;
    std::set<std::pair<std::string, std::string>> seen;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        if (line.empty()) {
            continue;
        }
        std::vector<std::string> fields;
        try {
            fields = parse_csv_line(line, line_no);
        } catch (const ParseError& e) {
            throw ParseError(path.string() + ": " + e.what());
        }
        if (fields.size() != 3) {
            throw ParseError(path.string() + ": line " + std::to_string(line_no) + ": expected 3 fields, got " +
                             std::to_string(fields.size()));
        }
        Split split = Split::trained;
        try {
            split = parse_split(fields[2]);
        } catch (const ParseError& e) {
            throw ParseError(path.string() + ": line " + std::to_string(line_no) + ": " + e.what());
        }
        if (!seen.emplace(fields[0], fields[1]).second) {
            throw ParseError(path.string() + ": line " + std::to_string(line_no) +
                             ": duplicate pair ('" + fields[0] + "', '" + fields[1] + "')");
        }
        pairs.push_back(WordPair{fields[0], fields[1], split});
    }
    return WordPairSet(std::move(pairs));
}

void save_pairs(const WordPairSet& set, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw IoError("cannot write pair file " + path.string());
    }
    out << "source,target,split\n";
    for (const auto& p : set.pairs()) {
        out << csv_field(p.source) << ',' << csv_field(p.target) << ',' << split_name(p.split)
            << '\n';
    }
    if (!out) {
        throw IoError("failed writing pair file " + path.string());
    }
}

WordPairSet split_pairs(const std::vector<WordPair>& pairs, double control_fraction,
                        std::uint64_t seed) {
    if (!(control_fraction > 0.0 && control_fraction < 1.0)) {
        throw ConfigError("split_pairs: control fraction must be in (0, 1)");
    }
    const std::size_t n = pairs.size();
    const auto wanted =
        static_cast<std::size_t>(std::llround(control_fraction * static_cast<double>(n)));
    if (wanted == 0) {
        throw ConfigError("split_pairs: fraction " + std::to_string(control_fraction) + " of " +
                          std::to_string(n) + " pairs yields no control pairs");
    }

    // How many pairs use each surface word; a candidate is eligible when all
    // of its words are used only by itself or by pairs already in control.
    std::vector<std::vector<std::string>> words(n);
    std::unordered_map<std::string, std::size_t> uses;
    for (std::size_t i = 0; i < n; ++i) {
        std::set<std::string> unique;
        for (const auto& side : {pairs[i].source, pairs[i].target}) {
            for (auto& w : surface_words(side)) {
                unique.insert(std::move(w));
            }
        }
        words[i].assign(unique.begin(), unique.end());
        for (const auto& w : words[i]) {
            ++uses[w];
        }
    }
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(seed);
    rng.shuffle(order);

    std::vector<bool> is_control(n, false);
    std::unordered_map<std::string, std::size_t> control_uses;
    std::size_t chosen = 0;
    for (const std::size_t i : order) {
        if (chosen == wanted) {
            break;
        }
        bool eligible = true;
        for (const auto& w : words[i]) {
            if (uses[w] - control_uses[w] > 1) {
                eligible = false;
                break;
            }
        }
        if (!eligible) {
            continue;
        }
        is_control[i] = true;
        for (const auto& w : words[i]) {
            ++control_uses[w];
        }
        ++chosen;
    }
    if (chosen < wanted) {
        throw ContractError("split_pairs: only " + std::to_string(chosen) + " of " +
                            std::to_string(wanted) +
                            " control pairs can be surface-disjoint from the trained set");
    }
    std::vector<WordPair> out = pairs;
    for (std::size_t i = 0; i < n; ++i) {
        out[i].split = is_control[i] ? Split::control : Split::trained;
    }
    return WordPairSet(std::move(out));
}

} // namespace tli
