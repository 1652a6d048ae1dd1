// SPDX-License-Identifier: Apache-2.0
#include <bit>
#include <cstdint>
#include <fstream>
#include <sstream>

#include "tli/model/transformer.hpp"
#include "tli/numcore/error.hpp"
#include "tli/numcore/text.hpp"

namespace tli {

namespace {

constexpr std::string_view kMagic = "TLI-CHECKPOINT 1";

void put_le(std::ostream& out, double v) {
    const auto bits = std::bit_cast<std::uint64_t>(v);
    char bytes[8];
    for (int i = 0; i < 8; ++i) {
        bytes[i] = static_cast<char>((bits >> (8 * i)) & 0xFF);
    }
    out.write(bytes, 8);
}

double get_le(const unsigned char* bytes) {
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) {
        bits |= static_cast<std::uint64_t>(bytes[i]) << (8 * i);
    }
    return std::bit_cast<double>(bits);
}

bool read_line(std::istream& in, std::string& line) {
    if (!std::getline(in, line)) {
        return false;
    }
    return true;
}

} // namespace

const std::string& CheckpointContainer::meta_value(std::string_view key) const {
    for (const auto& [k, v] : meta) {
        if (k == key) {
            return v;
        }
    }
    throw IoError("checkpoint: missing meta field '" + std::string(key) + "'");
}

const Tensor& CheckpointContainer::tensor(std::string_view name) const {
    for (const auto& [n, t] : tensors) {
        if (n == name) {
            return t;
        }
    }
    throw IoError("checkpoint: missing tensor '" + std::string(name) + "'");
}

void write_container(const CheckpointContainer& container, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw IoError("cannot write checkpoint " + path.string());
    }
    out << kMagic << '\n';
    out << "kind " << container.kind << '\n';
    for (const auto& [k, v] : container.meta) {
        out << "meta " << k << ' ' << v << '\n';
    }
    if (!container.tokens.empty()) {
        out << "tokens " << container.tokens.size() << '\n';
        for (const auto& tok : container.tokens) {
            out << tok << '\n';
        }
    }
    for (const auto& [name, t] : container.tensors) {
        out << "tensor " << name;
        for (const std::size_t dim : t.shape()) {
            out << ' ' << dim;
        }
        out << '\n';
    }
    out << "end\n";
    for (const auto& [name, t] : container.tensors) {
        for (const double v : t.data()) {
            put_le(out, v);
        }
    }
    if (!out) {
        throw IoError("failed writing checkpoint " + path.string());
    }
}

CheckpointContainer read_container(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot read checkpoint " + path.string());
    }
    const auto corrupt = [&path](const std::string& what) {
        return IoError("corrupt checkpoint " + path.string() + ": " + what);
    };
    std::string line;
    if (!read_line(in, line) || line != kMagic) {
        throw corrupt("bad header (expected '" + std::string(kMagic) + "')");
    }
    CheckpointContainer c;
    std::vector<Shape> shapes;
    std::vector<std::string> names;
    bool ended = false;
    while (read_line(in, line)) {
        if (line == "end") {
            ended = true;
            break;
        }
        std::istringstream fields(line);
        std::string tag;
        fields >> tag;
        if (tag == "kind") {
            fields >> c.kind;
        } else if (tag == "meta") {
            std::string key;
            fields >> key;
            std::string value;
            std::getline(fields >> std::ws, value);
            c.meta.emplace_back(key, value);
        } else if (tag == "tokens") {
            std::string count_text;
            fields >> count_text;
            const std::size_t count = parse_size(count_text, "tokens");
            for (std::size_t i = 0; i < count; ++i) {
                if (!read_line(in, line)) {
                    throw corrupt("token list truncated at entry " + std::to_string(i));
                }
                c.tokens.push_back(line);
            }
        } else if (tag == "tensor") {
            std::string name;
            fields >> name;
            Shape shape;
            std::string dim;
            while (fields >> dim) {
                shape.push_back(parse_size(dim, name));
            }
            names.push_back(name);
            shapes.push_back(shape);
        } else {
            throw corrupt("unknown header line '" + line + "'");
        }
    }
    if (!ended) {
        throw corrupt("header truncated (no 'end' line)");
    }
    for (std::size_t i = 0; i < names.size(); ++i) {
        const std::size_t n = shape_size(shapes[i]);
        std::vector<unsigned char> payload(n * 8);
        in.read(reinterpret_cast<char*>(payload.data()), static_cast<std::streamsize>(payload.size()));
        if (static_cast<std::size_t>(in.gcount()) != payload.size()) {
            throw corrupt("payload truncated in tensor '" + names[i] + "'");
        }
        std::vector<double> values(n);
        for (std::size_t j = 0; j < n; ++j) {
            values[j] = get_le(payload.data() + 8 * j);
        }
        c.tensors.emplace_back(names[i], Tensor(shapes[i], std::move(values)));
    }
    if (in.peek() != std::char_traits<char>::eof()) {
        throw corrupt("trailing bytes after payload");
    }
    return c;
}

void save_checkpoint(const MicroTransformer& model, const std::filesystem::path& path) {
    const auto& cfg = model.config;
    CheckpointContainer c;
    c.kind = "model";
    c.meta = {{"vocab_size", std::to_string(cfg.vocab_size)},
              {"d_model", std::to_string(cfg.d_model)},
              {"n_layers", std::to_string(cfg.n_layers)},
              {"n_heads", std::to_string(cfg.n_heads)},
              {"d_ff", std::to_string(cfg.d_ff)},
              {"max_seq", std::to_string(cfg.max_seq)},
              {"norm_eps", format_double(cfg.norm_eps)}};
    c.tokens = model.vocab.tokens();
    c.tensors = model.named_parameters();
    write_container(c, path);
}

MicroTransformer load_checkpoint(const std::filesystem::path& path) {
    const CheckpointContainer c = read_container(path);
    if (c.kind != "model") {
        throw IoError("checkpoint " + path.string() + ": kind is '" + c.kind + "', expected 'model'");
    }
    TransformerConfig cfg;
    cfg.vocab_size = parse_size(c.meta_value("vocab_size"), "vocab_size");
    cfg.d_model = parse_size(c.meta_value("d_model"), "d_model");
    cfg.n_layers = parse_size(c.meta_value("n_layers"), "n_layers");
    cfg.n_heads = parse_size(c.meta_value("n_heads"), "n_heads");
    cfg.d_ff = parse_size(c.meta_value("d_ff"), "d_ff");
    cfg.max_seq = parse_size(c.meta_value("max_seq"), "max_seq");
    cfg.norm_eps = parse_double(c.meta_value("norm_eps"), "norm_eps");
    cfg.validate();

    // Build a zero model of the declared shape, then fill it field by field.
    Rng unused(0);
    MicroTransformer model =
        MicroTransformer::random(cfg, Vocabulary(c.tokens), unused, 0.0, 0.0);
    auto expected = model.named_parameters();
    if (expected.size() != c.tensors.size()) {
        throw IoError("checkpoint " + path.string() + ": " + std::to_string(c.tensors.size()) +
                      " tensors, expected " + std::to_string(expected.size()));
    }
    for (std::size_t i = 0; i < expected.size(); ++i) {
        auto& [name, target] = expected[i];
        const auto& [found_name, found] = c.tensors[i];
        if (found_name != name) {
            throw IoError("checkpoint " + path.string() + ": tensor " + std::to_string(i) +
                          " is '" + found_name + "', expected '" + name + "'");
        }
        if (found.shape() != target.shape()) {
            throw IoError("checkpoint " + path.string() + ": tensor '" + name + "' has shape " +
                          shape_to_string(found.shape()) + ", expected " +
                          shape_to_string(target.shape()));
        }
        std::copy(found.data().begin(), found.data().end(), target.mutable_data().begin());
    }
    return model;
}

} // namespace tli
