// SPDX-License-Identifier: Apache-2.0
#include <chrono>
#include <ctime>
#include <fstream>
#include <functional>
#include <sstream>

#include "tli/cli/cli.hpp"
#include "tli/numcore/error.hpp"
#include "tli/numcore/text.hpp"

namespace tli {

namespace {

struct Entry {
    std::string key;
    std::function<std::string(const RunConfig&)> get;
    std::function<void(RunConfig&, const std::string&)> set;
};

std::string size_list(const std::vector<std::size_t>& values) {
    std::vector<std::string> parts;
    for (const auto v : values) {
        parts.push_back(std::to_string(v));
    }
    return join(parts, ",");
}

std::vector<std::string> word_list(const std::string& text) {
    std::vector<std::string> out;
    for (const auto& part : split(text, ',')) {
        const auto t = trim(part);
        if (!t.empty()) {
            out.push_back(t);
        }
    }
    return out;
}

std::optional<std::size_t> parse_auto_size(const std::string& text, const std::string& key) {
    if (text == "auto") {
        return std::nullopt;
    }
    return parse_size(text, key);
}

std::string auto_size(const std::optional<std::size_t>& v) {
    return v ? std::to_string(*v) : "auto";
}

#define TLI_SIZE(KEY, FIELD)                                                                   \
    Entry {                                                                                    \
        KEY, [](const RunConfig& c) { return std::to_string(c.FIELD); },                       \
            [](RunConfig& c, const std::string& v) { c.FIELD = parse_size(v, KEY); }           \
    }
#define TLI_DOUBLE(KEY, FIELD)                                                                 \
    Entry {                                                                                    \
        KEY, [](const RunConfig& c) { return format_double(c.FIELD); },                        \
            [](RunConfig& c, const std::string& v) { c.FIELD = parse_double(v, KEY); }         \
    }
#define TLI_PATH(KEY, FIELD)                                                                   \
    Entry {                                                                                    \
        KEY, [](const RunConfig& c) { return c.FIELD.string(); },                              \
            [](RunConfig& c, const std::string& v) { c.FIELD = v; }                            \
    }

const std::vector<Entry>& entries() {
    static const std::vector<Entry> table = {
        Entry{"seed", [](const RunConfig& c) { return std::to_string(c.seed); },
              [](RunConfig& c, const std::string& v) {
                  c.apply_seed(static_cast<std::uint64_t>(parse_size(v, "seed")));
              }},
        TLI_PATH("out", out),

        TLI_SIZE("world.concepts", world.concepts),
        TLI_SIZE("world.corpus_sentences", world.corpus_sentences),
        TLI_SIZE("world.sentence_len", world.sentence_len),
        TLI_DOUBLE("world.zipf_exponent", world.zipf_exponent),
        TLI_SIZE("world.topic_size", world.topic_size),
        TLI_DOUBLE("world.topic_stay", world.topic_stay),
        TLI_DOUBLE("pairs.control_fraction", control_fraction),

        TLI_SIZE("model.d_model", model.d_model),
        TLI_SIZE("model.n_layers", model.n_layers),
        TLI_SIZE("model.n_heads", model.n_heads),
        TLI_SIZE("model.d_ff", model.d_ff),
        TLI_SIZE("model.max_seq", model.max_seq),
        TLI_DOUBLE("model.norm_eps", model.norm_eps),
        TLI_DOUBLE("model.weight_std", weight_std),
        TLI_DOUBLE("model.embedding_std", embedding_std),

        TLI_SIZE("pretrain.steps", pretrain.steps),
        TLI_DOUBLE("pretrain.lr", pretrain.lr),
        TLI_SIZE("pretrain.warmup_steps", pretrain.warmup_steps),
        TLI_SIZE("pretrain.batch_sentences", pretrain.batch_sentences),
        TLI_DOUBLE("pretrain.weight_decay", pretrain.weight_decay),
        TLI_DOUBLE("pretrain.clip_norm", pretrain.clip_norm),

        TLI_SIZE("lora.rank", lora.rank),
        TLI_DOUBLE("lora.alpha", lora.alpha),
        TLI_DOUBLE("lora.dropout", lora.dropout_p),
        TLI_DOUBLE("lora.init_std", lora.init_std),
        Entry{"lora.target_names",
              [](const RunConfig& c) { return join(c.lora.target_names, ","); },
              [](RunConfig& c, const std::string& v) { c.lora.target_names = word_list(v); }},
        Entry{"lora.target_layers",
              [](const RunConfig& c) {
                  return c.lora.target_layers.empty() ? std::string("all")
                                                      : size_list(c.lora.target_layers);
              },
              [](RunConfig& c, const std::string& v) {
                  c.lora.target_layers.clear();
                  if (trim(v) == "all") {
                      return;
                  }
                  for (const auto& w : word_list(v)) {
                      c.lora.target_layers.push_back(parse_size(w, "lora.target_layers"));
                  }
              }},

        Entry{"tli.target_layer", [](const RunConfig& c) { return auto_size(c.target_layer); },
              [](RunConfig& c, const std::string& v) {
                  c.target_layer = parse_auto_size(v, "tli.target_layer");
              }},
        TLI_DOUBLE("tli.margin", tli.margin),
        TLI_DOUBLE("tli.lr", tli.lr),
        TLI_SIZE("tli.epochs", tli.epochs),
        TLI_SIZE("tli.batch_size", tli.batch_size),
        TLI_SIZE("tli.warmup_steps", tli.warmup_steps),
        TLI_DOUBLE("tli.weight_decay", tli.adam.weight_decay),
        TLI_DOUBLE("tli.beta1", tli.adam.beta1),
        TLI_DOUBLE("tli.beta2", tli.adam.beta2),
        TLI_DOUBLE("tli.eps", tli.adam.eps),
        TLI_DOUBLE("tli.clip_norm", tli.clip_norm),

        Entry{"eval.layer", [](const RunConfig& c) { return auto_size(c.eval_layer); },
              [](RunConfig& c, const std::string& v) {
                  c.eval_layer = parse_auto_size(v, "eval.layer");
              }},
        Entry{"eval.tail",
              [](const RunConfig& c) {
                  return std::string(c.eval_tail == Tail::two_sided ? "two-sided" : "greater");
              },
              [](RunConfig& c, const std::string& v) {
                  if (v == "two-sided") {
                      c.eval_tail = Tail::two_sided;
                  } else if (v == "greater") {
                      c.eval_tail = Tail::greater;
                  } else {
                      throw ConfigError("eval.tail: expected two-sided or greater, got '" + v +
                                        "'");
                  }
              }},

        Entry{"project.method", [](const RunConfig& c) { return c.project_method; },
              [](RunConfig& c, const std::string& v) {
                  if (v != "pca" && v != "tsne") {
                      throw ConfigError("project.method: expected pca or tsne, got '" + v + "'");
                  }
                  c.project_method = v;
              }},
        TLI_SIZE("project.count", project_count),
        Entry{"project.words", [](const RunConfig& c) { return join(c.project_words, ","); },
              [](RunConfig& c, const std::string& v) { c.project_words = word_list(v); }},
        TLI_DOUBLE("tsne.perplexity", tsne.perplexity),
        TLI_SIZE("tsne.iterations", tsne.iterations),
        TLI_DOUBLE("tsne.learning_rate", tsne.learning_rate),

        TLI_PATH("input.world", input_world),
        TLI_PATH("input.pairs", input_pairs),
        TLI_PATH("input.checkpoint", input_checkpoint),
        TLI_PATH("input.scan", input_scan),
        TLI_PATH("input.adapters", input_adapters),
        TLI_PATH("input.post_checkpoint", input_post_checkpoint),
    };
    return table;
}

#undef TLI_SIZE
#undef TLI_DOUBLE
#undef TLI_PATH

} // namespace

void RunConfig::apply_seed(std::uint64_t value) {
    seed = value;
    world.seed = value;
    pretrain.seed = value;
    tli.seed = value;
    tsne.seed = value;
}

RunConfig default_run_config() {
    RunConfig c;
    c.apply_seed(c.seed);
    // The toy model has 160 training pairs, so 2e-4 over 5 epochs barely
    // moves the adapters. These settings give a clear shift without collapse.
    c.tli.lr = 1e-3;
    c.tli.epochs = 10;
    c.tli.warmup_steps = 10;
    return c;
}

void set_config_value(RunConfig& config, const std::string& key, const std::string& value) {
    for (const auto& e : entries()) {
        if (e.key == key) {
            e.set(config, trim(value));
            return;
        }
    }
    throw ConfigError("unknown configuration key '" + key + "'");
}

std::vector<std::string> config_keys() {
    std::vector<std::string> keys;
    for (const auto& e : entries()) {
        keys.push_back(e.key);
    }
    return keys;
}

RunConfig parse_run_config(const std::string& text, const std::string& origin) {
    RunConfig config = default_run_config();
    std::istringstream in(text);
    std::string line;
    std::size_t line_no = 0;
    // The seed fans out into the sub-configs, so apply it before anything
    // that might override a sub-seed explicitly.
    std::vector<std::pair<std::string, std::string>> assignments;
    while (std::getline(in, line)) {
        ++line_no;
        const auto hash = line.find('#');
        const std::string body = trim(hash == std::string::npos ? line : line.substr(0, hash));
        if (body.empty()) {
            continue;
        }
        const auto eq = body.find('=');
        if (eq == std::string::npos) {
            throw ConfigError(origin + ":" + std::to_string(line_no) + ": expected key = value");
        }
        assignments.emplace_back(trim(body.substr(0, eq)), trim(body.substr(eq + 1)));
    }
    for (const auto& [k, v] : assignments) {
        if (k == "seed") {
            set_config_value(config, k, v);
        }
    }
    for (const auto& [k, v] : assignments) {
        if (k != "seed") {
            try {
                set_config_value(config, k, v);
            } catch (const Error& e) {
                throw ConfigError(origin + ": " + e.what());
            }
        }
    }
    return config;
}

RunConfig load_run_config(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot read config file " + path.string());
    }
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_run_config(buf.str(), path.string());
}

std::string to_config_text(const RunConfig& config) {
    std::string out;
    for (const auto& e : entries()) {
        out += e.key + " = " + e.get(config) + '\n';
    }
    return out;
}

std::filesystem::path create_run_dir(const RunConfig& config) {
    const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char stamp[32];
    std::strftime(stamp, sizeof stamp, "%Y%m%d-%H%M%S", &tm);
    const std::string base = std::string(stamp) + "-seed" + std::to_string(config.seed);
    std::filesystem::create_directories(config.out);
    for (int k = 0;; ++k) {
        const auto dir = config.out / (k == 0 ? base : base + "-" + std::to_string(k));
        if (std::filesystem::create_directory(dir)) {
            return dir;
        }
    }
}

std::optional<std::filesystem::path> find_latest(const std::filesystem::path& out,
                                                 const std::filesystem::path& file) {
    if (!std::filesystem::is_directory(out)) {
        return std::nullopt;
    }
    std::optional<std::filesystem::path> best;
    std::filesystem::file_time_type best_time{};
    for (const auto& entry : std::filesystem::directory_iterator(out)) {
        const auto candidate = entry.path() / file;
        if (!entry.is_directory() || !std::filesystem::exists(candidate)) {
            continue;
        }
        const auto t = std::filesystem::last_write_time(candidate);
        if (!best || t > best_time || (t == best_time && candidate > *best)) {
            best = candidate;
            best_time = t;
        }
    }
    return best;
}

} // namespace tli
