// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "tli/lora/lora.hpp"
#include "tli/probe/probe.hpp"
#include "tli/synth/world.hpp"
#include "tli/trainer/trainer.hpp"
#include "tli/viz/viz.hpp"

namespace tli {

/// Every configurable field of the pipeline. Serialized as flat
/// `section.key = value` lines; `#` starts a comment.
struct RunConfig {
    std::uint64_t seed = 42;
    std::filesystem::path out = "runs";

    WorldConfig world;
    double control_fraction = 0.2;

    TransformerConfig model;
    double weight_std = 0.02;
    double embedding_std = 1.0;

    PretrainConfig pretrain;
    LoraConfig lora;
    TliConfig tli;
    /// Unset means the peak layer of the scan.
    std::optional<std::size_t> target_layer;

    /// Unset means the final hidden state.
    std::optional<std::size_t> eval_layer;
    Tail eval_tail = Tail::two_sided;

    std::string project_method = "pca"; // pca | tsne
    std::size_t project_count = 20;
    /// Source words to plot; empty means the first project_count pairs.
    std::vector<std::string> project_words;
    TsneConfig tsne;

    // Inputs for single-stage commands. Empty means "newest run under out
    // that has the file".
    std::filesystem::path input_world;
    std::filesystem::path input_pairs;
    std::filesystem::path input_checkpoint;
    std::filesystem::path input_scan;
    std::filesystem::path input_adapters;
    /// Post-training model for eval/project; defaults to the newest merged.ckpt.
    std::filesystem::path input_post_checkpoint;

    /// Propagates `seed` into every seeded sub-config.
    void apply_seed(std::uint64_t value);
};

/// Defaults used when no configuration file is given.
RunConfig default_run_config();

/// Sets one key; throws ConfigError for unknown keys or bad values.
void set_config_value(RunConfig& config, const std::string& key, const std::string& value);

/// All keys in serialization order.
std::vector<std::string> config_keys();

RunConfig parse_run_config(const std::string& text, const std::string& origin = "config");
RunConfig load_run_config(const std::filesystem::path& path);

/// Fully resolved configuration, one `key = value` per line.
std::string to_config_text(const RunConfig& config);

/// Fresh directory `<out>/<YYYYmmdd-HHMMSS>-seed<seed>[-k]`.
std::filesystem::path create_run_dir(const RunConfig& config);

/// Newest run directory under `out` containing `file`.
std::optional<std::filesystem::path> find_latest(const std::filesystem::path& out,
                                                 const std::filesystem::path& file);

// File names inside a run directory.
inline constexpr const char* kLexiconFile = "lexicon.csv";
inline constexpr const char* kCorpusFile = "corpus.txt";
inline constexpr const char* kPairsFile = "pairs.csv";
inline constexpr const char* kBaseCheckpoint = "base.ckpt";
inline constexpr const char* kPretrainLossFile = "pretrain_loss.csv";
inline constexpr const char* kScanImage = "layer_scan.svg";
inline constexpr const char* kScanData = "layer_scan.csv";
inline constexpr const char* kAdapterCheckpoint = "adapters.ckpt";
inline constexpr const char* kTrainingLog = "training_log.jsonl";
inline constexpr const char* kMergedCheckpoint = "merged.ckpt";
inline constexpr const char* kReportText = "eval_report.txt";
inline constexpr const char* kReportJson = "eval_report.json";
inline constexpr const char* kProjectionPre = "projection_pre.svg";
inline constexpr const char* kProjectionPost = "projection_post.svg";
inline constexpr const char* kResolvedConfig = "config.resolved.txt";

/// Reads a layer_scan.csv sidecar back into a scan result.
LayerScanResult load_scan(const std::filesystem::path& path);

struct EvalOutcome {
    AlignmentReport trained;
    AlignmentReport control;
};

// Each command creates its own run directory, writes the resolved config
// there and returns the directory.
std::filesystem::path cmd_gen_data(const RunConfig& config);
std::filesystem::path cmd_pretrain(const RunConfig& config);
std::filesystem::path cmd_scan(const RunConfig& config);
std::filesystem::path cmd_train(const RunConfig& config);
std::filesystem::path cmd_merge(const RunConfig& config);
std::filesystem::path cmd_eval(const RunConfig& config);
std::filesystem::path cmd_project(const RunConfig& config);

struct PipelineResult {
    std::filesystem::path run_dir;
    LayerScanResult scan;
    std::size_t target_layer = 0;
    EvalOutcome eval;
};

/// gen-data, pretrain, scan, train, merge, eval and project in one run directory.
PipelineResult cmd_all(const RunConfig& config);

/// Command-line entry point; returns the process exit code.
int run_cli(int argc, char** argv);

} // namespace tli
