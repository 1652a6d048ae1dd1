// SPDX-License-Identifier: Apache-2.0
#include <fstream>
#include <iostream>
#include <sstream>

#include "tli/cli/cli.hpp"
#include "tli/numcore/error.hpp"
#include "tli/numcore/ops.hpp"
#include "tli/numcore/text.hpp"

namespace tli {

namespace fs = std::filesystem;

namespace {

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw IoError("cannot write " + path.string());
    }
    out << text;
}

fs::path start_run(const RunConfig& config, const char* command) {
    const fs::path dir = create_run_dir(config);
    write_text(dir / kResolvedConfig, to_config_text(config));
    std::cout << "[" << command << "] run directory " << dir.string() << '\n';
    return dir;
}

// Explicit path if configured, else the newest matching file under `out`.
fs::path resolve_input(const RunConfig& config, const fs::path& explicit_path,
                       const char* file_name, const char* what) {
    if (!explicit_path.empty()) {
        if (!fs::exists(explicit_path)) {
            throw IoError(std::string(what) + " not found: " + explicit_path.string());
        }
        return explicit_path;
    }
    if (auto found = find_latest(config.out, file_name)) {
        return *found;
    }
    throw IoError(std::string("no ") + what + " given and no " + file_name + " found under " +
                  config.out.string());
}

std::size_t resolve_eval_layer(const RunConfig& config, const MicroTransformer& model) {
    const std::size_t layer = config.eval_layer.value_or(model.config.final_layer());
    if (layer > model.config.final_layer()) {
        throw ConfigError("eval.layer " + std::to_string(layer) + " exceeds final layer " +
                          std::to_string(model.config.final_layer()));
    }
    return layer;
}

// ----------------------------------------------------------------- stages

SyntheticWorld stage_gen_data(const RunConfig& config, const fs::path& dir) {
    SyntheticWorld world = generate_world(config.world);
    world.save(dir / kLexiconFile, dir / kCorpusFile);
    const WordPairSet pairs = split_pairs(world.lexicon_pairs(), config.control_fraction,
                                          config.seed);
    save_pairs(pairs, dir / kPairsFile);
    std::cout << "[gen-data] " << world.concept_count() << " concepts, " << world.corpus.size()
              << " sentences, " << pairs.count(Split::trained) << " trained / "
              << pairs.count(Split::control) << " control pairs\n";
    return world;
}

MicroTransformer stage_pretrain(const RunConfig& config, const fs::path& dir,
                                const SyntheticWorld& world) {
    Vocabulary vocab = world.vocabulary();
    TransformerConfig model_config = config.model;
    model_config.vocab_size = vocab.size();
    Rng rng(config.seed);
    const MicroTransformer init = MicroTransformer::random(model_config, std::move(vocab), rng,
                                                           config.weight_std, config.embedding_std);
    PretrainConfig pc = config.pretrain;
    pc.seed = config.seed;
    PretrainResult result = pretrain_toy(init, world, pc);
    save_checkpoint(result.model, dir / kBaseCheckpoint);
    std::string csv = "step,loss\n";
    for (std::size_t i = 0; i < result.losses.size(); ++i) {
        csv += std::to_string(i) + ',' + format_double(result.losses[i]) + '\n';
    }
    write_text(dir / kPretrainLossFile, csv);
    if (!result.losses.empty()) {
        std::cout << "[pretrain] " << result.losses.size() << " steps, loss "
                  << format_fixed(result.losses.front(), 4) << " -> "
                  << format_fixed(result.losses.back(), 4) << '\n';
    }
    return std::move(result.model);
}

LayerScanResult stage_scan(const fs::path& dir, const MicroTransformer& model,
                           const WordPairSet& pairs) {
    const WordPairSet trained = pairs.subset(Split::trained);
    const LayerScanResult scan = scan_layers(model, trained.empty() ? pairs : trained);
    render_layer_curve(scan, scan.peak_layer, dir / kScanImage);
    std::cout << "[scan] mean similarity per layer:";
    for (const double m : scan.per_layer_mean_sim) {
        std::cout << ' ' << format_fixed(m, 4);
    }
    std::cout << "\n[scan] peak layer " << scan.peak_layer << '\n';
    return scan;
}

LoraSet stage_train(const RunConfig& config, const fs::path& dir, const MicroTransformer& model,
                    const WordPairSet& pairs, std::size_t target_layer) {
    MicroTransformer base = model.clone();
    Rng lora_rng(config.seed);
    LoraSet adapters = LoraSet::inject(base, config.lora, lora_rng);
    TliConfig tli = config.tli;
    tli.target_layer = target_layer;
    tli.seed = config.seed;
    const TrainingLog log = train_tli(base, adapters, pairs.subset(Split::trained), tli);
    adapters.save(dir / kAdapterCheckpoint);
    log.save(dir / kTrainingLog);
    const auto epochs = log.epoch_mean_losses();
    std::cout << "[train] target layer " << target_layer << ", " << log.steps.size()
              << " steps, epoch mean loss";
    for (const double l : epochs) {
        std::cout << ' ' << format_fixed(l, 4);
    }
    std::cout << '\n';
    return adapters;
}

MicroTransformer stage_merge(const fs::path& dir, const MicroTransformer& model,
                             const LoraSet& adapters) {
    MicroTransformer merged = merge(model, adapters);
    save_checkpoint(merged, dir / kMergedCheckpoint);
    std::cout << "[merge] wrote " << (dir / kMergedCheckpoint).string() << '\n';
    return merged;
}

EvalOutcome stage_eval(const RunConfig& config, const fs::path& dir, const MicroTransformer& pre,
                       const MicroTransformer& post, const WordPairSet& pairs) {
    const std::size_t layer = resolve_eval_layer(config, pre);
    EvalOutcome outcome;
    for (const Split split : {Split::trained, Split::control}) {
        const WordPairSet subset = pairs.subset(split);
        const auto before = evaluate_alignment(pre, subset, layer);
        const auto after = evaluate_alignment(post, subset, layer);
        AlignmentReport report = build_report(before, after, subset.pairs(), layer,
                                              std::string(split_name(split)), config.eval_tail);
        (split == Split::trained ? outcome.trained : outcome.control) = std::move(report);
    }
    const std::vector<AlignmentReport> reports{outcome.trained, outcome.control};
    write_text(dir / kReportText, render_report_text(reports));
    write_text(dir / kReportJson, render_report_json(reports));
    std::cout << "[eval] layer " << layer << '\n' << render_summary_table(reports);
    return outcome;
}

std::vector<WordPair> projection_pairs(const RunConfig& config, const WordPairSet& pairs) {
    std::vector<WordPair> out;
    if (config.project_words.empty()) {
        for (std::size_t i = 0; i < pairs.size() && out.size() < config.project_count; ++i) {
            out.push_back(pairs[i]);
        }
        return out;
    }
    for (const auto& word : config.project_words) {
        bool found = false;
        for (const auto& p : pairs.pairs()) {
            if (p.source == word) {
                out.push_back(p);
                found = true;
                break;
            }
        }
        if (!found) {
            throw ConfigError("project.words: '" + word + "' is not a source word of the pair file");
        }
    }
    return out;
}

void stage_project(const RunConfig& config, const fs::path& dir, const MicroTransformer& pre,
                   const MicroTransformer& post, const WordPairSet& pairs) {
    const std::size_t layer = resolve_eval_layer(config, pre);
    const auto chosen = projection_pairs(config, pairs);
    std::vector<std::string> sources;
    std::vector<std::string> targets;
    for (const auto& p : chosen) {
        sources.push_back(p.source);
        targets.push_back(p.target);
    }
    NoGradScope no_grad;
    for (const auto& [model, file, title] :
         {std::tuple{&pre, kProjectionPre, "Before adapter training"},
          std::tuple{&post, kProjectionPost, "After adapter training"}}) {
        std::vector<Tensor> rows;
        for (const auto& w : sources) {
            rows.push_back(embed_word(*model, w, layer));
        }
        for (const auto& w : targets) {
            rows.push_back(embed_word(*model, w, layer));
        }
        const Tensor x = stack_rows(rows);
        std::vector<Point2> coords;
        if (config.project_method == "tsne") {
            coords = tsne_2d(x, config.tsne).coords;
        } else {
            coords = pca_2d(x).coords;
        }
        render_projection(paired_projection(std::move(coords), sources, targets), dir / file,
                          title);
    }
    std::cout << "[project] " << chosen.size() << " pairs, method " << config.project_method
              << '\n';
}

} // namespace

LayerScanResult load_scan(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot read scan file " + path.string());
    }
    std::string line;
    if (!std::getline(in, line) || trim(line) != "layer,mean_sim,std_sim") {
        throw ParseError(path.string() + ":1: expected header layer,mean_sim,std_sim");
    }
    LayerScanResult scan;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) {
            continue;
        }
        const auto fields = split(trim(line), ',');
        if (fields.size() != 3) {
            throw ParseError(path.string() + ":" + std::to_string(line_no) +
                             ": expected 3 fields");
        }
        scan.per_layer_mean_sim.push_back(parse_double(fields[1], "mean_sim"));
        scan.per_layer_std.push_back(parse_double(fields[2], "std_sim"));
        if (scan.per_layer_mean_sim.back() > scan.per_layer_mean_sim[scan.peak_layer]) {
            scan.peak_layer = scan.per_layer_mean_sim.size() - 1;
        }
    }
    if (scan.per_layer_mean_sim.empty()) {
        throw ParseError(path.string() + ": no layers");
    }
    return scan;
}

fs::path cmd_gen_data(const RunConfig& config) {
    const fs::path dir = start_run(config, "gen-data");
    stage_gen_data(config, dir);
    return dir;
}

fs::path cmd_pretrain(const RunConfig& config) {
    const fs::path corpus = resolve_input(
        config, config.input_world.empty() ? fs::path{} : config.input_world / kCorpusFile,
        kCorpusFile, "corpus file");
    const fs::path lexicon = corpus.parent_path() / kLexiconFile;
    const SyntheticWorld world = load_world(lexicon, corpus);
    const fs::path dir = start_run(config, "pretrain");
    stage_pretrain(config, dir, world);
    return dir;
}

fs::path cmd_scan(const RunConfig& config) {
    const auto ckpt = resolve_input(config, config.input_checkpoint, kBaseCheckpoint, "checkpoint");
    const auto pairs_path = resolve_input(config, config.input_pairs, kPairsFile, "pair file");
    const MicroTransformer model = load_checkpoint(ckpt);
    const WordPairSet pairs = load_pairs(pairs_path);
    const fs::path dir = start_run(config, "scan");
    stage_scan(dir, model, pairs);
    return dir;
}

fs::path cmd_train(const RunConfig& config) {
    const auto ckpt = resolve_input(config, config.input_checkpoint, kBaseCheckpoint, "checkpoint");
    const auto pairs_path = resolve_input(config, config.input_pairs, kPairsFile, "pair file");
    std::size_t target = 0;
    if (config.target_layer) {
        target = *config.target_layer;
    } else {
        const auto scan_path = resolve_input(config, config.input_scan, kScanData, "scan result");
        target = load_scan(scan_path).peak_layer;
        std::cout << "[train] target layer " << target << " from " << scan_path.string() << '\n';
    }
    const MicroTransformer model = load_checkpoint(ckpt);
    const WordPairSet pairs = load_pairs(pairs_path);
    const fs::path dir = start_run(config, "train");
    stage_train(config, dir, model, pairs, target);
    return dir;
}

fs::path cmd_merge(const RunConfig& config) {
    const auto ckpt = resolve_input(config, config.input_checkpoint, kBaseCheckpoint, "checkpoint");
    const auto adapter_path =
        resolve_input(config, config.input_adapters, kAdapterCheckpoint, "adapter checkpoint");
    const MicroTransformer model = load_checkpoint(ckpt);
    const LoraSet adapters = LoraSet::load(adapter_path, model);
    const fs::path dir = start_run(config, "merge");
    stage_merge(dir, model, adapters);
    return dir;
}

fs::path cmd_eval(const RunConfig& config) {
    const auto pre_path =
        resolve_input(config, config.input_checkpoint, kBaseCheckpoint, "checkpoint");
    const auto post_path = resolve_input(config, config.input_post_checkpoint, kMergedCheckpoint,
                                         "post-training checkpoint");
    const auto pairs_path = resolve_input(config, config.input_pairs, kPairsFile, "pair file");
    const MicroTransformer pre = load_checkpoint(pre_path);
    const MicroTransformer post = load_checkpoint(post_path);
    const WordPairSet pairs = load_pairs(pairs_path);
    const fs::path dir = start_run(config, "eval");
    stage_eval(config, dir, pre, post, pairs);
    return dir;
}

fs::path cmd_project(const RunConfig& config) {
    const auto pre_path =
        resolve_input(config, config.input_checkpoint, kBaseCheckpoint, "checkpoint");
    const auto post_path = resolve_input(config, config.input_post_checkpoint, kMergedCheckpoint,
                                         "post-training checkpoint");
    const auto pairs_path = resolve_input(config, config.input_pairs, kPairsFile, "pair file");
    const MicroTransformer pre = load_checkpoint(pre_path);
    const MicroTransformer post = load_checkpoint(post_path);
    const WordPairSet pairs = load_pairs(pairs_path);
    const fs::path dir = start_run(config, "project");
    stage_project(config, dir, pre, post, pairs);
    return dir;
}

PipelineResult cmd_all(const RunConfig& config) {
    PipelineResult result;
    result.run_dir = start_run(config, "all");
    const fs::path& dir = result.run_dir;
    const SyntheticWorld world = stage_gen_data(config, dir);
    const WordPairSet pairs = load_pairs(dir / kPairsFile);
    const MicroTransformer base = stage_pretrain(config, dir, world);
    result.scan = stage_scan(dir, base, pairs);
    result.target_layer = config.target_layer.value_or(result.scan.peak_layer);
    const LoraSet adapters = stage_train(config, dir, base, pairs, result.target_layer);
    const MicroTransformer merged = stage_merge(dir, base, adapters);
    result.eval = stage_eval(config, dir, base, merged, pairs);
    stage_project(config, dir, base, merged, pairs);
    return result;
}

} // namespace tli
