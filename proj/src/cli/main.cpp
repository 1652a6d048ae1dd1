// SPDX-License-Identifier: Apache-2.0
#include <functional>
#include <iostream>
#include <map>

#include <CLI11.hpp>

#include "tli/cli/cli.hpp"
#include "tli/numcore/error.hpp"

namespace tli {

int run_cli(int argc, char** argv) {
    CLI::App app{"Targeted lexical injection on a toy bilingual transformer"};
    app.require_subcommand(1);
    app.fallthrough();

    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::string out_dir;
    std::vector<std::string> overrides;
    app.add_option("--config", config_path, "Flat key = value configuration file");
    app.add_option("--seed", seed, "Seed for every stage (overrides the file)");
    app.add_option("--out", out_dir, "Parent directory for run directories");
    app.add_option("--set", overrides, "Override one key, as key=value (repeatable)");
    bool print_config = false;
    app.add_flag("--print-config", print_config, "Print the resolved configuration and exit");

    using Command = std::function<void(const RunConfig&)>;
    const std::vector<std::tuple<std::string, std::string, Command>> commands = {
        {"gen-data", "Generate the synthetic world and pair file",
         [](const RunConfig& c) { cmd_gen_data(c); }},
        {"pretrain", "Pretrain the toy base model", [](const RunConfig& c) { cmd_pretrain(c); }},
        {"scan", "Layer scan on a checkpoint and pair file",
         [](const RunConfig& c) { cmd_scan(c); }},
        {"train", "Train adapters at the target layer", [](const RunConfig& c) { cmd_train(c); }},
        {"merge", "Merge adapters into a standalone checkpoint",
         [](const RunConfig& c) { cmd_merge(c); }},
        {"eval", "Compare pre and post alignment on trained and control pairs",
         [](const RunConfig& c) { cmd_eval(c); }},
        {"project", "2D projections before and after training",
         [](const RunConfig& c) { cmd_project(c); }},
        {"all", "Run the whole pipeline", [](const RunConfig& c) { cmd_all(c); }},
    };
    std::map<const CLI::App*, const Command*> dispatch;
    for (const auto& [name, help, fn] : commands) {
        dispatch[app.add_subcommand(name, help)] = &fn;
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

    try {
        RunConfig config = config_path.empty() ? default_run_config()
                                               : load_run_config(config_path);
        for (const auto& kv : overrides) {
            const auto eq = kv.find('=');
            if (eq == std::string::npos) {
                throw ConfigError("--set expects key=value, got '" + kv + "'");
            }
            set_config_value(config, kv.substr(0, eq), kv.substr(eq + 1));
        }
        if (seed) {
            config.apply_seed(*seed);
        }
        if (!out_dir.empty()) {
            config.out = out_dir;
        }
        if (print_config) {
            std::cout << to_config_text(config);
            return 0;
        }
        for (const auto* sub : app.get_subcommands()) {
            (*dispatch.at(sub))(config);
        }
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
    return 0;
}

} // namespace tli
