#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "rafl/cli.hpp"
#include "rafl/config.hpp"
#include "rafl/errors.hpp"

namespace {

rafl::ExperimentConfig load_config(const std::string& path, std::optional<std::uint64_t> seed) {
    rafl::ExperimentConfig cfg = rafl::parse_config_file(path);
    if (seed.has_value()) cfg.seed.master = *seed;
    return cfg;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Resource-aware federated learning simulator"};
    app.require_subcommand(1);

    std::string config_path;
    std::string out_dir = "out";
    std::optional<std::uint64_t> seed;
    std::vector<std::string> metrics_paths;
    std::optional<double> target;

    auto add_common = [&](CLI::App* sub, bool needs_out) {
        sub->add_option("--config", config_path, "Path to the run config")->required();
        sub->add_option("--seed", seed, "Override the master seed from the config");
        if (needs_out) sub->add_option("--out", out_dir, "Output directory (default: out)");
    };

    CLI::App* train = app.add_subcommand("train-supernet", "Train the shared weight pool and save a checkpoint");
    add_common(train, true);
    CLI::App* run = app.add_subcommand("run", "Run a full federated experiment");
    add_common(run, true);
    CLI::App* preview = app.add_subcommand("partition-preview", "Show the per-client label histograms of the partition");
    add_common(preview, false);

    CLI::App* report = app.add_subcommand("report", "Compare metrics.csv files (first one is the baseline)");
    report->add_option("metrics", metrics_paths, "metrics.csv files")->required()->expected(-1);
    report->add_option("--target", target, "Accuracy target for rounds/bytes-to-target");
    report->add_option("--out", out_dir, "Directory for report.csv (default: out)");

    CLI11_PARSE(app, argc, argv);

    try {
        if (train->parsed()) {
            return rafl::cmd_train_supernet(load_config(config_path, seed), out_dir, std::cout);
        }
        if (run->parsed()) {
            return rafl::cmd_run(load_config(config_path, seed), out_dir, std::cout);
        }
        if (preview->parsed()) {
            return rafl::cmd_partition_preview(load_config(config_path, seed), std::cout);
        }
        if (report->parsed()) {
            return rafl::cmd_report(metrics_paths, target, out_dir, std::cout);
        }
    } catch (const rafl::ConfigError& e) {
        for (const auto& line : e.errors) std::cerr << "error: " << line << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
