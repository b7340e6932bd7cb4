#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "rafl/config.hpp"
#include "rafl/experiment.hpp"

namespace rafl {

// Full federated run: writes metrics.csv (appended and flushed per round),
// utilization.json, and target.json under out_dir. Returns the process
// exit code; an unreached target is still a successful run.
int cmd_run(const ExperimentConfig& cfg, const std::string& out_dir, std::ostream& log);

// Trains the shared pool only and saves supernet.ckpt + supernet.json.
int cmd_train_supernet(const ExperimentConfig& cfg, const std::string& out_dir, std::ostream& log);

// Prints the label histogram each initial client would receive under the
// run's exact partition, without training anything.
int cmd_partition_preview(const ExperimentConfig& cfg, std::ostream& out);

// Cross-run comparison built from metrics.csv files. The first file is
// the baseline: delta_bytes = run - baseline, cost_ratio = baseline / run.
struct ReportRow {
    std::string path;
    int rounds = 0;
    double final_acc = 0.0;
    std::uint64_t total_bytes = 0;
    std::optional<int> rounds_to_target;
    std::optional<std::uint64_t> bytes_to_target;
    double delta_bytes = 0.0;
    double cost_ratio = 1.0;
};

struct ReportTable {
    std::optional<double> target;
    std::vector<ReportRow> rows;
};

ReportTable build_report(const std::vector<std::string>& metrics_paths, std::optional<double> target);

std::string report_csv(const ReportTable& table);
std::string report_text(const ReportTable& table);

int cmd_report(const std::vector<std::string>& metrics_paths, std::optional<double> target,
               const std::string& out_dir, std::ostream& out);

}  // namespace rafl
