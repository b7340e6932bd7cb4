#include "rafl/cli.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <ostream>

#include <json.hpp>

#include "rafl/errors.hpp"

namespace rafl {

namespace {

void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path);
    out << content;
    if (!out) throw IoError("write failed for " + path);
}

nlohmann::json utilization_json(const Experiment& e) {
    const UtilizationReport report = e.utilization();
    nlohmann::json clients = nlohmann::json::array();
    for (const auto& row : report.clients) {
        clients.push_back({{"id", row.client_id},
                           {"budget_flops", row.budget_flops},
                           {"deployed_flops", row.deployed_flops}});
    }
    return nlohmann::json{
        {"method", to_string(e.config().method.name)},
        {"includes_knowledge_net", e.config().needs_knowledge_net()},
        {"clients", clients},
        {"total_budget_flops", report.total_budget},
        {"total_deployed_flops", report.total_deployed},
        {"utilization", report.utilization},
        {"uniform_flops_per_client", report.uniform_flops_per_client},
        {"uniform_total_deployed_flops", report.uniform_total_deployed},
        {"uniform_utilization", report.uniform_utilization},
    };
}

nlohmann::json target_json(const TargetTracker& t) {
    nlohmann::json out{
        {"target_accuracy", t.target_accuracy},
        {"enabled", t.target_accuracy > 0.0},
        {"reached", t.reached()},
    };
    if (t.reached()) {
        out["rounds_to_target"] = *t.rounds_to_target;
        out["bytes_to_target"] = *t.bytes_to_target;
    } else {
        out["rounds_to_target"] = nullptr;
        out["bytes_to_target"] = nullptr;
    }
    return out;
}

}  // namespace

int cmd_run(const ExperimentConfig& cfg, const std::string& out_dir, std::ostream& log) {
    std::filesystem::create_directories(out_dir);
    Experiment e(cfg);
    e.setup();

    log << "method " << to_string(cfg.method.name) << ", " << cfg.federation.clients
        << " clients, " << cfg.federation.rounds << " rounds, global arch "
        << to_string(e.global_arch()) << "\n";

    const std::string metrics_path = out_dir + "/metrics.csv";
    std::ofstream metrics(metrics_path);
    if (!metrics) throw IoError("cannot write " + metrics_path);
    metrics << kMetricsHeader << '\n' << std::flush;

    MetricsRow last;
    for (int r = 0; r < cfg.federation.rounds; ++r) {
        last = e.run_round();
        // One line per round, flushed, so an interrupted run keeps every
        // completed round on disk.
        metrics << csv_line(last) << '\n' << std::flush;
        if (!metrics) throw IoError("write failed for " + metrics_path);
    }

    write_text_file(out_dir + "/utilization.json", utilization_json(e).dump(2) + "\n");
    write_text_file(out_dir + "/target.json", target_json(e.target()).dump(2) + "\n");

    char buf[160];
    std::snprintf(buf, sizeof buf,
                  "final: global acc %.4f, mean local acc %.4f, %llu bytes total, %llu clients seen",
                  last.global_kn_acc, last.mean_local_acc,
                  static_cast<unsigned long long>(last.cumulative_bytes),
                  static_cast<unsigned long long>(last.distinct_clients));
    log << buf << "\n";
    if (e.target().target_accuracy > 0.0) {
        if (e.target().reached()) {
            log << "target " << e.target().target_accuracy << " reached at round "
                << *e.target().rounds_to_target << " after "
                << *e.target().bytes_to_target << " bytes\n";
        } else {
            log << "target " << e.target().target_accuracy << " not reached\n";
        }
    }
    return 0;
}

int cmd_train_supernet(const ExperimentConfig& cfg, const std::string& out_dir, std::ostream& log) {
    std::filesystem::create_directories(out_dir);
    Experiment e(cfg);
    e.setup_data();
    e.setup_pool(/*force_train=*/true);

    const std::string ckpt_path = out_dir + "/supernet.ckpt";
    save_checkpoint(ckpt_path, e.space(), e.pool());

    nlohmann::json history = nlohmann::json::array();
    for (const auto& [step, loss] : e.pool_log().history) {
        history.push_back({{"step", step}, {"val_loss", loss}});
    }
    const nlohmann::json summary{
        {"checkpoint", ckpt_path},
        {"input_dim", e.space().input_dim},
        {"output_dim", e.space().output_dim},
        {"depth_options", e.space().depth_options},
        {"width_options", e.space().width_options},
        {"candidate_archs", e.space().arch_count()},
        {"pool_params", e.pool().param_count()},
        {"train_steps", cfg.supernet.steps},
        {"initial_val_loss", e.pool_log().initial_val_loss},
        {"final_val_loss", e.pool_log().final_val_loss},
        {"history", history},
    };
    write_text_file(out_dir + "/supernet.json", summary.dump(2) + "\n");

    log << "trained pool of " << e.pool().param_count() << " params over "
        << e.space().arch_count() << " candidate archs; panel val loss "
        << e.pool_log().initial_val_loss << " -> " << e.pool_log().final_val_loss << "\n";
    log << "saved " << ckpt_path << "\n";
    return 0;
}

int cmd_partition_preview(const ExperimentConfig& cfg, std::ostream& out) {
    Experiment e(cfg);
    e.setup_data();
    const auto& shards = e.initial_shards();
    out << "partition preview: " << shards.size() << " initial clients, "
        << e.train_set().size() << " training samples, alpha " << cfg.partition.alpha << "\n";
    for (std::size_t i = 0; i < shards.size(); ++i) {
        const auto hist = label_histogram(e.train_set(), shards[i]);
        out << "client " << i << ": " << shards[i].size() << " samples, per-class [";
        for (std::size_t c = 0; c < hist.size(); ++c) {
            if (c) out << ",";
            out << hist[c];
        }
        out << "]\n";
    }
    return 0;
}

ReportTable build_report(const std::vector<std::string>& metrics_paths, std::optional<double> target) {
    if (metrics_paths.empty()) throw UsageError("report: no metrics files given");
    ReportTable table;
    table.target = target;
    for (const auto& path : metrics_paths) {
        const auto rows = read_metrics_csv(path);
        ReportRow row;
        row.path = path;
        row.rounds = rows.back().round;
        row.final_acc = rows.back().global_kn_acc;
        row.total_bytes = rows.back().cumulative_bytes;
        if (target.has_value()) {
            for (const auto& r : rows) {
                if (r.global_kn_acc >= *target) {
                    row.rounds_to_target = r.round;
                    row.bytes_to_target = r.cumulative_bytes;
                    break;
                }
            }
        }
        table.rows.push_back(std::move(row));
    }
    const double base = static_cast<double>(table.rows.front().total_bytes);
    for (auto& row : table.rows) {
        row.delta_bytes = static_cast<double>(row.total_bytes) - base;
        row.cost_ratio = cost_speedup(base, static_cast<double>(row.total_bytes));
    }
    return table;
}

std::string report_csv(const ReportTable& table) {
    std::string out =
        "path,rounds,final_acc,total_bytes,rounds_to_target,bytes_to_target,delta_bytes,cost_ratio\n";
    char buf[128];
    for (const auto& row : table.rows) {
        out += row.path + ",";
        out += std::to_string(row.rounds) + ",";
        std::snprintf(buf, sizeof buf, "%.9g,", row.final_acc);
        out += buf;
        out += std::to_string(row.total_bytes) + ",";
        out += row.rounds_to_target ? std::to_string(*row.rounds_to_target) : "";
        out += ",";
        out += row.bytes_to_target ? std::to_string(*row.bytes_to_target) : "";
        out += ",";
        std::snprintf(buf, sizeof buf, "%.9g,%.9g\n", row.delta_bytes, row.cost_ratio);
        out += buf;
    }
    return out;
}

std::string report_text(const ReportTable& table) {
    std::size_t path_w = 4;
    for (const auto& row : table.rows) path_w = std::max(path_w, row.path.size());
    char buf[512];
    std::snprintf(buf, sizeof buf, "%-*s %7s %10s %14s %9s %15s %14s %7s\n",
                  static_cast<int>(path_w), "path", "rounds", "final_acc", "total_bytes",
                  "to_tgt", "bytes_to_tgt", "delta_bytes", "ratio");
    std::string out = buf;
    for (const auto& row : table.rows) {
        const std::string to_tgt = row.rounds_to_target ? std::to_string(*row.rounds_to_target) : "-";
        const std::string bytes_tgt = row.bytes_to_target ? std::to_string(*row.bytes_to_target) : "-";
        std::snprintf(buf, sizeof buf, "%-*s %7d %10.4f %14llu %9s %15s %14.6g %7.3g\n",
                      static_cast<int>(path_w), row.path.c_str(), row.rounds, row.final_acc,
                      static_cast<unsigned long long>(row.total_bytes), to_tgt.c_str(),
                      bytes_tgt.c_str(), row.delta_bytes, row.cost_ratio);
        out += buf;
    }
    return out;
}

int cmd_report(const std::vector<std::string>& metrics_paths, std::optional<double> target,
               const std::string& out_dir, std::ostream& out) {
    const ReportTable table = build_report(metrics_paths, target);
    if (!out_dir.empty()) {
        std::filesystem::create_directories(out_dir);
        write_text_file(out_dir + "/report.csv", report_csv(table));
    }
    out << report_text(table);
    return 0;
}

}  // namespace rafl
