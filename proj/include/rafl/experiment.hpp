#pragma once

#include <deque>
#include <iosfwd>
#include <string>
#include <vector>

#include "rafl/accounting.hpp"
#include "rafl/client.hpp"
#include "rafl/config.hpp"
#include "rafl/dataset.hpp"
#include "rafl/server.hpp"
#include "rafl/supernet.hpp"

namespace rafl {

// One line of the per-round metrics CSV, in column order.
struct MetricsRow {
    int round = 0;  // 1-based
    double global_kn_acc = 0.0;
    double mean_local_acc = 0.0;
    double mean_local_train_acc = 0.0;
    std::uint64_t bytes_up = 0;
    std::uint64_t bytes_down = 0;
    std::uint64_t cumulative_bytes = 0;
    std::uint64_t distinct_clients = 0;
};

inline constexpr const char* kMetricsHeader =
    "round,global_kn_acc,mean_local_acc,mean_local_train_acc,bytes_up,bytes_down,"
    "cumulative_bytes,distinct_clients";

std::string csv_line(const MetricsRow& row);
std::vector<MetricsRow> read_metrics_csv(const std::string& path);

// A full federated run driven by one config. Stages are split so the
// auxiliary commands can stop early:
//   setup_data()     dataset, splits, partition into the shard stream
//   setup_pool()     supernet weights (trained, loaded, or fresh)
//   setup_registry() global net and the initial clients
// setup() runs all three; run_round() then advances one round at a time.
class Experiment {
public:
    explicit Experiment(ExperimentConfig cfg);

    void setup_data();
    // force_train: train the pool even when this run's method would never
    // read the trained weights (the dedicated train command wants that).
    void setup_pool(bool force_train = false);
    void setup_registry();
    void setup();

    MetricsRow run_round();

    const ExperimentConfig& config() const { return cfg_; }
    const SearchSpace& space() const { return space_; }
    const SupernetWeights& pool() const { return pool_; }
    const SupernetTrainLog& pool_log() const { return pool_log_; }
    const std::vector<ClientState>& registry() const { return registry_; }
    const NetworkParams& global_net() const { return global_net_; }
    const ArchitectureConfig& global_arch() const { return global_arch_; }
    const CommLedger& ledger() const { return ledger_; }
    const TargetTracker& target() const { return target_; }
    const Dataset& train_set() const { return train_; }
    const Dataset& val_set() const { return val_; }
    const Dataset& test_set() const { return test_; }
    const Dataset& public_pool() const { return public_; }
    const std::vector<Shard>& initial_shards() const { return initial_shards_; }
    std::uint64_t distinct_clients_seen() const { return next_client_id_; }
    int rounds_done() const { return round_; }

    // FLOPs budget actually drawn (or cycled) for a client id.
    std::uint64_t budget_for(int client_id) const;

    UtilizationReport utilization() const;

private:
    ClientState mint_client(int id, Shard shard);
    Shard next_shard();
    void churn_step();
    double evaluate(const NetworkParams& net, const Dataset& data) const;

    ExperimentConfig cfg_;
    SearchSpace space_;
    Dataset train_, val_, test_, public_;
    std::vector<Shard> initial_shards_;
    std::deque<Shard> reserve_shards_;
    SupernetWeights pool_;
    SupernetTrainLog pool_log_;
    ArchitectureConfig global_arch_;  // knowledge-net arch, or the uniform arch
    NetworkParams global_net_;
    std::vector<ClientState> registry_;
    CommLedger ledger_;
    TargetTracker target_;
    int round_ = 0;
    int next_client_id_ = 0;
    int churn_per_round_ = 0;
    bool data_ready_ = false;
    bool pool_ready_ = false;
    bool registry_ready_ = false;
};

}  // namespace rafl
