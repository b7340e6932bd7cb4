#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "rafl/client.hpp"
#include "rafl/network.hpp"
#include "rafl/supernet.hpp"

namespace rafl {

// Wire size of a parameter set: four bytes per parameter (32-bit floats),
// matching the length of serialize_params exactly.
std::uint64_t bytes_of(const NetworkParams& net);

// Raw little-endian float32 payload, the thing bytes_of measures.
std::vector<std::uint8_t> serialize_params(const NetworkParams& net);

// Per-round communication ledger. Byte counts are totals over the round's
// participants; `cumulative` runs over all rounds so far.
struct CommLedger {
    struct Row {
        int round = 0;
        std::size_t participants = 0;
        std::uint64_t bytes_up = 0;
        std::uint64_t bytes_down = 0;
        std::uint64_t cumulative = 0;
    };

    std::vector<Row> rows;

    // Records one round in which every participant uploaded up_bytes_each
    // and received down_bytes_each.
    void record_round(int round, std::size_t participants, std::uint64_t up_bytes_each,
                      std::uint64_t down_bytes_each);

    std::uint64_t total_bytes() const { return rows.empty() ? 0 : rows.back().cumulative; }
};

// How many times more traffic the baseline needed: baseline / method.
double cost_speedup(double baseline_bytes, double method_bytes);

// Watches the accuracy stream and freezes the first round (and the
// cumulative cost at that round) where the target is reached.
struct TargetTracker {
    double target_accuracy = 0.0;

    std::optional<int> rounds_to_target;
    std::optional<std::uint64_t> bytes_to_target;

    void observe(int round, double accuracy, const CommLedger& ledger);
    bool reached() const { return rounds_to_target.has_value(); }
};

// Compute budget bookkeeping: how much of the fleet's per-sample inference
// budget the deployed architectures actually use.
struct UtilizationReport {
    struct Row {
        int client_id = -1;
        std::uint64_t budget_flops = 0;
        std::uint64_t deployed_flops = 0;
    };

    std::vector<Row> clients;
    std::uint64_t total_budget = 0;
    std::uint64_t total_deployed = 0;
    double utilization = 0.0;  // total_deployed / total_budget

    // What a uniform model sized for the weakest budget would have used.
    std::uint64_t uniform_flops_per_client = 0;
    std::uint64_t uniform_total_deployed = 0;
    double uniform_utilization = 0.0;
};

// include_knowledge_net: the resource-aware method deploys local model
// plus knowledge network per client; uniform baselines deploy one model.
UtilizationReport utilization_report(const std::vector<ClientState>& clients,
                                     const SearchSpace& space, bool include_knowledge_net);

// Training cost convention: one backward pass costs twice the forward
// pass, so a training step over n samples costs 3 * forward_flops * n.
std::uint64_t training_flops(std::uint64_t forward_flops_per_sample, std::uint64_t samples);

}  // namespace rafl
