#include "rafl/accounting.hpp"

#include <algorithm>
#include <cstring>
#include <limits>

#include "rafl/errors.hpp"

namespace rafl {

std::uint64_t bytes_of(const NetworkParams& net) {
    return net.param_count() * 4;
}

std::vector<std::uint8_t> serialize_params(const NetworkParams& net) {
    std::vector<std::uint8_t> out;
    out.reserve(net.param_count() * 4);
    const auto push = [&out](float v) {
        std::uint32_t bits = 0;
        std::memcpy(&bits, &v, 4);
        out.push_back(static_cast<std::uint8_t>(bits & 0xff));
        out.push_back(static_cast<std::uint8_t>((bits >> 8) & 0xff));
        out.push_back(static_cast<std::uint8_t>((bits >> 16) & 0xff));
        out.push_back(static_cast<std::uint8_t>((bits >> 24) & 0xff));
    };
    for (const auto& l : net.layers) {
        for (float w : l.weight.values) push(w);
        for (float b : l.bias) push(b);
    }
    return out;
}

void CommLedger::record_round(int round, std::size_t participants, std::uint64_t up_bytes_each,
                              std::uint64_t down_bytes_each) {
    if (!rows.empty() && round <= rows.back().round) {
        throw UsageError("ledger: rounds must be recorded in increasing order");
    }
    Row row;
    row.round = round;
    row.participants = participants;
    row.bytes_up = up_bytes_each * participants;
    row.bytes_down = down_bytes_each * participants;
    row.cumulative = total_bytes() + row.bytes_up + row.bytes_down;
    rows.push_back(row);
}

double cost_speedup(double baseline_bytes, double method_bytes) {
    if (method_bytes <= 0.0) throw UsageError("speedup: method cost must be positive");
    if (baseline_bytes < 0.0) throw UsageError("speedup: negative baseline cost");
    return baseline_bytes / method_bytes;
}

void TargetTracker::observe(int round, double accuracy, const CommLedger& ledger) {
    if (target_accuracy <= 0.0) return;  // tracker disabled
    if (reached()) return;
    if (accuracy >= target_accuracy) {
        rounds_to_target = round;
        bytes_to_target = ledger.total_bytes();
    }
}

UtilizationReport utilization_report(const std::vector<ClientState>& clients,
                                     const SearchSpace& space, bool include_knowledge_net) {
    if (clients.empty()) throw UsageError("utilization: no clients");
    UtilizationReport report;
    std::uint64_t min_budget = std::numeric_limits<std::uint64_t>::max();
    for (const auto& c : clients) {
        UtilizationReport::Row row;
        row.client_id = c.id;
        row.budget_flops = c.budget.max_flops;
        row.deployed_flops = flops(space, c.arch);
        if (include_knowledge_net) row.deployed_flops += flops(space, c.kn_arch);
        if (row.deployed_flops > row.budget_flops) {
            throw UsageError("utilization: client " + std::to_string(c.id) +
                             " deploys beyond its budget");
        }
        report.total_budget += row.budget_flops;
        report.total_deployed += row.deployed_flops;
        min_budget = std::min(min_budget, row.budget_flops);
        report.clients.push_back(row);
    }
    report.utilization = static_cast<double>(report.total_deployed) /
                         static_cast<double>(report.total_budget);

    // Counterfactual: one architecture for everyone, sized so the weakest
    // client can still run it.
    report.uniform_flops_per_client =
        flops(space, largest_feasible_arch(space, ResourceBudget{min_budget}));
    report.uniform_total_deployed = report.uniform_flops_per_client * clients.size();
    report.uniform_utilization = static_cast<double>(report.uniform_total_deployed) /
                                 static_cast<double>(report.total_budget);
    return report;
}

std::uint64_t training_flops(std::uint64_t forward_flops_per_sample, std::uint64_t samples) {
    return 3 * forward_flops_per_sample * samples;
}

}  // namespace rafl
