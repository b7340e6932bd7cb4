#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "rafl/dataset.hpp"
#include "rafl/losses.hpp"
#include "rafl/supernet.hpp"

namespace rafl {

// One participant. In the resource-aware method a client runs two models:
// a budget-fitted local model and the small shared-architecture knowledge
// network that actually travels to the server. Uniform-model baselines
// use local_model alone.
struct ClientState {
    int id = -1;
    Shard shard;
    ResourceBudget budget;
    ArchitectureConfig arch;
    NetworkParams local_model;
    ArchitectureConfig kn_arch;
    NetworkParams knowledge_net;
    // Round-start global weights, kept when a proximal term needs an anchor.
    std::optional<NetworkParams> ref_model;

    std::uint64_t n_samples() const { return shard.size(); }
};

// What a participant sends back after local training.
struct Upload {
    int client_id = -1;
    NetworkParams net;
    std::uint64_t n_samples = 0;
};

struct LocalTrainConfig {
    int epochs = 1;
    int batch_size = 32;
    float lr = 0.05f;
    float weight_decay = 0.0f;
    double prox_mu = 0.0;    // plain updates only; needs a stored ref_model
    std::uint64_t seed = 0;  // schedule seed, derived per (client, round)
};

struct LocalTrainLog {
    std::vector<double> model_loss;      // per batch, before the step
    std::vector<double> knowledge_loss;  // per batch (mutual updates only)
};

// Fits a client into its budget: reserves the knowledge network's cost,
// searches the remaining budget for the local architecture, and either
// inherits both nets' weights from the shared pool or freshly initializes
// them from init_seed.
ClientState init_client(const SupernetWeights& pool, const SearchSpace& space,
                        ResourceBudget budget, const ArchitectureConfig& kn_arch, Shard shard,
                        bool inherit_weights, std::uint64_t init_seed, const Dataset& val);

// Mutual update: on every batch both nets take one simultaneous SGD step,
// each against its task loss plus KL toward the other's pre-step logits
// (targets are detached, so no gradient flows through the peer).
LocalTrainLog mutual_local_update(ClientState& client, const Dataset& data,
                                  const LocalTrainConfig& cfg);

// Single-model update: task cross-entropy, plus a proximal pull toward the
// stored round-start weights when prox_mu > 0.
LocalTrainLog plain_local_update(ClientState& client, const Dataset& data,
                                 const LocalTrainConfig& cfg);

Upload upload_knowledge(const ClientState& client);
Upload upload_model(const ClientState& client);

// Installs the aggregated knowledge network; the architecture must match.
void receive_knowledge(ClientState& client, const NetworkParams& global_kn);

// Installs a global uniform model (baselines); optionally keeps it as the
// proximal anchor for the coming local update.
void receive_model(ClientState& client, const NetworkParams& global, bool keep_anchor);

}  // namespace rafl
