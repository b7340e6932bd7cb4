#include "rafl/client.hpp"

#include <span>

#include "rafl/errors.hpp"
#include "rafl/rng.hpp"

namespace rafl {

ClientState init_client(const SupernetWeights& pool, const SearchSpace& space,
                        ResourceBudget budget, const ArchitectureConfig& kn_arch, Shard shard,
                        bool inherit_weights, std::uint64_t init_seed, const Dataset& val) {
    if (shard.size() == 0) throw UsageError("client: empty shard");
    const std::uint64_t kn_cost = flops(space, kn_arch);
    if (kn_cost > budget.max_flops) {
        throw InfeasibleBudgetError(budget.max_flops, kn_cost + min_flops(space));
    }
    ClientState c;
    c.budget = budget;
    c.kn_arch = kn_arch;
    c.shard = std::move(shard);
    try {
        c.arch = search(pool, space, ResourceBudget{budget.max_flops - kn_cost}, val);
    } catch (const InfeasibleBudgetError& e) {
        // Report the total requirement, not just the residual.
        throw InfeasibleBudgetError(budget.max_flops, kn_cost + e.min_feasible_flops);
    }
    c.local_model = extract_subnet(pool, space, c.arch);
    c.knowledge_net = extract_subnet(pool, space, c.kn_arch);
    if (!inherit_weights) {
        Rng model_rng = make_rng(derive_seed(init_seed, SeedDomain::client_init, 0));
        Rng kn_rng = make_rng(derive_seed(init_seed, SeedDomain::client_init, 1));
        init_params(c.local_model, model_rng);
        init_params(c.knowledge_net, kn_rng);
    }
    return c;
}

namespace {

void validate_update_inputs(const ClientState& client, const Dataset& data,
                            const LocalTrainConfig& cfg) {
    if (cfg.epochs <= 0 || cfg.batch_size <= 0) {
        throw UsageError("local update: epochs and batch size must be positive");
    }
    if (cfg.lr <= 0.0f) throw UsageError("local update: learning rate must be positive");
    if (client.shard.size() == 0) throw UsageError("local update: empty shard");
    for (std::size_t r : client.shard.indices) {
        if (r >= data.size()) throw UsageError("local update: shard index out of range");
    }
}

// Seeded epoch order; batches are consecutive chunks, last one ragged.
std::vector<std::size_t> epoch_order(const Shard& shard, Rng& rng) {
    auto order = shard.indices;
    shuffle_in_place(order, rng);
    return order;
}

}  // namespace

LocalTrainLog mutual_local_update(ClientState& client, const Dataset& data,
                                  const LocalTrainConfig& cfg) {
    validate_update_inputs(client, data, cfg);
    LocalTrainLog log;
    Rng rng = make_rng(cfg.seed);
    const auto bs = static_cast<std::size_t>(cfg.batch_size);
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        const auto order = epoch_order(client.shard, rng);
        for (std::size_t start = 0; start < order.size(); start += bs) {
            const std::size_t count = std::min(bs, order.size() - start);
            const Batch batch = batch_from(data, std::span(order).subspan(start, count));

            // Pre-step logits of each net serve as the other's detached
            // distillation target for this batch.
            const Matrix model_logits = forward(client.local_model, batch.inputs);
            const Matrix kn_logits = forward(client.knowledge_net, batch.inputs);

            LossSpec model_spec;
            model_spec.kl_target_logits = &kn_logits;
            LossSpec kn_spec;
            kn_spec.kl_target_logits = &model_logits;

            log.model_loss.push_back(cross_entropy_from_logits(model_logits, batch.labels) +
                                     kl_from_logits(kn_logits, model_logits));
            log.knowledge_loss.push_back(cross_entropy_from_logits(kn_logits, batch.labels) +
                                         kl_from_logits(model_logits, kn_logits));

            const Grads model_grads = backward(client.local_model, batch, model_spec);
            const Grads kn_grads = backward(client.knowledge_net, batch, kn_spec);
            sgd_step(client.local_model, model_grads, cfg.lr, cfg.weight_decay);
            sgd_step(client.knowledge_net, kn_grads, cfg.lr, cfg.weight_decay);
        }
    }
    return log;
}

LocalTrainLog plain_local_update(ClientState& client, const Dataset& data,
                                 const LocalTrainConfig& cfg) {
    validate_update_inputs(client, data, cfg);
    if (cfg.prox_mu > 0.0 && !client.ref_model.has_value()) {
        throw UsageError("local update: proximal term needs round-start weights; "
                         "call receive_model with keep_anchor first");
    }
    LossSpec spec;
    spec.prox_mu = cfg.prox_mu;
    if (cfg.prox_mu > 0.0) spec.prox_anchor = &*client.ref_model;

    LocalTrainLog log;
    Rng rng = make_rng(cfg.seed);
    const auto bs = static_cast<std::size_t>(cfg.batch_size);
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        const auto order = epoch_order(client.shard, rng);
        for (std::size_t start = 0; start < order.size(); start += bs) {
            const std::size_t count = std::min(bs, order.size() - start);
            const Batch batch = batch_from(data, std::span(order).subspan(start, count));
            log.model_loss.push_back(loss_value(client.local_model, batch, spec));
            sgd_step(client.local_model, backward(client.local_model, batch, spec), cfg.lr,
                     cfg.weight_decay);
        }
    }
    return log;
}

Upload upload_knowledge(const ClientState& client) {
    if (client.knowledge_net.layers.empty()) throw UsageError("upload: client has no knowledge network");
    return Upload{client.id, client.knowledge_net, client.n_samples()};
}

Upload upload_model(const ClientState& client) {
    if (client.local_model.layers.empty()) throw UsageError("upload: client has no model");
    return Upload{client.id, client.local_model, client.n_samples()};
}

void receive_knowledge(ClientState& client, const NetworkParams& global_kn) {
    if (!same_arch(client.knowledge_net, global_kn)) {
        throw ShapeError("receive: global knowledge network does not match the client's architecture");
    }
    client.knowledge_net = global_kn;
}

void receive_model(ClientState& client, const NetworkParams& global, bool keep_anchor) {
    if (!same_arch(client.local_model, global)) {
        throw ShapeError("receive: global model does not match the client's architecture");
    }
    client.local_model = global;
    if (keep_anchor) {
        client.ref_model = global;
    } else {
        client.ref_model.reset();
    }
}

}  // namespace rafl
