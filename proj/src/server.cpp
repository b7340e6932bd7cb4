#include "rafl/server.hpp"

#include <algorithm>
#include <cmath>

#include "rafl/errors.hpp"
#include "rafl/losses.hpp"
#include "rafl/rng.hpp"

namespace rafl {

std::vector<std::size_t> select_clients(std::size_t registry_size, double rate, Rng& rng) {
    if (registry_size == 0) throw UsageError("select: empty registry");
    if (rate <= 0.0 || rate > 1.0) throw UsageError("select: participation rate must lie in (0, 1]");
    const auto want = static_cast<std::size_t>(std::llround(rate * static_cast<double>(registry_size)));
    const std::size_t k = std::min(registry_size, std::max<std::size_t>(1, want));
    auto picks = sample_without_replacement(registry_size, k, rng);
    std::sort(picks.begin(), picks.end());
    return picks;
}

NetworkParams aggregate(const std::vector<Upload>& uploads) {
    if (uploads.empty()) throw UsageError("aggregate: no uploads");
    std::vector<const Upload*> order;
    order.reserve(uploads.size());
    for (const auto& u : uploads) order.push_back(&u);
    std::sort(order.begin(), order.end(),
              [](const Upload* a, const Upload* b) { return a->client_id < b->client_id; });
    for (std::size_t i = 1; i < order.size(); ++i) {
        if (order[i]->client_id == order[i - 1]->client_id) {
            throw UsageError("aggregate: duplicate upload from client " +
                             std::to_string(order[i]->client_id));
        }
    }

    // Accumulate in double in canonical (client id) order, so the result
    // is bit-identical under any permutation of the upload list.
    std::vector<NetT<double>> widened;
    widened.reserve(order.size());
    std::vector<const NetT<double>*> nets;
    std::vector<std::uint64_t> weights;
    for (const Upload* u : order) {
        widened.push_back(cast_net<double>(u->net));
        weights.push_back(u->n_samples);
    }
    for (const auto& n : widened) nets.push_back(&n);
    return cast_net<float>(weighted_mean<double>(nets, weights));
}

std::vector<double> ensemble_distill(NetworkParams& net, const std::vector<const NetworkParams*>& teachers,
                                     const Dataset& public_pool, const DistillOptions& opts) {
    if (teachers.empty()) throw UsageError("distill: no teachers");
    if (public_pool.size() == 0) throw UsageError("distill: empty public pool");
    if (public_pool.dim() != net.input_dim()) {
        throw ShapeError("distill: public pool width vs network input");
    }
    for (const auto* t : teachers) {
        if (t->input_dim() != net.input_dim() || t->output_dim() != net.output_dim()) {
            throw ShapeError("distill: teacher dims do not match the student");
        }
    }
    if (opts.steps < 0 || opts.batch_size <= 0) throw UsageError("distill: bad options");

    std::vector<double> losses;
    losses.reserve(static_cast<std::size_t>(opts.steps));
    Rng rng = make_rng(opts.seed);
    std::vector<std::size_t> idx(static_cast<std::size_t>(opts.batch_size));
    for (int step = 0; step < opts.steps; ++step) {
        for (auto& i : idx) i = uniform_index(rng, public_pool.size());
        const Batch batch = batch_from(public_pool, idx);

        // Ensemble target: mean of the teacher logits, entrywise in double.
        Mat<double> acc(batch.size(), net.output_dim());
        for (const auto* t : teachers) {
            const Matrix logits = forward(*t, batch.inputs);
            for (std::size_t i = 0; i < acc.values.size(); ++i) {
                acc.values[i] += static_cast<double>(logits.values[i]);
            }
        }
        for (auto& v : acc.values) v /= static_cast<double>(teachers.size());
        const Matrix target = cast_mat<float>(acc);

        LossSpec spec;
        spec.task_cross_entropy = false;
        spec.kl_target_logits = &target;
        losses.push_back(loss_value(net, batch, spec));
        sgd_step(net, backward(net, batch, spec), opts.lr);
    }
    return losses;
}

}  // namespace rafl
