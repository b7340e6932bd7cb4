#pragma once

#include <cstdint>
#include <vector>

#include "rafl/client.hpp"
#include "rafl/dataset.hpp"
#include "rafl/network.hpp"

namespace rafl {

// Uniformly samples max(1, round(rate * n)) distinct registry positions.
// The result is sorted so downstream processing order never depends on
// draw order.
std::vector<std::size_t> select_clients(std::size_t registry_size, double rate, Rng& rng);

// Sample-weighted average of uploaded nets: each parameter becomes
// sum_l (n_l / N) * theta_l. Uploads are processed in ascending client-id
// order and accumulated at the given precision, so the result is a pure
// function of the upload set. All uploads must share one architecture.
template <class T>
NetT<T> weighted_mean(const std::vector<const NetT<T>*>& nets, const std::vector<std::uint64_t>& n_samples);

// Float-facing aggregation used by the training loop; accumulates in
// double internally.
NetworkParams aggregate(const std::vector<Upload>& uploads);

struct DistillOptions {
    int steps = 0;  // 0 disables distillation
    int batch_size = 64;
    float lr = 0.05f;
    std::uint64_t seed = 0;
};

// Refines the aggregated knowledge net on public unlabeled data: every
// step matches the net's softmax against the softmax of the ensemble-mean
// teacher logits. Returns the per-step loss values (before each step).
std::vector<double> ensemble_distill(NetworkParams& net, const std::vector<const NetworkParams*>& teachers,
                                     const Dataset& public_pool, const DistillOptions& opts);

}  // namespace rafl

// Template definition.
#include "rafl/server_impl.hpp"
