#pragma once

#include <compare>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "rafl/dataset.hpp"
#include "rafl/network.hpp"

namespace rafl {

// A candidate subnet: how many hidden layers and how wide each one is.
// Depth 0 is legal and means a single affine layer from input to logits.
// The default ordering (depth first, then widths lexicographically) is
// the deterministic tie-break everywhere.
struct ArchitectureConfig {
    int depth = 0;
    std::vector<int> widths;  // one entry per hidden layer

    auto operator<=>(const ArchitectureConfig&) const = default;
};

std::string to_string(const ArchitectureConfig& arch);

// Grid of candidate subnets: every depth in depth_options crossed with
// every combination of hidden widths from width_options.
struct SearchSpace {
    int input_dim = 0;
    int output_dim = 0;
    std::vector<int> depth_options;  // ascending, may include 0
    std::vector<int> width_options;  // ascending, all positive

    void validate() const;
    bool contains(const ArchitectureConfig& arch) const;
    std::vector<ArchitectureConfig> enumerate() const;
    std::uint64_t arch_count() const;
    int max_depth() const { return depth_options.back(); }
    int max_width() const { return width_options.back(); }
};

struct ResourceBudget {
    std::uint64_t max_flops = 0;
};

// Inference cost of one forward pass through one sample: two FLOPs per
// multiply-accumulate, summed over consecutive layer dims. Biases and the
// nonlinearity are ignored by convention.
std::uint64_t flops(const SearchSpace& space, const ArchitectureConfig& arch);

// Cheapest candidate in the space.
std::uint64_t min_flops(const SearchSpace& space);

// Shared weight pool. Trunk layer k is sized for the widest subnet
// (max_width x max_width, or max_width x input_dim for k = 0); a subnet of
// width w uses the first w rows/columns. Each depth option gets its own
// classifier head, since the head's fan-in depends on where the trunk is
// cut.
struct SupernetWeights {
    std::vector<DenseLayer> trunk;
    std::vector<DenseLayer> heads;  // parallel to SearchSpace::depth_options

    std::uint64_t param_count() const;
};

SupernetWeights init_supernet(const SearchSpace& space, std::uint64_t seed);

// Copies the slice of the shared pool corresponding to `arch` into a
// standalone network.
NetworkParams extract_subnet(const SupernetWeights& weights, const SearchSpace& space,
                             const ArchitectureConfig& arch);

struct SupernetTrainOptions {
    int steps = 400;
    int archs_per_step = 4;   // single-path samples whose gradients are summed
    int batch_size = 64;
    float lr = 0.05f;
    int eval_panel = 8;       // archs sampled once for before/after val loss
};

struct SupernetTrainLog {
    double initial_val_loss = 0.0;  // mean cross-entropy of the panel before training
    double final_val_loss = 0.0;    // same panel after training
    std::vector<std::pair<int, double>> history;  // (step, panel val loss), sparse
};

// One-shot training of the shared pool: each step samples architectures
// uniformly, accumulates their subnet gradients on a shared minibatch into
// the pool, and applies a single SGD step. Entries outside every sampled
// subnet stay untouched.
SupernetTrainLog train_supernet(SupernetWeights& weights, const SearchSpace& space,
                                const Dataset& train, const Dataset& val,
                                const SupernetTrainOptions& opts, std::uint64_t seed);

// Budget-constrained architecture search by exhaustive enumeration:
// among candidates with flops <= budget, picks the one whose extracted
// subnet scores highest on the validation set. Ties go to the cheaper
// candidate, then to the default ordering. Throws InfeasibleBudgetError
// if nothing fits.
ArchitectureConfig search(const SupernetWeights& weights, const SearchSpace& space,
                          ResourceBudget budget, const Dataset& val);

// The most expensive candidate that fits the budget (no accuracy signal);
// used for uniform-model baselines. Ties go to the default ordering.
ArchitectureConfig largest_feasible_arch(const SearchSpace& space, ResourceBudget budget);

// Versioned binary checkpoint of a trained pool.
void save_checkpoint(const std::string& path, const SearchSpace& space, const SupernetWeights& weights);
std::pair<SearchSpace, SupernetWeights> load_checkpoint(const std::string& path);

}  // namespace rafl
