#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace rafl {

// Shape mismatch between tensors/nets that are required to line up.
struct ShapeError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// API misuse: asking for labels of an unlabeled set, empty loss spec, etc.
struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Malformed external input (CSV rows, checkpoint bytes).
struct ParseError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Dirichlet partition could not satisfy the minimum-shard-size floor
// within the retry budget.
struct PartitionError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// No architecture in the search space fits the given FLOPs budget.
struct InfeasibleBudgetError : std::runtime_error {
    std::uint64_t budget_flops;
    std::uint64_t min_feasible_flops;

    InfeasibleBudgetError(std::uint64_t budget, std::uint64_t min_flops)
        : std::runtime_error("no architecture fits a budget of " + std::to_string(budget) +
                             " FLOPs; the smallest candidate needs " + std::to_string(min_flops)),
          budget_flops(budget),
          min_feasible_flops(min_flops) {}
};

// Carries every problem found in a config file, not just the first.
struct ConfigError : std::runtime_error {
    std::vector<std::string> errors;

    explicit ConfigError(std::vector<std::string> errs)
        : std::runtime_error(join(errs)), errors(std::move(errs)) {}

private:
    static std::string join(const std::vector<std::string>& errs) {
        std::string out = "config invalid (" + std::to_string(errs.size()) + " error(s)):";
        for (const auto& e : errs) {
            out += "\n  " + e;
        }
        return out;
    }
};

}  // namespace rafl
