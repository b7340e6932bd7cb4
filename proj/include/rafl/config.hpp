#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "rafl/errors.hpp"

namespace rafl {

enum class Method {
    resource_aware,          // budgeted subnets + mutual learning + kn aggregation
    resource_aware_distill,  // same, plus server-side ensemble distillation
    fedavg,
    fedprox,
};

std::string to_string(Method m);

// Everything a run needs, straight from the INI-style config file.
// parse_config collects every problem it finds (with file:line locations)
// and throws a single ConfigError listing them all.
struct ExperimentConfig {
    struct DatasetSection {
        std::string kind = "blobs";  // blobs | csv
        std::uint64_t samples = 4000;
        std::uint64_t dims = 16;
        int classes = 4;
        double spread = 1.0;
        std::string csv_path;
        double test_fraction = 0.2;
        double val_fraction = 0.1;
        double public_fraction = 0.1;
    } dataset;

    struct PartitionSection {
        double alpha = 0.5;
        std::uint64_t min_samples = 1;
    } partition;

    struct FederationSection {
        int clients = 20;
        int rounds = 60;
        double participation = 0.5;
        double churn = 0.0;
    } federation;

    struct MethodSection {
        Method name = Method::resource_aware;
        double prox_mu = 0.0;
    } method;

    struct SpaceSection {
        std::vector<int> depths = {1, 2};
        std::vector<int> widths = {8, 16, 24, 32};
    } space;

    struct BudgetsSection {
        std::string kind = "uniform";  // uniform | list
        std::uint64_t low = 960;       // inclusive range, kind = uniform
        std::uint64_t high = 1600;
        std::vector<std::uint64_t> list;  // cycled by client id, kind = list
        std::uint64_t kn_budget = 320;    // knowledge network budget
    } budgets;

    struct LocalSection {
        int epochs = 1;
        int batch_size = 32;
        double lr = 0.05;
        double weight_decay = 0.0;
    } local;

    struct SupernetSection {
        int steps = 400;
        int archs_per_step = 4;
        int batch_size = 64;
        double lr = 0.05;
        bool inherit_weights = true;
        std::string checkpoint;  // load instead of training when set
    } supernet;

    struct DistillSection {
        int steps = 20;
        int batch_size = 64;
        double lr = 0.05;
    } distill;

    struct OutputSection {
        double target_accuracy = 0.0;  // 0 disables the target tracker
    } output;

    struct SeedSection {
        std::uint64_t master = 1;
    } seed;

    bool needs_knowledge_net() const {
        return method.name == Method::resource_aware || method.name == Method::resource_aware_distill;
    }
    bool needs_distillation() const { return method.name == Method::resource_aware_distill; }
};

ExperimentConfig parse_config_text(const std::string& text, const std::string& source_name);
ExperimentConfig parse_config_file(const std::string& path);

// Fixed-order rendering that parses back to an identical config; reals are
// printed with enough digits to round-trip.
std::string canonical_text(const ExperimentConfig& cfg);

}  // namespace rafl
