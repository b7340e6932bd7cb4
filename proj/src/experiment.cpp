#include "rafl/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "rafl/errors.hpp"
#include "rafl/losses.hpp"
#include "rafl/rng.hpp"

namespace rafl {

std::string csv_line(const MetricsRow& row) {
    char buf[256];
    std::snprintf(buf, sizeof buf, "%d,%.9g,%.9g,%.9g,%llu,%llu,%llu,%llu", row.round,
                  row.global_kn_acc, row.mean_local_acc, row.mean_local_train_acc,
                  static_cast<unsigned long long>(row.bytes_up),
                  static_cast<unsigned long long>(row.bytes_down),
                  static_cast<unsigned long long>(row.cumulative_bytes),
                  static_cast<unsigned long long>(row.distinct_clients));
    return buf;
}

std::vector<MetricsRow> read_metrics_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path);
    std::string line;
    if (!std::getline(in, line)) throw ParseError(path + ": empty metrics file");
    if (line == std::string(kMetricsHeader) + "\r") line.pop_back();
    if (line != kMetricsHeader) {
        throw ParseError(path + ": unexpected metrics header '" + line + "'");
    }
    std::vector<MetricsRow> rows;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        if (cells.size() != 8) {
            throw ParseError(path + ":" + std::to_string(line_no) + ": expected 8 columns");
        }
        try {
            MetricsRow row;
            row.round = std::stoi(cells[0]);
            row.global_kn_acc = std::stod(cells[1]);
            row.mean_local_acc = std::stod(cells[2]);
            row.mean_local_train_acc = std::stod(cells[3]);
            row.bytes_up = std::stoull(cells[4]);
            row.bytes_down = std::stoull(cells[5]);
            row.cumulative_bytes = std::stoull(cells[6]);
            row.distinct_clients = std::stoull(cells[7]);
            rows.push_back(row);
        } catch (const std::exception&) {
            throw ParseError(path + ":" + std::to_string(line_no) + ": malformed row");
        }
    }
    if (rows.empty()) throw ParseError(path + ": no data rows");
    return rows;
}

Experiment::Experiment(ExperimentConfig cfg) : cfg_(std::move(cfg)) {
    target_.target_accuracy = cfg_.output.target_accuracy;
}

void Experiment::setup_data() {
    const std::uint64_t master = cfg_.seed.master;
    Dataset full;
    if (cfg_.dataset.kind == "csv") {
        full = load_csv(cfg_.dataset.csv_path);
    } else {
        BlobSpec spec;
        spec.samples = cfg_.dataset.samples;
        spec.dims = cfg_.dataset.dims;
        spec.classes = cfg_.dataset.classes;
        spec.spread = cfg_.dataset.spread;
        spec.seed = master;
        full = synth_blobs(spec);
    }

    // Fractions apply sequentially: test off the full set, val off the
    // remainder, then the public pool off what is left.
    Dataset rest;
    std::tie(rest, test_) =
        split_dataset(full, cfg_.dataset.test_fraction, derive_seed(master, SeedDomain::test_split));
    std::tie(rest, val_) =
        split_dataset(rest, cfg_.dataset.val_fraction, derive_seed(master, SeedDomain::val_split));
    if (cfg_.dataset.public_fraction > 0.0) {
        std::tie(train_, public_) = public_split(rest, cfg_.dataset.public_fraction,
                                                 derive_seed(master, SeedDomain::public_split));
    } else {
        train_ = std::move(rest);
    }
    if (test_.size() == 0 || val_.size() == 0 || train_.size() == 0) {
        throw UsageError("setup: a data split came out empty; adjust the fractions");
    }

    churn_per_round_ = static_cast<int>(std::floor(cfg_.federation.churn *
                                                   static_cast<double>(cfg_.federation.clients)));
    const int capacity =
        cfg_.federation.clients + churn_per_round_ * cfg_.federation.rounds;

    PartitionSpec pspec;
    pspec.n_clients = capacity;
    pspec.alpha = cfg_.partition.alpha;
    pspec.min_samples_per_client = cfg_.partition.min_samples;
    pspec.seed = derive_seed(master, SeedDomain::partition);
    auto shards = dirichlet_partition(train_, pspec);

    initial_shards_.assign(shards.begin(), shards.begin() + cfg_.federation.clients);
    reserve_shards_.assign(shards.begin() + cfg_.federation.clients, shards.end());
    data_ready_ = true;
}

void Experiment::setup_pool(bool force_train) {
    if (!data_ready_) throw UsageError("setup: data stage must run first");
    const std::uint64_t master = cfg_.seed.master;

    if (!cfg_.supernet.checkpoint.empty()) {
        auto [space, pool] = load_checkpoint(cfg_.supernet.checkpoint);
        if (space.input_dim != static_cast<int>(train_.dim()) ||
            space.output_dim != train_.class_count()) {
            throw UsageError("checkpoint was trained for " + std::to_string(space.input_dim) +
                             "-dim/" + std::to_string(space.output_dim) +
                             "-class data; this run has " + std::to_string(train_.dim()) + "/" +
                             std::to_string(train_.class_count()));
        }
        space_ = std::move(space);
        pool_ = std::move(pool);
        pool_ready_ = true;
        return;
    }

    space_.input_dim = static_cast<int>(train_.dim());
    space_.output_dim = train_.class_count();
    space_.depth_options = cfg_.space.depths;
    space_.width_options = cfg_.space.widths;
    space_.validate();

    pool_ = init_supernet(space_, master);

    // The shared pool has to be trained whenever its validation signal is
    // used: resource-aware runs search it per client, and any method may
    // inherit weights from it. A pure baseline with fresh initialization
    // never reads the trained weights, so training would be wasted work.
    const bool pool_is_read =
        force_train || cfg_.needs_knowledge_net() || cfg_.supernet.inherit_weights;
    if (pool_is_read && cfg_.supernet.steps > 0) {
        SupernetTrainOptions opts;
        opts.steps = cfg_.supernet.steps;
        opts.archs_per_step = cfg_.supernet.archs_per_step;
        opts.batch_size = cfg_.supernet.batch_size;
        opts.lr = static_cast<float>(cfg_.supernet.lr);
        pool_log_ = train_supernet(pool_, space_, train_, val_, opts, master);
    }
    pool_ready_ = true;
}

std::uint64_t Experiment::budget_for(int client_id) const {
    const auto& b = cfg_.budgets;
    if (b.kind == "list") {
        return b.list[static_cast<std::size_t>(client_id) % b.list.size()];
    }
    if (b.low == b.high) return b.low;
    Rng rng = make_rng(derive_seed(cfg_.seed.master, SeedDomain::client_budget,
                                   static_cast<std::uint64_t>(client_id)));
    return b.low + uniform_index(rng, b.high - b.low + 1);
}

ClientState Experiment::mint_client(int id, Shard shard) {
    const std::uint64_t master = cfg_.seed.master;
    const ResourceBudget budget{budget_for(id)};
    const std::uint64_t init_seed =
        derive_seed(master, SeedDomain::client_init, static_cast<std::uint64_t>(id));

    if (cfg_.needs_knowledge_net()) {
        ClientState c = init_client(pool_, space_, budget, global_arch_, std::move(shard),
                                    cfg_.supernet.inherit_weights, init_seed, val_);
        c.id = id;
        return c;
    }

    // Uniform-model baseline: every client runs the shared architecture.
    if (flops(space_, global_arch_) > budget.max_flops) {
        throw InfeasibleBudgetError(budget.max_flops, flops(space_, global_arch_));
    }
    ClientState c;
    c.id = id;
    c.shard = std::move(shard);
    c.budget = budget;
    c.arch = global_arch_;
    c.local_model = extract_subnet(pool_, space_, global_arch_);
    if (!cfg_.supernet.inherit_weights) {
        Rng rng = make_rng(derive_seed(init_seed, SeedDomain::client_init, 0));
        init_params(c.local_model, rng);
    }
    return c;
}

void Experiment::setup_registry() {
    if (!pool_ready_) throw UsageError("setup: pool stage must run first");
    const std::uint64_t master = cfg_.seed.master;

    // The smallest budget the run can ever hand out; clients minted by
    // churn draw from the same source, so feasibility is checked against
    // this floor up front.
    std::uint64_t budget_floor = 0;
    if (cfg_.budgets.kind == "list") {
        budget_floor = *std::min_element(cfg_.budgets.list.begin(), cfg_.budgets.list.end());
    } else {
        budget_floor = cfg_.budgets.low;
    }

    std::vector<std::string> problems;
    if (cfg_.needs_knowledge_net()) {
        try {
            global_arch_ = search(pool_, space_, ResourceBudget{cfg_.budgets.kn_budget}, val_);
        } catch (const InfeasibleBudgetError& e) {
            throw ConfigError({"budgets.kn_budget: " + std::string(e.what())});
        }
        const std::uint64_t required = flops(space_, global_arch_) + min_flops(space_);
        if (budget_floor < required) {
            problems.push_back("budgets: floor of " + std::to_string(budget_floor) +
                               " FLOPs cannot host the knowledge network plus the smallest "
                               "local model (" + std::to_string(required) + " FLOPs)");
        }
    } else {
        try {
            global_arch_ = largest_feasible_arch(space_, ResourceBudget{budget_floor});
        } catch (const InfeasibleBudgetError& e) {
            throw ConfigError({"budgets: " + std::string(e.what())});
        }
    }

    global_net_ = extract_subnet(pool_, space_, global_arch_);
    if (!cfg_.supernet.inherit_weights) {
        Rng rng = make_rng(derive_seed(master, SeedDomain::global_init));
        init_params(global_net_, rng);
    }

    registry_.clear();
    next_client_id_ = 0;
    if (problems.empty()) {
        for (int i = 0; i < cfg_.federation.clients; ++i) {
            try {
                registry_.push_back(mint_client(i, initial_shards_[static_cast<std::size_t>(i)]));
            } catch (const InfeasibleBudgetError& e) {
                problems.push_back("client " + std::to_string(i) + ": " + e.what());
            }
        }
    }
    if (!problems.empty()) throw ConfigError(std::move(problems));
    next_client_id_ = cfg_.federation.clients;
    registry_ready_ = true;
}

void Experiment::setup() {
    setup_data();
    setup_pool();
    setup_registry();
}

Shard Experiment::next_shard() {
    if (reserve_shards_.empty()) {
        throw UsageError("churn: shard stream exhausted; rounds exceed the provisioned capacity");
    }
    Shard s = std::move(reserve_shards_.front());
    reserve_shards_.pop_front();
    return s;
}

void Experiment::churn_step() {
    if (churn_per_round_ <= 0) return;
    Rng rng = make_rng(derive_seed(cfg_.seed.master, SeedDomain::churn,
                                   static_cast<std::uint64_t>(round_)));
    auto victims = sample_without_replacement(registry_.size(),
                                              static_cast<std::size_t>(churn_per_round_), rng);
    std::sort(victims.begin(), victims.end());
    for (std::size_t pos : victims) {
        registry_[pos] = mint_client(next_client_id_, next_shard());
        ++next_client_id_;
    }
}

double Experiment::evaluate(const NetworkParams& net, const Dataset& data) const {
    return accuracy(net, data.inputs(), data.labels());
}

MetricsRow Experiment::run_round() {
    if (!registry_ready_) throw UsageError("run_round: call setup first");
    if (round_ >= cfg_.federation.rounds) {
        throw UsageError("run_round: configured rounds already completed");
    }
    ++round_;
    const std::uint64_t master = cfg_.seed.master;

    // Population churn happens at the top of every round, before sampling.
    churn_step();

    Rng sel_rng = make_rng(derive_seed(master, SeedDomain::selection,
                                       static_cast<std::uint64_t>(round_)));
    const auto selected = select_clients(registry_.size(), cfg_.federation.participation, sel_rng);

    const std::uint64_t down_bytes_each = bytes_of(global_net_);
    std::vector<Upload> uploads;
    uploads.reserve(selected.size());
    double train_acc_sum = 0.0;
    for (std::size_t pos : selected) {
        ClientState& c = registry_[pos];
        LocalTrainConfig ltc;
        ltc.epochs = cfg_.local.epochs;
        ltc.batch_size = cfg_.local.batch_size;
        ltc.lr = static_cast<float>(cfg_.local.lr);
        ltc.weight_decay = static_cast<float>(cfg_.local.weight_decay);
        ltc.seed = derive_seed(master, SeedDomain::local_update, static_cast<std::uint64_t>(c.id),
                               static_cast<std::uint64_t>(round_));
        if (cfg_.needs_knowledge_net()) {
            receive_knowledge(c, global_net_);
            mutual_local_update(c, train_, ltc);
            uploads.push_back(upload_knowledge(c));
        } else {
            receive_model(c, global_net_, cfg_.method.name == Method::fedprox);
            ltc.prox_mu = cfg_.method.name == Method::fedprox ? cfg_.method.prox_mu : 0.0;
            plain_local_update(c, train_, ltc);
            uploads.push_back(upload_model(c));
        }
        const Batch shard_batch = batch_from(train_, c.shard.indices);
        train_acc_sum += accuracy(c.local_model, shard_batch.inputs, shard_batch.labels);
    }

    const std::uint64_t up_bytes_each = bytes_of(uploads.front().net);
    global_net_ = aggregate(uploads);

    if (cfg_.needs_distillation()) {
        std::vector<const NetworkParams*> teachers;
        teachers.reserve(uploads.size());
        for (const auto& u : uploads) teachers.push_back(&u.net);
        DistillOptions dopts;
        dopts.steps = cfg_.distill.steps;
        dopts.batch_size = cfg_.distill.batch_size;
        dopts.lr = static_cast<float>(cfg_.distill.lr);
        dopts.seed = derive_seed(master, SeedDomain::distill, static_cast<std::uint64_t>(round_));
        ensemble_distill(global_net_, teachers, public_, dopts);
    }

    ledger_.record_round(round_, selected.size(), up_bytes_each, down_bytes_each);

    MetricsRow row;
    row.round = round_;
    row.global_kn_acc = evaluate(global_net_, test_);
    double local_sum = 0.0;
    for (const auto& c : registry_) local_sum += evaluate(c.local_model, test_);
    row.mean_local_acc = local_sum / static_cast<double>(registry_.size());
    row.mean_local_train_acc = train_acc_sum / static_cast<double>(selected.size());
    const auto& ledger_row = ledger_.rows.back();
    row.bytes_up = ledger_row.bytes_up;
    row.bytes_down = ledger_row.bytes_down;
    row.cumulative_bytes = ledger_row.cumulative;
    row.distinct_clients = static_cast<std::uint64_t>(next_client_id_);

    target_.observe(round_, row.global_kn_acc, ledger_);
    return row;
}

UtilizationReport Experiment::utilization() const {
    if (!registry_ready_) throw UsageError("utilization: call setup first");
    return utilization_report(registry_, space_, cfg_.needs_knowledge_net());
}

}  // namespace rafl
