#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "rafl/client.hpp"
#include "rafl/errors.hpp"
#include "rafl/rng.hpp"

using namespace rafl;

namespace {

SearchSpace small_space() {
    SearchSpace s;
    s.input_dim = 5;
    s.output_dim = 3;
    s.depth_options = {0, 1, 2};
    s.width_options = {2, 4};
    return s;
}

Dataset small_blobs(std::uint64_t seed) {
    BlobSpec spec;
    spec.samples = 150;
    spec.dims = 5;
    spec.classes = 3;
    spec.spread = 0.7;
    spec.seed = seed;
    return synth_blobs(spec);
}

Shard shard_of(std::size_t from, std::size_t count) {
    Shard s;
    for (std::size_t i = 0; i < count; ++i) s.indices.push_back(from + i);
    return s;
}

bool nets_equal(const NetworkParams& a, const NetworkParams& b) {
    if (a.layers.size() != b.layers.size()) return false;
    for (std::size_t k = 0; k < a.layers.size(); ++k) {
        if (a.layers[k].weight.values != b.layers[k].weight.values) return false;
        if (a.layers[k].bias != b.layers[k].bias) return false;
    }
    return true;
}

double max_param_diff(const NetworkParams& a, const NetworkParams& b) {
    double worst = 0.0;
    for (std::size_t k = 0; k < a.layers.size(); ++k) {
        for (std::size_t i = 0; i < a.layers[k].weight.values.size(); ++i) {
            worst = std::max(worst, std::abs(static_cast<double>(a.layers[k].weight.values[i]) -
                                             static_cast<double>(b.layers[k].weight.values[i])));
        }
        for (std::size_t i = 0; i < a.layers[k].bias.size(); ++i) {
            worst = std::max(worst, std::abs(static_cast<double>(a.layers[k].bias[i]) -
                                             static_cast<double>(b.layers[k].bias[i])));
        }
    }
    return worst;
}

}  // namespace

TEST_CASE("initialized clients always fit their budget") {
    const SearchSpace s = small_space();
    const SupernetWeights pool = init_supernet(s, 3);
    const Dataset val = small_blobs(4);
    const ArchitectureConfig kn{0, {}};  // 30 flops

    Rng rng = make_rng(55);
    for (int trial = 0; trial < 50; ++trial) {
        const std::uint64_t budget = 60 + uniform_index(rng, 120);
        const ClientState c =
            init_client(pool, s, ResourceBudget{budget}, kn, shard_of(0, 10), true, trial, val);
        CHECK(flops(s, c.arch) + flops(s, c.kn_arch) <= budget);
        CHECK(c.kn_arch == kn);
        CHECK(c.n_samples() == 10);
    }
}

TEST_CASE("infeasible client budgets report the total requirement") {
    const SearchSpace s = small_space();
    const SupernetWeights pool = init_supernet(s, 3);
    const Dataset val = small_blobs(4);
    const ArchitectureConfig kn{0, {}};  // 30 flops, cheapest residual 30 more
    try {
        init_client(pool, s, ResourceBudget{45}, kn, shard_of(0, 5), true, 1, val);
        FAIL("expected InfeasibleBudgetError");
    } catch (const InfeasibleBudgetError& e) {
        CHECK(e.budget_flops == 45);
        CHECK(e.min_feasible_flops == 60);  // knowledge net + cheapest local candidate
    }
    // Budget below even the knowledge network itself.
    CHECK_THROWS_AS(init_client(pool, s, ResourceBudget{20}, kn, shard_of(0, 5), true, 1, val),
                    InfeasibleBudgetError);
}

TEST_CASE("weight inheritance copies pool slices; fresh init is seeded") {
    const SearchSpace s = small_space();
    const SupernetWeights pool = init_supernet(s, 8);
    const Dataset val = small_blobs(9);
    const ArchitectureConfig kn{0, {}};

    const ClientState inherited =
        init_client(pool, s, ResourceBudget{200}, kn, shard_of(0, 8), true, 7, val);
    CHECK(nets_equal(inherited.local_model, extract_subnet(pool, s, inherited.arch)));
    CHECK(nets_equal(inherited.knowledge_net, extract_subnet(pool, s, kn)));

    const ClientState fresh_a =
        init_client(pool, s, ResourceBudget{200}, kn, shard_of(0, 8), false, 7, val);
    const ClientState fresh_b =
        init_client(pool, s, ResourceBudget{200}, kn, shard_of(0, 8), false, 7, val);
    const ClientState fresh_c =
        init_client(pool, s, ResourceBudget{200}, kn, shard_of(0, 8), false, 8, val);
    CHECK_FALSE(nets_equal(fresh_a.local_model, extract_subnet(pool, s, fresh_a.arch)));
    CHECK(nets_equal(fresh_a.local_model, fresh_b.local_model));
    CHECK(nets_equal(fresh_a.knowledge_net, fresh_b.knowledge_net));
    CHECK_FALSE(nets_equal(fresh_a.local_model, fresh_c.local_model));
}

TEST_CASE("one mutual step matches a scalar double-precision oracle") {
    // Two single-layer 2 -> 2 nets, one batch of two samples.
    const double x[2][2] = {{0.6, -0.4}, {-0.2, 0.9}};
    const int labels[2] = {0, 1};
    const double wa[2][2] = {{0.3, -0.1}, {0.2, 0.4}};
    const double ba[2] = {0.05, -0.02};
    const double wb[2][2] = {{-0.25, 0.15}, {0.1, -0.3}};
    const double bb[2] = {0.0, 0.12};
    const double lr = 0.1;

    const auto build = [](const double w[2][2], const double b[2]) {
        NetworkParams net = make_net({2, 2});
        for (std::size_t r = 0; r < 2; ++r) {
            for (std::size_t c = 0; c < 2; ++c) {
                net.layers[0].weight.at(r, c) = static_cast<float>(w[r][c]);
            }
            net.layers[0].bias[r] = static_cast<float>(b[r]);
        }
        return net;
    };

    Matrix inputs(2, 2);
    for (std::size_t r = 0; r < 2; ++r) {
        for (std::size_t c = 0; c < 2; ++c) inputs.at(r, c) = static_cast<float>(x[r][c]);
    }
    Dataset data = Dataset::labeled(inputs, {labels[0], labels[1]}, 2);

    ClientState client;
    client.id = 0;
    client.shard = shard_of(0, 2);
    client.local_model = build(wa, ba);
    client.knowledge_net = build(wb, bb);

    LocalTrainConfig cfg;
    cfg.epochs = 1;
    cfg.batch_size = 2;
    cfg.lr = static_cast<float>(lr);
    cfg.seed = 99;
    mutual_local_update(client, data, cfg);

    // Oracle: recompute both updates from the definitions, in double.
    // The epoch shuffle may reorder the two rows, but a full batch sees
    // both rows either way, and batch order only permutes the sum.
    double za[2][2];
    double zb[2][2];
    for (int r = 0; r < 2; ++r) {
        for (int o = 0; o < 2; ++o) {
            za[r][o] = ba[o] + x[r][0] * wa[o][0] + x[r][1] * wa[o][1];
            zb[r][o] = bb[o] + x[r][0] * wb[o][0] + x[r][1] * wb[o][1];
        }
    }
    double qa[2][2];
    double qb[2][2];
    for (int r = 0; r < 2; ++r) {
        const double da = std::exp(za[r][0]) + std::exp(za[r][1]);
        const double db = std::exp(zb[r][0]) + std::exp(zb[r][1]);
        for (int o = 0; o < 2; ++o) {
            qa[r][o] = std::exp(za[r][o]) / da;
            qb[r][o] = std::exp(zb[r][o]) / db;
        }
    }
    // Logit gradients: task term (q - onehot)/B plus mutual term
    // (q - peer distribution)/B; peers are the pre-step logits.
    double ga[2][2];
    double gb[2][2];
    for (int r = 0; r < 2; ++r) {
        for (int o = 0; o < 2; ++o) {
            const double onehot = labels[r] == o ? 1.0 : 0.0;
            ga[r][o] = (qa[r][o] - onehot) / 2.0 + (qa[r][o] - qb[r][o]) / 2.0;
            gb[r][o] = (qb[r][o] - onehot) / 2.0 + (qb[r][o] - qa[r][o]) / 2.0;
        }
    }
    double wa2[2][2];
    double ba2[2];
    double wb2[2][2];
    double bb2[2];
    for (int o = 0; o < 2; ++o) {
        for (int i = 0; i < 2; ++i) {
            double dwa = 0.0;
            double dwb = 0.0;
            for (int r = 0; r < 2; ++r) {
                dwa += ga[r][o] * x[r][i];
                dwb += gb[r][o] * x[r][i];
            }
            wa2[o][i] = wa[o][i] - lr * dwa;
            wb2[o][i] = wb[o][i] - lr * dwb;
        }
        ba2[o] = ba[o] - lr * (ga[0][o] + ga[1][o]);
        bb2[o] = bb[o] - lr * (gb[0][o] + gb[1][o]);
    }

    NetworkParams expect_a = build(wa2, ba2);
    NetworkParams expect_b = build(wb2, bb2);
    CHECK(max_param_diff(client.local_model, expect_a) < 1e-6);
    CHECK(max_param_diff(client.knowledge_net, expect_b) < 1e-6);
}

TEST_CASE("mutual learning with identical nets collapses to plain task training") {
    const SearchSpace s = small_space();
    const SupernetWeights pool = init_supernet(s, 12);
    const Dataset data = small_blobs(13);
    const ArchitectureConfig arch{1, {4}};
    const NetworkParams start = extract_subnet(pool, s, arch);

    ClientState mutual;
    mutual.id = 0;
    mutual.shard = shard_of(0, 50);
    mutual.local_model = start;
    mutual.knowledge_net = start;

    ClientState plain;
    plain.id = 0;
    plain.shard = shard_of(0, 50);
    plain.local_model = start;

    LocalTrainConfig cfg;
    cfg.epochs = 1;
    cfg.batch_size = 10;  // five batches
    cfg.lr = 0.05f;
    cfg.seed = 321;
    mutual_local_update(mutual, data, cfg);
    plain_local_update(plain, data, cfg);

    // With identical peers the mutual term vanishes, so both nets must
    // track an independent task-only learner on the same schedule.
    CHECK(max_param_diff(mutual.local_model, plain.local_model) < 1e-6);
    CHECK(max_param_diff(mutual.knowledge_net, plain.local_model) < 1e-6);
    CHECK_FALSE(nets_equal(plain.local_model, start));
}

TEST_CASE("local updates are deterministic in the schedule seed") {
    const SearchSpace s = small_space();
    const SupernetWeights pool = init_supernet(s, 22);
    const Dataset data = small_blobs(23);
    const Dataset val = subset(data, iota_indices(30));
    const ArchitectureConfig kn{0, {}};

    const auto run_once = [&](std::uint64_t seed) {
        ClientState c = init_client(pool, s, ResourceBudget{200}, kn, shard_of(10, 40), true, 5, val);
        c.id = 1;
        LocalTrainConfig cfg;
        cfg.epochs = 2;
        cfg.batch_size = 8;
        cfg.lr = 0.05f;
        cfg.seed = seed;
        mutual_local_update(c, data, cfg);
        return c;
    };
    const ClientState a = run_once(42);
    const ClientState b = run_once(42);
    const ClientState c = run_once(43);
    CHECK(nets_equal(a.local_model, b.local_model));
    CHECK(nets_equal(a.knowledge_net, b.knowledge_net));
    CHECK_FALSE(nets_equal(a.local_model, c.local_model));
}

TEST_CASE("both mutual losses fall over a few epochs") {
    const SearchSpace s = small_space();
    const SupernetWeights pool = init_supernet(s, 31);
    const Dataset data = small_blobs(32);
    const Dataset val = subset(data, iota_indices(30));

    ClientState c = init_client(pool, s, ResourceBudget{200}, {0, {}}, shard_of(0, 60), true, 2, val);
    c.id = 0;
    LocalTrainConfig cfg;
    cfg.epochs = 6;
    cfg.batch_size = 12;
    cfg.lr = 0.1f;
    cfg.seed = 77;
    const LocalTrainLog log = mutual_local_update(c, data, cfg);
    REQUIRE(log.model_loss.size() == 30);  // 5 batches x 6 epochs
    REQUIRE(log.knowledge_loss.size() == 30);
    CHECK(log.model_loss.back() < log.model_loss.front());
    CHECK(log.knowledge_loss.back() < log.knowledge_loss.front());
}

TEST_CASE("uploads are detached copies") {
    const SearchSpace s = small_space();
    const SupernetWeights pool = init_supernet(s, 41);
    const Dataset val = small_blobs(42);
    ClientState c = init_client(pool, s, ResourceBudget{200}, {0, {}}, shard_of(0, 12), true, 3, val);
    c.id = 9;

    const Upload up = upload_knowledge(c);
    CHECK(up.client_id == 9);
    CHECK(up.n_samples == 12);
    const float before = up.net.layers[0].weight.values[0];
    c.knowledge_net.layers[0].weight.values[0] = before + 42.0f;
    CHECK(up.net.layers[0].weight.values[0] == before);

    const Upload um = upload_model(c);
    CHECK(um.n_samples == 12);
    CHECK(nets_equal(um.net, c.local_model));
}

TEST_CASE("receiving global weights enforces matching architecture") {
    const SearchSpace s = small_space();
    const SupernetWeights pool = init_supernet(s, 51);
    const Dataset val = small_blobs(52);
    ClientState c = init_client(pool, s, ResourceBudget{200}, {0, {}}, shard_of(0, 10), true, 4, val);

    NetworkParams good = extract_subnet(pool, s, {0, {}});
    good.layers[0].weight.values[0] = 5.0f;
    receive_knowledge(c, good);
    CHECK(c.knowledge_net.layers[0].weight.values[0] == 5.0f);

    const NetworkParams wrong = extract_subnet(pool, s, {1, {2}});
    CHECK_THROWS_AS(receive_knowledge(c, wrong), ShapeError);
}

TEST_CASE("proximal training requires and uses the stored round-start weights") {
    const SearchSpace s = small_space();
    const SupernetWeights pool = init_supernet(s, 61);
    const Dataset data = small_blobs(62);
    const ArchitectureConfig arch{1, {4}};

    ClientState c;
    c.id = 0;
    c.shard = shard_of(0, 30);
    c.arch = arch;
    c.local_model = extract_subnet(pool, s, arch);

    LocalTrainConfig cfg;
    cfg.epochs = 1;
    cfg.batch_size = 10;
    cfg.lr = 0.05f;
    cfg.prox_mu = 0.5;
    cfg.seed = 7;
    CHECK_THROWS_AS(plain_local_update(c, data, cfg), UsageError);

    const NetworkParams global = extract_subnet(pool, s, arch);
    receive_model(c, global, true);
    REQUIRE(c.ref_model.has_value());
    plain_local_update(c, data, cfg);

    // The pull toward the anchor must leave the proximal run closer to the
    // round-start weights than an unconstrained run on the same schedule.
    ClientState free;
    free.id = 0;
    free.shard = shard_of(0, 30);
    free.arch = arch;
    free.local_model = global;
    LocalTrainConfig nocfg = cfg;
    nocfg.prox_mu = 0.0;
    plain_local_update(free, data, nocfg);
    CHECK(max_param_diff(c.local_model, global) < max_param_diff(free.local_model, global));

    receive_model(c, global, false);
    CHECK_FALSE(c.ref_model.has_value());
}

TEST_CASE("update rejects empty shards and bad settings") {
    const Dataset data = small_blobs(71);
    ClientState c;
    c.local_model = make_net({5, 3});
    LocalTrainConfig cfg;
    CHECK_THROWS_AS(plain_local_update(c, data, cfg), UsageError);
    c.shard = shard_of(0, 5);
    cfg.batch_size = 0;
    CHECK_THROWS_AS(plain_local_update(c, data, cfg), UsageError);
    cfg.batch_size = 4;
    cfg.lr = 0.0f;
    CHECK_THROWS_AS(plain_local_update(c, data, cfg), UsageError);
    cfg.lr = 0.1f;
    c.shard = shard_of(data.size() - 2, 4);  // runs past the end
    CHECK_THROWS_AS(plain_local_update(c, data, cfg), UsageError);
}
