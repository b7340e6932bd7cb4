#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <string>
#include <vector>

#include "rafl/config.hpp"

using namespace rafl;

namespace {

// Parses text expected to be rejected and returns the collected problems.
std::vector<std::string> problems_of(const std::string& text) {
    try {
        parse_config_text(text, "mem");
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        return e.errors;
    }
    return {};
}

bool mentions(const std::vector<std::string>& errs, const std::string& needle) {
    return std::any_of(errs.begin(), errs.end(), [&](const std::string& e) {
        return e.find(needle) != std::string::npos;
    });
}

}  // namespace

TEST_CASE("an empty config yields the documented defaults") {
    const ExperimentConfig cfg = parse_config_text("", "mem");
    CHECK(cfg.dataset.kind == "blobs");
    CHECK(cfg.dataset.samples == 4000);
    CHECK(cfg.dataset.dims == 16);
    CHECK(cfg.dataset.classes == 4);
    CHECK(cfg.dataset.spread == 1.0);
    CHECK(cfg.dataset.test_fraction == 0.2);
    CHECK(cfg.dataset.val_fraction == 0.1);
    CHECK(cfg.dataset.public_fraction == 0.1);
    CHECK(cfg.partition.alpha == 0.5);
    CHECK(cfg.partition.min_samples == 1);
    CHECK(cfg.federation.clients == 20);
    CHECK(cfg.federation.rounds == 60);
    CHECK(cfg.federation.participation == 0.5);
    CHECK(cfg.federation.churn == 0.0);
    CHECK(cfg.method.name == Method::resource_aware);
    CHECK(cfg.method.prox_mu == 0.0);
    CHECK(cfg.space.depths == std::vector<int>{1, 2});
    CHECK(cfg.space.widths == std::vector<int>{8, 16, 24, 32});
    CHECK(cfg.budgets.kind == "uniform");
    CHECK(cfg.budgets.low == 960);
    CHECK(cfg.budgets.high == 1600);
    CHECK(cfg.budgets.kn_budget == 320);
    CHECK(cfg.local.epochs == 1);
    CHECK(cfg.local.batch_size == 32);
    CHECK(cfg.local.lr == 0.05);
    CHECK(cfg.local.weight_decay == 0.0);
    CHECK(cfg.supernet.steps == 400);
    CHECK(cfg.supernet.archs_per_step == 4);
    CHECK(cfg.supernet.batch_size == 64);
    CHECK(cfg.supernet.inherit_weights);
    CHECK(cfg.supernet.checkpoint.empty());
    CHECK(cfg.distill.steps == 20);
    CHECK(cfg.distill.batch_size == 64);
    CHECK(cfg.output.target_accuracy == 0.0);
    CHECK(cfg.seed.master == 1);
    CHECK(cfg.needs_knowledge_net());
    CHECK_FALSE(cfg.needs_distillation());
}

TEST_CASE("keys, comments, and whitespace parse leniently") {
    const ExperimentConfig cfg = parse_config_text(
        "# leading comment\n"
        "[federation]\n"
        "  clients   =  12   ; trailing comment\n"
        "rounds=3\n"
        "\n"
        "[seed]\n"
        "master = 99\n",
        "mem");
    CHECK(cfg.federation.clients == 12);
    CHECK(cfg.federation.rounds == 3);
    CHECK(cfg.seed.master == 99);
}

TEST_CASE("canonical text round-trips exactly") {
    ExperimentConfig cfg;  // defaults
    const std::string once = canonical_text(cfg);
    const ExperimentConfig back = parse_config_text(once, "mem");
    CHECK(canonical_text(back) == once);

    ExperimentConfig custom;
    custom.dataset.spread = 0.3;
    custom.dataset.public_fraction = 0.25;
    custom.partition.alpha = 100.0;
    custom.federation.clients = 100;
    custom.federation.churn = 0.1;
    custom.method.name = Method::fedprox;
    custom.method.prox_mu = 0.01;
    custom.budgets.kind = "list";
    custom.budgets.list = {960, 1280, 1600};
    custom.supernet.checkpoint = "pool.ckpt";
    custom.supernet.inherit_weights = false;
    custom.output.target_accuracy = 0.7;
    custom.seed.master = 31337;
    const std::string text = canonical_text(custom);
    const ExperimentConfig parsed = parse_config_text(text, "mem");
    CHECK(canonical_text(parsed) == text);
    CHECK(parsed.method.name == Method::fedprox);
    CHECK(parsed.budgets.list == std::vector<std::uint64_t>{960, 1280, 1600});
    CHECK(parsed.supernet.checkpoint == "pool.ckpt");
    CHECK_FALSE(parsed.supernet.inherit_weights);

    ExperimentConfig csv;
    csv.dataset.kind = "csv";
    csv.dataset.csv_path = "data/train.csv";
    const std::string csv_text = canonical_text(csv);
    CHECK(canonical_text(parse_config_text(csv_text, "mem")) == csv_text);
}

TEST_CASE("every problem is collected with its location") {
    const auto errs = problems_of(
        "[dataset]\n"          // 1
        "kind = blobs\n"       // 2
        "samples = -5\n"       // 3
        "spread = abc\n"       // 4
        "\n"                   // 5
        "[federation]\n"       // 6
        "participation = 1.5\n"  // 7
        "\n"                   // 8
        "[nosuch]\n"           // 9
        "key = 1\n"            // 10
        "\n"                   // 11
        "[local]\n"            // 12
        "lr = 0.05\n"          // 13
        "lr = 0.06\n");        // 14
    CHECK(errs.size() == 5);
    CHECK(errs.front().find("mem:14: duplicate key 'local.lr'") != std::string::npos);
    CHECK(mentions(errs, "mem:3: dataset.samples: expected a non-negative integer, got '-5'"));
    CHECK(mentions(errs, "mem:4: dataset.spread: expected a real number, got 'abc'"));
    CHECK(mentions(errs, "mem:7: federation.participation: must lie in (0, 1]"));
    CHECK(mentions(errs, "mem:10: unknown key 'nosuch.key'"));

    // The exception text carries the full list too.
    try {
        parse_config_text("[federation]\nclients = 0\n", "boom.ini");
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        const std::string what = e.what();
        CHECK(what.find("1 error(s)") != std::string::npos);
        CHECK(what.find("boom.ini:2: federation.clients: must be positive") != std::string::npos);
    }
}

TEST_CASE("syntax problems carry their lines") {
    const auto errs = problems_of(
        "orphan = 1\n"
        "[broken\n"
        "just words\n");
    CHECK(mentions(errs, "mem:1: key outside any [section]"));
    CHECK(mentions(errs, "mem:2: malformed section header '[broken'"));
    CHECK(mentions(errs, "mem:3: expected 'key = value', got 'just words'"));
}

TEST_CASE("method cross-checks") {
    CHECK(mentions(problems_of("[method]\nname = fedprox\n"),
                   "method.prox_mu: must be positive for fedprox"));
    CHECK(mentions(problems_of("[method]\nname = fancynet\n"),
                   "mem:2: method.name: expected rafl, rafl_distill, fedavg, or fedprox"));
    CHECK(mentions(problems_of("[method]\nname = rafl_distill\n"
                               "[dataset]\npublic_fraction = 0\n"),
                   "distillation needs a public split"));
    CHECK(mentions(problems_of("[method]\nname = rafl_distill\n"
                               "[distill]\nsteps = 0\n"),
                   "mem:4: distill.steps: must be positive when distillation is on"));

    // fedavg does not require a knowledge-network budget.
    const ExperimentConfig avg = parse_config_text(
        "[method]\nname = fedavg\n[budgets]\nkn_budget = 0\n", "mem");
    CHECK_FALSE(avg.needs_knowledge_net());
}

TEST_CASE("budget and space cross-checks") {
    CHECK(mentions(problems_of("[budgets]\nkind = list\n"),
                   "budgets.list: required when budgets.kind = list"));
    CHECK(mentions(problems_of("[budgets]\nlow = 500\nhigh = 400\n"),
                   "mem:3: budgets.high: must be at least budgets.low"));
    CHECK(mentions(problems_of("[budgets]\nkind = lottery\n"),
                   "budgets.kind: expected uniform or list"));
    CHECK(mentions(problems_of("[budgets]\nkind = list\nlist = 100,0,300\n"),
                   "budgets.list: entries must be positive"));
    CHECK(mentions(problems_of("[space]\ndepths = 2,1\n"),
                   "space.depths: must be strictly ascending"));
    CHECK(mentions(problems_of("[space]\nwidths = 8,8,16\n"),
                   "space.widths: must be strictly ascending"));
    CHECK(mentions(problems_of("[space]\nwidths = 8,x,16\n"),
                   "mem:2: space.widths: bad integer 'x' in list"));
    CHECK(mentions(problems_of("[budgets]\nkn_budget = 0\n"),
                   "budgets.kn_budget: must be positive for resource-aware methods"));
}

TEST_CASE("fraction and schedule cross-checks") {
    CHECK(mentions(problems_of("[dataset]\ntest_fraction = 0.5\nval_fraction = 0.4\n"
                               "public_fraction = 0.2\n"),
                   "test, val, and public fractions must leave training data"));
    CHECK(mentions(problems_of("[dataset]\ntest_fraction = 0\n"),
                   "dataset.test_fraction: must lie in (0, 1)"));
    CHECK(mentions(problems_of("[federation]\nchurn = 1.0\n"),
                   "federation.churn: must lie in [0, 1)"));
    CHECK(mentions(problems_of("[local]\nbatch_size = 0\n"),
                   "local.batch_size: must be positive"));
    CHECK(mentions(problems_of("[supernet]\ninherit_weights = maybe\n"),
                   "mem:2: supernet.inherit_weights: expected true/false, got 'maybe'"));
    CHECK(mentions(problems_of("[output]\ntarget_accuracy = 1.2\n"),
                   "output.target_accuracy: must lie in [0, 1]"));
}
