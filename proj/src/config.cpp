#include "rafl/config.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace rafl {

std::string to_string(Method m) {
    switch (m) {
        case Method::resource_aware: return "rafl";
        case Method::resource_aware_distill: return "rafl_distill";
        case Method::fedavg: return "fedavg";
        case Method::fedprox: return "fedprox";
    }
    throw UsageError("unknown method enum value");
}

namespace {

std::string trim(const std::string& s) {
    std::size_t a = 0;
    std::size_t b = s.size();
    while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
    while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
    return s.substr(a, b - a);
}

// Parsed key/value store plus the error accumulator every typed getter
// reports into.
class IniReader {
public:
    IniReader(const std::string& text, std::string source) : source_(std::move(source)) {
        std::istringstream in(text);
        std::string line;
        int line_no = 0;
        std::string section;
        while (std::getline(in, line)) {
            ++line_no;
            const auto comment = line.find_first_of("#;");
            if (comment != std::string::npos) line = line.substr(0, comment);
            line = trim(line);
            if (line.empty()) continue;
            if (line.front() == '[') {
                if (line.back() != ']' || line.size() < 3) {
                    error(line_no, "malformed section header '" + line + "'");
                    section.clear();
                    continue;
                }
                section = trim(line.substr(1, line.size() - 2));
                sections_seen_.insert(section);
                continue;
            }
            const auto eq = line.find('=');
            if (eq == std::string::npos) {
                error(line_no, "expected 'key = value', got '" + line + "'");
                continue;
            }
            if (section.empty()) {
                error(line_no, "key outside any [section]");
                continue;
            }
            const std::string key = trim(line.substr(0, eq));
            const std::string value = trim(line.substr(eq + 1));
            if (key.empty()) {
                error(line_no, "empty key");
                continue;
            }
            const std::string full = section + "." + key;
            if (entries_.count(full)) {
                error(line_no, "duplicate key '" + full + "' (first at line " +
                                   std::to_string(entries_[full].line) + ")");
                continue;
            }
            entries_[full] = {value, line_no};
        }
    }

    void error(int line, const std::string& msg) {
        errors_.push_back(source_ + ":" + std::to_string(line) + ": " + msg);
    }

    void error(const std::string& msg) { errors_.push_back(source_ + ": " + msg); }

    bool has(const std::string& full_key) const { return entries_.count(full_key) != 0; }

    // Each getter marks the key as consumed; anything left over at the end
    // is reported as unknown.
    std::string get_string(const std::string& key, const std::string& fallback) {
        const auto it = entries_.find(key);
        if (it == entries_.end()) return fallback;
        consumed_.insert(key);
        return it->second.value;
    }

    double get_real(const std::string& key, double fallback) {
        const auto it = entries_.find(key);
        if (it == entries_.end()) return fallback;
        consumed_.insert(key);
        try {
            std::size_t used = 0;
            const double v = std::stod(it->second.value, &used);
            if (used != it->second.value.size()) throw std::invalid_argument("trailing junk");
            return v;
        } catch (const std::exception&) {
            error(it->second.line, key + ": expected a real number, got '" + it->second.value + "'");
            return fallback;
        }
    }

    std::int64_t get_int(const std::string& key, std::int64_t fallback) {
        const auto it = entries_.find(key);
        if (it == entries_.end()) return fallback;
        consumed_.insert(key);
        try {
            std::size_t used = 0;
            const std::int64_t v = std::stoll(it->second.value, &used);
            if (used != it->second.value.size()) throw std::invalid_argument("trailing junk");
            return v;
        } catch (const std::exception&) {
            error(it->second.line, key + ": expected an integer, got '" + it->second.value + "'");
            return fallback;
        }
    }

    std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) {
        const auto it = entries_.find(key);
        if (it == entries_.end()) return fallback;
        consumed_.insert(key);
        try {
            if (!it->second.value.empty() && it->second.value.front() == '-') {
                throw std::invalid_argument("negative");
            }
            std::size_t used = 0;
            const std::uint64_t v = std::stoull(it->second.value, &used);
            if (used != it->second.value.size()) throw std::invalid_argument("trailing junk");
            return v;
        } catch (const std::exception&) {
            error(it->second.line,
                  key + ": expected a non-negative integer, got '" + it->second.value + "'");
            return fallback;
        }
    }

    bool get_bool(const std::string& key, bool fallback) {
        const auto it = entries_.find(key);
        if (it == entries_.end()) return fallback;
        consumed_.insert(key);
        const std::string& v = it->second.value;
        if (v == "true" || v == "1") return true;
        if (v == "false" || v == "0") return false;
        error(it->second.line, key + ": expected true/false, got '" + v + "'");
        return fallback;
    }

    template <class T, class Convert>
    std::vector<T> get_list(const std::string& key, std::vector<T> fallback, Convert convert,
                            const char* kind) {
        const auto it = entries_.find(key);
        if (it == entries_.end()) return fallback;
        consumed_.insert(key);
        std::vector<T> out;
        std::stringstream ss(it->second.value);
        std::string cell;
        while (std::getline(ss, cell, ',')) {
            cell = trim(cell);
            try {
                std::size_t used = 0;
                out.push_back(convert(cell, &used));
                if (used != cell.size()) throw std::invalid_argument("trailing junk");
            } catch (const std::exception&) {
                error(it->second.line, key + ": bad " + kind + " '" + cell + "' in list");
                return fallback;
            }
        }
        if (out.empty()) {
            error(it->second.line, key + ": empty list");
            return fallback;
        }
        return out;
    }

    int line_of(const std::string& key) const {
        const auto it = entries_.find(key);
        return it == entries_.end() ? 0 : it->second.line;
    }

    // Reports unconsumed keys, then throws if anything at all went wrong.
    void finish() {
        for (const auto& [key, entry] : entries_) {
            if (!consumed_.count(key)) {
                error(entry.line, "unknown key '" + key + "'");
            }
        }
        if (!errors_.empty()) throw ConfigError(std::move(errors_));
    }

private:
    struct Entry {
        std::string value;
        int line = 0;
    };

    std::string source_;
    std::map<std::string, Entry> entries_;
    std::set<std::string> sections_seen_;
    std::set<std::string> consumed_;
    std::vector<std::string> errors_;
};

int to_i(const std::string& s, std::size_t* used) { return std::stoi(s, used); }
std::uint64_t to_u64(const std::string& s, std::size_t* used) {
    if (!s.empty() && s.front() == '-') throw std::invalid_argument("negative");
    return std::stoull(s, used);
}

}  // namespace

ExperimentConfig parse_config_text(const std::string& text, const std::string& source_name) {
    IniReader r(text, source_name);
    ExperimentConfig cfg;

    auto& ds = cfg.dataset;
    ds.kind = r.get_string("dataset.kind", ds.kind);
    ds.samples = r.get_u64("dataset.samples", ds.samples);
    ds.dims = r.get_u64("dataset.dims", ds.dims);
    ds.classes = static_cast<int>(r.get_int("dataset.classes", ds.classes));
    ds.spread = r.get_real("dataset.spread", ds.spread);
    ds.csv_path = r.get_string("dataset.csv_path", ds.csv_path);
    ds.test_fraction = r.get_real("dataset.test_fraction", ds.test_fraction);
    ds.val_fraction = r.get_real("dataset.val_fraction", ds.val_fraction);
    ds.public_fraction = r.get_real("dataset.public_fraction", ds.public_fraction);

    cfg.partition.alpha = r.get_real("partition.alpha", cfg.partition.alpha);
    cfg.partition.min_samples = r.get_u64("partition.min_samples", cfg.partition.min_samples);

    auto& fed = cfg.federation;
    fed.clients = static_cast<int>(r.get_int("federation.clients", fed.clients));
    fed.rounds = static_cast<int>(r.get_int("federation.rounds", fed.rounds));
    fed.participation = r.get_real("federation.participation", fed.participation);
    fed.churn = r.get_real("federation.churn", fed.churn);

    const std::string method_name = r.get_string("method.name", "rafl");
    if (method_name == "rafl") {
        cfg.method.name = Method::resource_aware;
    } else if (method_name == "rafl_distill") {
        cfg.method.name = Method::resource_aware_distill;
    } else if (method_name == "fedavg") {
        cfg.method.name = Method::fedavg;
    } else if (method_name == "fedprox") {
        cfg.method.name = Method::fedprox;
    } else {
        r.error(r.line_of("method.name"),
                "method.name: expected rafl, rafl_distill, fedavg, or fedprox, got '" +
                    method_name + "'");
    }
    cfg.method.prox_mu = r.get_real("method.prox_mu", cfg.method.prox_mu);

    cfg.space.depths = r.get_list<int>("space.depths", cfg.space.depths, to_i, "integer");
    cfg.space.widths = r.get_list<int>("space.widths", cfg.space.widths, to_i, "integer");

    auto& b = cfg.budgets;
    b.kind = r.get_string("budgets.kind", b.kind);
    b.low = r.get_u64("budgets.low", b.low);
    b.high = r.get_u64("budgets.high", b.high);
    b.list = r.get_list<std::uint64_t>("budgets.list", b.list, to_u64, "budget");
    b.kn_budget = r.get_u64("budgets.kn_budget", b.kn_budget);

    auto& loc = cfg.local;
    loc.epochs = static_cast<int>(r.get_int("local.epochs", loc.epochs));
    loc.batch_size = static_cast<int>(r.get_int("local.batch_size", loc.batch_size));
    loc.lr = r.get_real("local.lr", loc.lr);
    loc.weight_decay = r.get_real("local.weight_decay", loc.weight_decay);

    auto& sn = cfg.supernet;
    sn.steps = static_cast<int>(r.get_int("supernet.steps", sn.steps));
    sn.archs_per_step = static_cast<int>(r.get_int("supernet.archs_per_step", sn.archs_per_step));
    sn.batch_size = static_cast<int>(r.get_int("supernet.batch_size", sn.batch_size));
    sn.lr = r.get_real("supernet.lr", sn.lr);
    sn.inherit_weights = r.get_bool("supernet.inherit_weights", sn.inherit_weights);
    sn.checkpoint = r.get_string("supernet.checkpoint", sn.checkpoint);

    auto& dist = cfg.distill;
    dist.steps = static_cast<int>(r.get_int("distill.steps", dist.steps));
    dist.batch_size = static_cast<int>(r.get_int("distill.batch_size", dist.batch_size));
    dist.lr = r.get_real("distill.lr", dist.lr);

    cfg.output.target_accuracy = r.get_real("output.target_accuracy", cfg.output.target_accuracy);
    cfg.seed.master = r.get_u64("seed.master", cfg.seed.master);

    // Range and cross-field checks, all collected before throwing.
    auto check = [&r](bool ok, const std::string& key, const std::string& msg) {
        if (!ok) {
            const int line = r.line_of(key);
            if (line > 0) {
                r.error(line, key + ": " + msg);
            } else {
                r.error(key + ": " + msg);
            }
        }
    };

    check(ds.kind == "blobs" || ds.kind == "csv", "dataset.kind", "expected blobs or csv");
    if (ds.kind == "blobs") {
        check(ds.samples > 0, "dataset.samples", "must be positive");
        check(ds.dims > 0, "dataset.dims", "must be positive");
        check(ds.classes > 1, "dataset.classes", "need at least two classes");
        check(ds.spread > 0.0, "dataset.spread", "must be positive");
    } else {
        check(!ds.csv_path.empty(), "dataset.csv_path", "required when dataset.kind = csv");
    }
    check(ds.test_fraction > 0.0 && ds.test_fraction < 1.0, "dataset.test_fraction",
          "must lie in (0, 1)");
    check(ds.val_fraction > 0.0 && ds.val_fraction < 1.0, "dataset.val_fraction",
          "must lie in (0, 1)");
    check(ds.public_fraction >= 0.0 && ds.public_fraction < 1.0, "dataset.public_fraction",
          "must lie in [0, 1)");
    check(ds.test_fraction + ds.val_fraction + ds.public_fraction < 1.0, "dataset.test_fraction",
          "test, val, and public fractions must leave training data");

    check(cfg.partition.alpha > 0.0, "partition.alpha", "must be positive");
    check(cfg.partition.min_samples >= 1, "partition.min_samples", "must be at least 1");

    check(fed.clients > 0, "federation.clients", "must be positive");
    check(fed.rounds > 0, "federation.rounds", "must be positive");
    check(fed.participation > 0.0 && fed.participation <= 1.0, "federation.participation",
          "must lie in (0, 1]");
    check(fed.churn >= 0.0 && fed.churn < 1.0, "federation.churn", "must lie in [0, 1)");

    if (cfg.method.name == Method::fedprox) {
        check(cfg.method.prox_mu > 0.0, "method.prox_mu", "must be positive for fedprox");
    }
    check(cfg.method.prox_mu >= 0.0, "method.prox_mu", "must be non-negative");

    auto ascending = [](const std::vector<int>& v) {
        return std::is_sorted(v.begin(), v.end()) &&
               std::adjacent_find(v.begin(), v.end()) == v.end();
    };
    check(ascending(cfg.space.depths) && cfg.space.depths.front() >= 0, "space.depths",
          "must be strictly ascending and non-negative");
    check(ascending(cfg.space.widths) && cfg.space.widths.front() > 0, "space.widths",
          "must be strictly ascending and positive");

    check(b.kind == "uniform" || b.kind == "list", "budgets.kind", "expected uniform or list");
    if (b.kind == "uniform") {
        check(b.low > 0, "budgets.low", "must be positive");
        check(b.high >= b.low, "budgets.high", "must be at least budgets.low");
    } else {
        check(!b.list.empty(), "budgets.list", "required when budgets.kind = list");
        for (std::uint64_t v : b.list) {
            check(v > 0, "budgets.list", "entries must be positive");
            if (v == 0) break;
        }
    }
    if (cfg.needs_knowledge_net()) {
        check(b.kn_budget > 0, "budgets.kn_budget", "must be positive for resource-aware methods");
    }

    check(loc.epochs > 0, "local.epochs", "must be positive");
    check(loc.batch_size > 0, "local.batch_size", "must be positive");
    check(loc.lr > 0.0, "local.lr", "must be positive");
    check(loc.weight_decay >= 0.0, "local.weight_decay", "must be non-negative");

    check(sn.steps >= 0, "supernet.steps", "must be non-negative");
    check(sn.archs_per_step > 0, "supernet.archs_per_step", "must be positive");
    check(sn.batch_size > 0, "supernet.batch_size", "must be positive");
    check(sn.lr > 0.0, "supernet.lr", "must be positive");

    if (cfg.needs_distillation()) {
        check(dist.steps > 0, "distill.steps", "must be positive when distillation is on");
        check(ds.public_fraction > 0.0, "dataset.public_fraction",
              "distillation needs a public split");
    }
    check(dist.steps >= 0, "distill.steps", "must be non-negative");
    check(dist.batch_size > 0, "distill.batch_size", "must be positive");
    check(dist.lr > 0.0, "distill.lr", "must be positive");

    check(cfg.output.target_accuracy >= 0.0 && cfg.output.target_accuracy <= 1.0,
          "output.target_accuracy", "must lie in [0, 1]");

    r.finish();
    return cfg;
}

ExperimentConfig parse_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config_text(ss.str(), path);
}

namespace {

std::string real_str(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

template <class T>
std::string list_str(const std::vector<T>& v) {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) out += ",";
        out += std::to_string(v[i]);
    }
    return out;
}

}  // namespace

std::string canonical_text(const ExperimentConfig& cfg) {
    std::ostringstream out;
    out << "[dataset]\n";
    out << "kind = " << cfg.dataset.kind << "\n";
    if (cfg.dataset.kind == "csv") {
        out << "csv_path = " << cfg.dataset.csv_path << "\n";
    } else {
        out << "samples = " << cfg.dataset.samples << "\n";
        out << "dims = " << cfg.dataset.dims << "\n";
        out << "classes = " << cfg.dataset.classes << "\n";
        out << "spread = " << real_str(cfg.dataset.spread) << "\n";
    }
    out << "test_fraction = " << real_str(cfg.dataset.test_fraction) << "\n";
    out << "val_fraction = " << real_str(cfg.dataset.val_fraction) << "\n";
    out << "public_fraction = " << real_str(cfg.dataset.public_fraction) << "\n";
    out << "\n[partition]\n";
    out << "alpha = " << real_str(cfg.partition.alpha) << "\n";
    out << "min_samples = " << cfg.partition.min_samples << "\n";
    out << "\n[federation]\n";
    out << "clients = " << cfg.federation.clients << "\n";
    out << "rounds = " << cfg.federation.rounds << "\n";
    out << "participation = " << real_str(cfg.federation.participation) << "\n";
    out << "churn = " << real_str(cfg.federation.churn) << "\n";
    out << "\n[method]\n";
    out << "name = " << to_string(cfg.method.name) << "\n";
    if (cfg.method.prox_mu > 0.0) out << "prox_mu = " << real_str(cfg.method.prox_mu) << "\n";
    out << "\n[space]\n";
    out << "depths = " << list_str(cfg.space.depths) << "\n";
    out << "widths = " << list_str(cfg.space.widths) << "\n";
    out << "\n[budgets]\n";
    out << "kind = " << cfg.budgets.kind << "\n";
    if (cfg.budgets.kind == "list") {
        out << "list = " << list_str(cfg.budgets.list) << "\n";
    } else {
        out << "low = " << cfg.budgets.low << "\n";
        out << "high = " << cfg.budgets.high << "\n";
    }
    out << "kn_budget = " << cfg.budgets.kn_budget << "\n";
    out << "\n[local]\n";
    out << "epochs = " << cfg.local.epochs << "\n";
    out << "batch_size = " << cfg.local.batch_size << "\n";
    out << "lr = " << real_str(cfg.local.lr) << "\n";
    out << "weight_decay = " << real_str(cfg.local.weight_decay) << "\n";
    out << "\n[supernet]\n";
    out << "steps = " << cfg.supernet.steps << "\n";
    out << "archs_per_step = " << cfg.supernet.archs_per_step << "\n";
    out << "batch_size = " << cfg.supernet.batch_size << "\n";
    out << "lr = " << real_str(cfg.supernet.lr) << "\n";
    out << "inherit_weights = " << (cfg.supernet.inherit_weights ? "true" : "false") << "\n";
    if (!cfg.supernet.checkpoint.empty()) out << "checkpoint = " << cfg.supernet.checkpoint << "\n";
    out << "\n[distill]\n";
    out << "steps = " << cfg.distill.steps << "\n";
    out << "batch_size = " << cfg.distill.batch_size << "\n";
    out << "lr = " << real_str(cfg.distill.lr) << "\n";
    out << "\n[output]\n";
    out << "target_accuracy = " << real_str(cfg.output.target_accuracy) << "\n";
    out << "\n[seed]\n";
    out << "master = " << cfg.seed.master << "\n";
    return out.str();
}

}  // namespace rafl
