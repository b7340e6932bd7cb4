#include "rafl/supernet.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>

#include "rafl/errors.hpp"
#include "rafl/losses.hpp"
#include "rafl/rng.hpp"

namespace rafl {

std::string to_string(const ArchitectureConfig& arch) {
    std::string s = "d" + std::to_string(arch.depth) + "[";
    for (std::size_t i = 0; i < arch.widths.size(); ++i) {
        if (i) s += ",";
        s += std::to_string(arch.widths[i]);
    }
    return s + "]";
}

void SearchSpace::validate() const {
    if (input_dim <= 0 || output_dim <= 0) {
        throw UsageError("search space: input and output dims must be positive");
    }
    if (depth_options.empty() || width_options.empty()) {
        throw UsageError("search space: depth and width options must be non-empty");
    }
    if (!std::is_sorted(depth_options.begin(), depth_options.end()) ||
        std::adjacent_find(depth_options.begin(), depth_options.end()) != depth_options.end()) {
        throw UsageError("search space: depth options must be strictly ascending");
    }
    if (depth_options.front() < 0) throw UsageError("search space: negative depth");
    if (!std::is_sorted(width_options.begin(), width_options.end()) ||
        std::adjacent_find(width_options.begin(), width_options.end()) != width_options.end()) {
        throw UsageError("search space: width options must be strictly ascending");
    }
    if (width_options.front() <= 0) throw UsageError("search space: widths must be positive");
}

bool SearchSpace::contains(const ArchitectureConfig& arch) const {
    if (std::find(depth_options.begin(), depth_options.end(), arch.depth) == depth_options.end()) {
        return false;
    }
    if (arch.widths.size() != static_cast<std::size_t>(arch.depth)) return false;
    for (int w : arch.widths) {
        if (std::find(width_options.begin(), width_options.end(), w) == width_options.end()) {
            return false;
        }
    }
    return true;
}

std::uint64_t SearchSpace::arch_count() const {
    validate();
    std::uint64_t count = 0;
    for (int d : depth_options) {
        std::uint64_t combos = 1;
        for (int k = 0; k < d; ++k) combos *= width_options.size();
        count += combos;
    }
    return count;
}

std::vector<ArchitectureConfig> SearchSpace::enumerate() const {
    // Exhaustive enumeration is the designed search procedure, so the grid
    // has to stay desk-scale.
    constexpr std::uint64_t kEnumerationCap = 1u << 20;
    const std::uint64_t count = arch_count();
    if (count > kEnumerationCap) {
        throw UsageError("search space: " + std::to_string(count) +
                         " candidates exceeds the enumeration cap of " +
                         std::to_string(kEnumerationCap));
    }
    std::vector<ArchitectureConfig> out;
    out.reserve(count);
    for (int d : depth_options) {
        ArchitectureConfig arch;
        arch.depth = d;
        arch.widths.assign(static_cast<std::size_t>(d), width_options.front());
        // Odometer over width combinations, most significant digit first,
        // which yields lexicographic order.
        std::vector<std::size_t> digits(static_cast<std::size_t>(d), 0);
        for (;;) {
            for (std::size_t k = 0; k < digits.size(); ++k) {
                arch.widths[k] = width_options[digits[k]];
            }
            out.push_back(arch);
            std::size_t pos = digits.size();
            while (pos > 0) {
                --pos;
                if (++digits[pos] < width_options.size()) break;
                digits[pos] = 0;
                if (pos == 0) goto next_depth;
            }
            if (digits.empty()) break;  // depth 0 has exactly one candidate
        }
    next_depth:;
    }
    return out;
}

std::uint64_t flops(const SearchSpace& space, const ArchitectureConfig& arch) {
    space.validate();
    if (!space.contains(arch)) {
        throw UsageError("flops: architecture " + to_string(arch) + " not in the search space");
    }
    std::uint64_t total = 0;
    std::uint64_t prev = static_cast<std::uint64_t>(space.input_dim);
    for (int w : arch.widths) {
        total += 2 * prev * static_cast<std::uint64_t>(w);
        prev = static_cast<std::uint64_t>(w);
    }
    total += 2 * prev * static_cast<std::uint64_t>(space.output_dim);
    return total;
}

std::uint64_t min_flops(const SearchSpace& space) {
    std::uint64_t best = std::numeric_limits<std::uint64_t>::max();
    for (const auto& arch : space.enumerate()) {
        best = std::min(best, flops(space, arch));
    }
    return best;
}

std::uint64_t SupernetWeights::param_count() const {
    std::uint64_t n = 0;
    for (const auto& l : trunk) n += l.weight.size() + l.bias.size();
    for (const auto& l : heads) n += l.weight.size() + l.bias.size();
    return n;
}

namespace {

DenseLayer make_layer(std::size_t out, std::size_t in) {
    DenseLayer l;
    l.weight = Matrix(out, in);
    l.bias.assign(out, 0.0f);
    return l;
}

void glorot_fill(DenseLayer& l, Rng& rng) {
    const double limit = std::sqrt(6.0 / static_cast<double>(l.in_dim() + l.out_dim()));
    for (auto& w : l.weight.values) w = static_cast<float>(uniform_real(rng, -limit, limit));
    for (auto& b : l.bias) b = 0.0f;
}

std::size_t head_index(const SearchSpace& space, int depth) {
    const auto it = std::find(space.depth_options.begin(), space.depth_options.end(), depth);
    return static_cast<std::size_t>(it - space.depth_options.begin());
}

std::size_t head_fan_in(const SearchSpace& space, int depth) {
    return depth == 0 ? static_cast<std::size_t>(space.input_dim)
                      : static_cast<std::size_t>(space.max_width());
}

}  // namespace

SupernetWeights init_supernet(const SearchSpace& space, std::uint64_t seed) {
    space.validate();
    SupernetWeights w;
    Rng rng = make_rng(derive_seed(seed, SeedDomain::supernet_init));
    const auto maxw = static_cast<std::size_t>(space.max_width());
    for (int k = 0; k < space.max_depth(); ++k) {
        DenseLayer l = make_layer(maxw, k == 0 ? static_cast<std::size_t>(space.input_dim) : maxw);
        glorot_fill(l, rng);
        w.trunk.push_back(std::move(l));
    }
    for (int d : space.depth_options) {
        DenseLayer l = make_layer(static_cast<std::size_t>(space.output_dim), head_fan_in(space, d));
        glorot_fill(l, rng);
        w.heads.push_back(std::move(l));
    }
    return w;
}

NetworkParams extract_subnet(const SupernetWeights& weights, const SearchSpace& space,
                             const ArchitectureConfig& arch) {
    space.validate();
    if (!space.contains(arch)) {
        throw UsageError("extract: architecture " + to_string(arch) + " not in the search space");
    }
    if (weights.trunk.size() != static_cast<std::size_t>(space.max_depth()) ||
        weights.heads.size() != space.depth_options.size()) {
        throw ShapeError("extract: weight pool does not match the search space");
    }
    NetworkParams net;
    std::size_t prev = static_cast<std::size_t>(space.input_dim);
    for (int k = 0; k < arch.depth; ++k) {
        const auto w = static_cast<std::size_t>(arch.widths[static_cast<std::size_t>(k)]);
        const DenseLayer& pool = weights.trunk[static_cast<std::size_t>(k)];
        DenseLayer l = make_layer(w, prev);
        for (std::size_t r = 0; r < w; ++r) {
            for (std::size_t c = 0; c < prev; ++c) {
                l.weight.at(r, c) = pool.weight.at(r, c);
            }
            l.bias[r] = pool.bias[r];
        }
        net.layers.push_back(std::move(l));
        prev = w;
    }
    const DenseLayer& head = weights.heads[head_index(space, arch.depth)];
    DenseLayer out = make_layer(static_cast<std::size_t>(space.output_dim), prev);
    for (std::size_t r = 0; r < out.out_dim(); ++r) {
        for (std::size_t c = 0; c < prev; ++c) {
            out.weight.at(r, c) = head.weight.at(r, c);
        }
        out.bias[r] = head.bias[r];
    }
    net.layers.push_back(std::move(out));
    return net;
}

namespace {

// Gradient buffers shaped like the full pool.
struct PoolGrads {
    std::vector<Matrix> trunk_w;
    std::vector<std::vector<float>> trunk_b;
    std::vector<Matrix> head_w;
    std::vector<std::vector<float>> head_b;

    explicit PoolGrads(const SupernetWeights& pool) {
        for (const auto& l : pool.trunk) {
            trunk_w.emplace_back(l.out_dim(), l.in_dim());
            trunk_b.emplace_back(l.out_dim(), 0.0f);
        }
        for (const auto& l : pool.heads) {
            head_w.emplace_back(l.out_dim(), l.in_dim());
            head_b.emplace_back(l.out_dim(), 0.0f);
        }
    }
};

// Adds a subnet's gradients into the pool slice it was extracted from.
void scatter_add(PoolGrads& pool, const SearchSpace& space, const ArchitectureConfig& arch,
                 const Grads& grads) {
    for (int k = 0; k < arch.depth; ++k) {
        const Matrix& dw = grads.d_weight[static_cast<std::size_t>(k)];
        Matrix& gw = pool.trunk_w[static_cast<std::size_t>(k)];
        for (std::size_t r = 0; r < dw.rows; ++r) {
            for (std::size_t c = 0; c < dw.cols; ++c) {
                gw.at(r, c) += dw.at(r, c);
            }
        }
        auto& gb = pool.trunk_b[static_cast<std::size_t>(k)];
        const auto& db = grads.d_bias[static_cast<std::size_t>(k)];
        for (std::size_t r = 0; r < db.size(); ++r) gb[r] += db[r];
    }
    const std::size_t h = head_index(space, arch.depth);
    const Matrix& dw = grads.d_weight.back();
    Matrix& gw = pool.head_w[h];
    for (std::size_t r = 0; r < dw.rows; ++r) {
        for (std::size_t c = 0; c < dw.cols; ++c) {
            gw.at(r, c) += dw.at(r, c);
        }
    }
    auto& gb = pool.head_b[h];
    const auto& db = grads.d_bias.back();
    for (std::size_t r = 0; r < db.size(); ++r) gb[r] += db[r];
}

void apply_pool_step(SupernetWeights& pool, const PoolGrads& grads, float lr) {
    for (std::size_t k = 0; k < pool.trunk.size(); ++k) {
        auto& l = pool.trunk[k];
        for (std::size_t i = 0; i < l.weight.values.size(); ++i) {
            l.weight.values[i] -= lr * grads.trunk_w[k].values[i];
        }
        for (std::size_t i = 0; i < l.bias.size(); ++i) {
            l.bias[i] -= lr * grads.trunk_b[k][i];
        }
    }
    for (std::size_t k = 0; k < pool.heads.size(); ++k) {
        auto& l = pool.heads[k];
        for (std::size_t i = 0; i < l.weight.values.size(); ++i) {
            l.weight.values[i] -= lr * grads.head_w[k].values[i];
        }
        for (std::size_t i = 0; i < l.bias.size(); ++i) {
            l.bias[i] -= lr * grads.head_b[k][i];
        }
    }
}

double panel_val_loss(const SupernetWeights& pool, const SearchSpace& space,
                      const std::vector<ArchitectureConfig>& panel, const Dataset& val) {
    Batch full = batch_from(val, iota_indices(val.size()));
    LossSpec ce;
    double sum = 0.0;
    for (const auto& arch : panel) {
        sum += loss_value(extract_subnet(pool, space, arch), full, ce);
    }
    return sum / static_cast<double>(panel.size());
}

}  // namespace

SupernetTrainLog train_supernet(SupernetWeights& weights, const SearchSpace& space,
                                const Dataset& train, const Dataset& val,
                                const SupernetTrainOptions& opts, std::uint64_t seed) {
    space.validate();
    if (!train.is_labeled() || !val.is_labeled()) {
        throw UsageError("supernet training needs labeled train and validation sets");
    }
    if (train.size() == 0 || val.size() == 0) throw UsageError("supernet training: empty dataset");
    if (opts.steps < 0 || opts.archs_per_step <= 0 || opts.batch_size <= 0 || opts.eval_panel <= 0) {
        throw UsageError("supernet training: options must be positive");
    }
    if (train.dim() != static_cast<std::size_t>(space.input_dim) ||
        train.class_count() != space.output_dim) {
        throw ShapeError("supernet training: dataset does not match the search space dims");
    }

    const auto archs = space.enumerate();
    Rng arch_rng = make_rng(derive_seed(seed, SeedDomain::supernet_train, 0));
    Rng batch_rng = make_rng(derive_seed(seed, SeedDomain::supernet_train, 1));
    Rng panel_rng = make_rng(derive_seed(seed, SeedDomain::eval_panel));

    std::vector<ArchitectureConfig> panel;
    if (archs.size() <= static_cast<std::size_t>(opts.eval_panel)) {
        panel = archs;
    } else {
        for (std::size_t i : sample_without_replacement(archs.size(),
                                                        static_cast<std::size_t>(opts.eval_panel),
                                                        panel_rng)) {
            panel.push_back(archs[i]);
        }
    }

    SupernetTrainLog log;
    log.initial_val_loss = panel_val_loss(weights, space, panel, val);
    log.history.emplace_back(0, log.initial_val_loss);

    LossSpec ce;
    std::vector<std::size_t> idx(static_cast<std::size_t>(opts.batch_size));
    for (int step = 0; step < opts.steps; ++step) {
        for (auto& i : idx) i = uniform_index(batch_rng, train.size());
        const Batch batch = batch_from(train, idx);

        PoolGrads grads(weights);
        for (int s = 0; s < opts.archs_per_step; ++s) {
            const auto& arch = archs[uniform_index(arch_rng, archs.size())];
            const NetworkParams net = extract_subnet(weights, space, arch);
            scatter_add(grads, space, arch, backward(net, batch, ce));
        }
        apply_pool_step(weights, grads, opts.lr);

        if ((step + 1) % 100 == 0 && step + 1 < opts.steps) {
            log.history.emplace_back(step + 1, panel_val_loss(weights, space, panel, val));
        }
    }
    log.final_val_loss = panel_val_loss(weights, space, panel, val);
    log.history.emplace_back(opts.steps, log.final_val_loss);
    return log;
}

ArchitectureConfig search(const SupernetWeights& weights, const SearchSpace& space,
                          ResourceBudget budget, const Dataset& val) {
    if (!val.is_labeled() || val.size() == 0) {
        throw UsageError("search: needs a non-empty labeled validation set");
    }
    bool found = false;
    ArchitectureConfig best;
    double best_acc = -1.0;
    std::uint64_t best_flops = 0;
    for (const auto& arch : space.enumerate()) {
        const std::uint64_t cost = flops(space, arch);
        if (cost > budget.max_flops) continue;
        const double acc = accuracy(extract_subnet(weights, space, arch), val.inputs(), val.labels());
        const bool better = !found || acc > best_acc ||
                            (acc == best_acc && cost < best_flops) ||
                            (acc == best_acc && cost == best_flops && arch < best);
        if (better) {
            found = true;
            best = arch;
            best_acc = acc;
            best_flops = cost;
        }
    }
    if (!found) throw InfeasibleBudgetError(budget.max_flops, min_flops(space));
    return best;
}

ArchitectureConfig largest_feasible_arch(const SearchSpace& space, ResourceBudget budget) {
    bool found = false;
    ArchitectureConfig best;
    std::uint64_t best_flops = 0;
    for (const auto& arch : space.enumerate()) {
        const std::uint64_t cost = flops(space, arch);
        if (cost > budget.max_flops) continue;
        if (!found || cost > best_flops || (cost == best_flops && arch < best)) {
            found = true;
            best = arch;
            best_flops = cost;
        }
    }
    if (!found) throw InfeasibleBudgetError(budget.max_flops, min_flops(space));
    return best;
}

namespace {

constexpr char kMagic[8] = {'R', 'A', 'F', 'L', 'S', 'N', 'E', 'T'};
constexpr std::uint32_t kFormatVersion = 1;

void write_u32(std::ostream& out, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                          static_cast<unsigned char>((v >> 8) & 0xff),
                          static_cast<unsigned char>((v >> 16) & 0xff),
                          static_cast<unsigned char>((v >> 24) & 0xff)};
    out.write(reinterpret_cast<const char*>(b), 4);
}

void write_i32(std::ostream& out, std::int32_t v) { write_u32(out, static_cast<std::uint32_t>(v)); }

void write_f32(std::ostream& out, float v) {
    std::uint32_t bits = 0;
    std::memcpy(&bits, &v, 4);
    write_u32(out, bits);
}

std::uint32_t read_u32(std::istream& in, const std::string& path) {
    unsigned char b[4];
    if (!in.read(reinterpret_cast<char*>(b), 4)) throw ParseError(path + ": truncated checkpoint");
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

std::int32_t read_i32(std::istream& in, const std::string& path) {
    return static_cast<std::int32_t>(read_u32(in, path));
}

float read_f32(std::istream& in, const std::string& path) {
    const std::uint32_t bits = read_u32(in, path);
    float v = 0.0f;
    std::memcpy(&v, &bits, 4);
    return v;
}

void write_layer(std::ostream& out, const DenseLayer& l) {
    write_u32(out, static_cast<std::uint32_t>(l.out_dim()));
    write_u32(out, static_cast<std::uint32_t>(l.in_dim()));
    for (float w : l.weight.values) write_f32(out, w);
    for (float b : l.bias) write_f32(out, b);
}

DenseLayer read_layer(std::istream& in, const std::string& path) {
    const std::uint32_t rows = read_u32(in, path);
    const std::uint32_t cols = read_u32(in, path);
    if (rows == 0 || cols == 0 || static_cast<std::uint64_t>(rows) * cols > (1ull << 28)) {
        throw ParseError(path + ": implausible layer shape in checkpoint");
    }
    DenseLayer l = make_layer(rows, cols);
    for (auto& w : l.weight.values) w = read_f32(in, path);
    for (auto& b : l.bias) b = read_f32(in, path);
    return l;
}

}  // namespace

void save_checkpoint(const std::string& path, const SearchSpace& space, const SupernetWeights& weights) {
    space.validate();
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path);
    out.write(kMagic, sizeof kMagic);
    write_u32(out, kFormatVersion);
    write_i32(out, space.input_dim);
    write_i32(out, space.output_dim);
    write_u32(out, static_cast<std::uint32_t>(space.depth_options.size()));
    for (int d : space.depth_options) write_i32(out, d);
    write_u32(out, static_cast<std::uint32_t>(space.width_options.size()));
    for (int w : space.width_options) write_i32(out, w);
    write_u32(out, static_cast<std::uint32_t>(weights.trunk.size()));
    for (const auto& l : weights.trunk) write_layer(out, l);
    write_u32(out, static_cast<std::uint32_t>(weights.heads.size()));
    for (const auto& l : weights.heads) write_layer(out, l);
    if (!out) throw IoError("write failed for " + path);
}

std::pair<SearchSpace, SupernetWeights> load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path);
    char magic[8];
    if (!in.read(magic, sizeof magic) || std::memcmp(magic, kMagic, sizeof magic) != 0) {
        throw ParseError(path + ": not a supernet checkpoint (bad magic)");
    }
    const std::uint32_t version = read_u32(in, path);
    if (version != kFormatVersion) {
        throw ParseError(path + ": unsupported checkpoint version " + std::to_string(version));
    }
    SearchSpace space;
    space.input_dim = read_i32(in, path);
    space.output_dim = read_i32(in, path);
    const std::uint32_t n_depths = read_u32(in, path);
    if (n_depths > 1024) throw ParseError(path + ": implausible depth option count");
    space.depth_options.resize(n_depths);
    for (auto& d : space.depth_options) d = read_i32(in, path);
    const std::uint32_t n_widths = read_u32(in, path);
    if (n_widths > 65536) throw ParseError(path + ": implausible width option count");
    space.width_options.resize(n_widths);
    for (auto& w : space.width_options) w = read_i32(in, path);
    try {
        space.validate();
    } catch (const UsageError& e) {
        throw ParseError(path + ": invalid search space in checkpoint: " + e.what());
    }

    SupernetWeights weights;
    const std::uint32_t n_trunk = read_u32(in, path);
    if (n_trunk != static_cast<std::uint32_t>(space.max_depth())) {
        throw ParseError(path + ": trunk layer count does not match the search space");
    }
    for (std::uint32_t k = 0; k < n_trunk; ++k) weights.trunk.push_back(read_layer(in, path));
    const std::uint32_t n_heads = read_u32(in, path);
    if (n_heads != space.depth_options.size()) {
        throw ParseError(path + ": head count does not match the search space");
    }
    for (std::uint32_t k = 0; k < n_heads; ++k) weights.heads.push_back(read_layer(in, path));

    // Shape cross-check against the descriptor.
    const auto maxw = static_cast<std::size_t>(space.max_width());
    for (std::size_t k = 0; k < weights.trunk.size(); ++k) {
        const std::size_t want_in = k == 0 ? static_cast<std::size_t>(space.input_dim) : maxw;
        if (weights.trunk[k].out_dim() != maxw || weights.trunk[k].in_dim() != want_in) {
            throw ParseError(path + ": trunk layer " + std::to_string(k) + " has the wrong shape");
        }
    }
    for (std::size_t k = 0; k < weights.heads.size(); ++k) {
        if (weights.heads[k].out_dim() != static_cast<std::size_t>(space.output_dim) ||
            weights.heads[k].in_dim() != head_fan_in(space, space.depth_options[k])) {
            throw ParseError(path + ": head " + std::to_string(k) + " has the wrong shape");
        }
    }
    char extra;
    if (in.read(&extra, 1)) throw ParseError(path + ": trailing bytes after checkpoint payload");
    return {std::move(space), std::move(weights)};
}

}  // namespace rafl
