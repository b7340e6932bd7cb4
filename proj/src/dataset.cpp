#include "rafl/dataset.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "rafl/errors.hpp"
#include "rafl/rng.hpp"

namespace rafl {

Dataset Dataset::labeled(Matrix inputs, std::vector<int> labels, int class_count) {
    if (inputs.rows != labels.size()) {
        throw ShapeError("dataset: " + std::to_string(inputs.rows) + " rows vs " +
                         std::to_string(labels.size()) + " labels");
    }
    if (class_count <= 0) throw UsageError("dataset: class count must be positive");
    for (int y : labels) {
        if (y < 0 || y >= class_count) {
            throw UsageError("dataset: label " + std::to_string(y) + " outside " +
                             std::to_string(class_count) + " classes");
        }
    }
    Dataset d;
    d.inputs_ = std::move(inputs);
    d.labels_ = std::move(labels);
    d.class_count_ = class_count;
    d.has_labels_ = true;
    return d;
}

Dataset Dataset::unlabeled(Matrix inputs, int class_count) {
    if (class_count <= 0) throw UsageError("dataset: class count must be positive");
    Dataset d;
    d.inputs_ = std::move(inputs);
    d.class_count_ = class_count;
    d.has_labels_ = false;
    return d;
}

const std::vector<int>& Dataset::labels() const {
    if (!has_labels_) throw UsageError("dataset: labels requested from an unlabeled set");
    return labels_;
}

int Dataset::label(std::size_t i) const {
    if (!has_labels_) throw UsageError("dataset: labels requested from an unlabeled set");
    return labels_[i];
}

namespace {

// Class centers: seeded standard-normal points scaled so classes are
// separable but not trivially so at spread ~1.
std::vector<std::vector<double>> class_centers(std::size_t dims, int classes, Rng& rng) {
    std::vector<std::vector<double>> centers(static_cast<std::size_t>(classes));
    for (auto& c : centers) {
        c.resize(dims);
        for (auto& x : c) x = 2.0 * normal_sample(rng);
    }
    return centers;
}

Dataset blobs_around(const BlobSpec& spec, const std::vector<std::vector<double>>& centers) {
    Rng rng = make_rng(derive_seed(spec.seed, SeedDomain::dataset_gen, 1));
    Matrix inputs(spec.samples, spec.dims);
    std::vector<int> labels(spec.samples);
    // Round-robin over classes keeps counts balanced up to remainder.
    for (std::size_t r = 0; r < spec.samples; ++r) {
        const int y = static_cast<int>(r % static_cast<std::size_t>(spec.classes));
        labels[r] = y;
        const auto& c = centers[static_cast<std::size_t>(y)];
        for (std::size_t j = 0; j < spec.dims; ++j) {
            inputs.at(r, j) = static_cast<float>(c[j] + spec.spread * normal_sample(rng));
        }
    }
    return Dataset::labeled(std::move(inputs), std::move(labels), spec.classes);
}

void validate_blob_spec(const BlobSpec& spec) {
    if (spec.samples == 0) throw UsageError("blobs: zero samples");
    if (spec.dims == 0) throw UsageError("blobs: zero dims");
    if (spec.classes <= 1) throw UsageError("blobs: need at least two classes");
    if (spec.spread <= 0.0) throw UsageError("blobs: spread must be positive");
}

}  // namespace

Dataset synth_blobs(const BlobSpec& spec) {
    validate_blob_spec(spec);
    Rng center_rng = make_rng(derive_seed(spec.seed, SeedDomain::dataset_gen, 0));
    return blobs_around(spec, class_centers(spec.dims, spec.classes, center_rng));
}

Dataset synth_blobs_shifted(const BlobSpec& spec, double center_shift, std::uint64_t shift_seed) {
    validate_blob_spec(spec);
    if (center_shift < 0.0) throw UsageError("blobs: negative center shift");
    Rng center_rng = make_rng(derive_seed(spec.seed, SeedDomain::dataset_gen, 0));
    auto centers = class_centers(spec.dims, spec.classes, center_rng);
    Rng shift_rng = make_rng(derive_seed(shift_seed, SeedDomain::public_shift));
    for (auto& c : centers) {
        for (auto& x : c) x += center_shift * normal_sample(shift_rng);
    }
    return blobs_around(spec, centers);
}

Dataset strip_labels(const Dataset& data) {
    return Dataset::unlabeled(data.inputs(), data.class_count());
}

std::vector<Shard> dirichlet_partition(const Dataset& data, const PartitionSpec& spec) {
    if (!data.is_labeled()) throw UsageError("partition: dataset must be labeled");
    if (spec.n_clients <= 0) throw UsageError("partition: client count must be positive");
    if (spec.alpha <= 0.0) throw UsageError("partition: alpha must be positive");
    const std::size_t n_clients = static_cast<std::size_t>(spec.n_clients);
    if (spec.min_samples_per_client * n_clients > data.size()) {
        throw PartitionError("partition: floor of " + std::to_string(spec.min_samples_per_client) +
                             " samples x " + std::to_string(spec.n_clients) +
                             " clients exceeds dataset size " + std::to_string(data.size()));
    }

    // Bucket row indices by class once.
    std::vector<std::vector<std::size_t>> by_class(static_cast<std::size_t>(data.class_count()));
    for (std::size_t r = 0; r < data.size(); ++r) {
        by_class[static_cast<std::size_t>(data.label(r))].push_back(r);
    }

    constexpr int kMaxAttempts = 100;
    Rng rng = make_rng(derive_seed(spec.seed, SeedDomain::partition));
    for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
        std::vector<Shard> shards(n_clients);
        for (std::size_t cls = 0; cls < by_class.size(); ++cls) {
            auto rows = by_class[cls];
            shuffle_in_place(rows, rng);
            const auto p = dirichlet_sample(rng, spec.alpha, n_clients);

            // Largest-remainder rounding of p * |rows| into integer counts.
            const double total = static_cast<double>(rows.size());
            std::vector<std::size_t> counts(n_clients);
            std::vector<std::pair<double, std::size_t>> remainders(n_clients);
            std::size_t assigned = 0;
            for (std::size_t l = 0; l < n_clients; ++l) {
                const double exact = p[l] * total;
                counts[l] = static_cast<std::size_t>(exact);
                remainders[l] = {exact - static_cast<double>(counts[l]), l};
                assigned += counts[l];
            }
            std::sort(remainders.begin(), remainders.end(), [](const auto& a, const auto& b) {
                if (a.first != b.first) return a.first > b.first;
                return a.second < b.second;
            });
            for (std::size_t k = 0; assigned < rows.size(); ++k, ++assigned) {
                ++counts[remainders[k % n_clients].second];
            }

            std::size_t cursor = 0;
            for (std::size_t l = 0; l < n_clients; ++l) {
                for (std::size_t k = 0; k < counts[l]; ++k) {
                    shards[l].indices.push_back(rows[cursor++]);
                }
            }
        }

        const bool ok = std::all_of(shards.begin(), shards.end(), [&](const Shard& s) {
            return s.size() >= spec.min_samples_per_client;
        });
        if (ok) {
            for (auto& s : shards) std::sort(s.indices.begin(), s.indices.end());
            return shards;
        }
    }
    throw PartitionError("partition: could not satisfy the per-client floor of " +
                         std::to_string(spec.min_samples_per_client) + " samples in " +
                         std::to_string(kMaxAttempts) + " attempts; lower the floor, raise alpha, "
                         "or reduce the client count");
}

namespace {

Dataset take_rows(const Dataset& data, const std::vector<std::size_t>& rows) {
    Matrix inputs(rows.size(), data.dim());
    for (std::size_t r = 0; r < rows.size(); ++r) {
        for (std::size_t c = 0; c < data.dim(); ++c) {
            inputs.at(r, c) = data.inputs().at(rows[r], c);
        }
    }
    if (!data.is_labeled()) return Dataset::unlabeled(std::move(inputs), data.class_count());
    std::vector<int> labels(rows.size());
    for (std::size_t r = 0; r < rows.size(); ++r) labels[r] = data.label(rows[r]);
    return Dataset::labeled(std::move(inputs), std::move(labels), data.class_count());
}

}  // namespace

std::pair<Dataset, Dataset> split_dataset(const Dataset& data, double right_fraction, std::uint64_t seed) {
    if (right_fraction < 0.0 || right_fraction > 1.0) {
        throw UsageError("split: fraction must lie in [0, 1]");
    }
    auto order = iota_indices(data.size());
    Rng rng = make_rng(seed);
    shuffle_in_place(order, rng);
    const auto right_n = static_cast<std::size_t>(
        std::llround(right_fraction * static_cast<double>(data.size())));
    const std::vector<std::size_t> right_rows(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(right_n));
    const std::vector<std::size_t> left_rows(order.begin() + static_cast<std::ptrdiff_t>(right_n), order.end());
    return {take_rows(data, left_rows), take_rows(data, right_rows)};
}

std::pair<Dataset, Dataset> public_split(const Dataset& data, double public_fraction, std::uint64_t seed) {
    auto [remaining, public_part] = split_dataset(data, public_fraction, seed);
    if (public_part.size() == 0) throw UsageError("public split: public side is empty");
    if (remaining.size() == 0) throw UsageError("public split: nothing left for training");
    return {std::move(remaining), strip_labels(public_part)};
}

Dataset subset(const Dataset& data, std::span<const std::size_t> indices) {
    for (std::size_t r : indices) {
        if (r >= data.size()) throw UsageError("subset: row index out of range");
    }
    return take_rows(data, std::vector<std::size_t>(indices.begin(), indices.end()));
}

Batch batch_from(const Dataset& data, std::span<const std::size_t> indices) {
    Batch b;
    b.inputs = Matrix(indices.size(), data.dim());
    for (std::size_t r = 0; r < indices.size(); ++r) {
        if (indices[r] >= data.size()) throw UsageError("batch: row index out of range");
        for (std::size_t c = 0; c < data.dim(); ++c) {
            b.inputs.at(r, c) = data.inputs().at(indices[r], c);
        }
    }
    if (data.is_labeled()) {
        b.labels.resize(indices.size());
        for (std::size_t r = 0; r < indices.size(); ++r) {
            b.labels[r] = data.label(indices[r]);
        }
    }
    return b;
}

std::vector<int> label_histogram(const Dataset& data, const Shard& shard) {
    std::vector<int> hist(static_cast<std::size_t>(data.class_count()), 0);
    for (std::size_t r : shard.indices) {
        ++hist[static_cast<std::size_t>(data.label(r))];
    }
    return hist;
}

Dataset load_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path);
    std::vector<std::vector<float>> feature_rows;
    std::vector<int> labels;
    std::string line;
    std::size_t line_no = 0;
    std::size_t width = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        if (line.back() == ',') cells.push_back("");
        if (cells.size() < 2) {
            throw ParseError(path + ":" + std::to_string(line_no) +
                             ": need at least one feature and a label");
        }
        if (width == 0) {
            width = cells.size();
        } else if (cells.size() != width) {
            throw ParseError(path + ":" + std::to_string(line_no) + ": expected " +
                             std::to_string(width) + " columns, got " + std::to_string(cells.size()));
        }
        std::vector<float> features(width - 1);
        for (std::size_t c = 0; c + 1 < width; ++c) {
            try {
                std::size_t used = 0;
                features[c] = std::stof(cells[c], &used);
                if (used != cells[c].size()) throw std::invalid_argument("trailing junk");
            } catch (const std::exception&) {
                throw ParseError(path + ":" + std::to_string(line_no) + ": column " +
                                 std::to_string(c + 1) + ": bad float '" + cells[c] + "'");
            }
        }
        int label = 0;
        try {
            std::size_t used = 0;
            label = std::stoi(cells.back(), &used);
            if (used != cells.back().size()) throw std::invalid_argument("trailing junk");
        } catch (const std::exception&) {
            throw ParseError(path + ":" + std::to_string(line_no) + ": column " +
                             std::to_string(width) + ": bad label '" + cells.back() + "'");
        }
        if (label < 0) {
            throw ParseError(path + ":" + std::to_string(line_no) + ": negative label");
        }
        feature_rows.push_back(std::move(features));
        labels.push_back(label);
    }
    if (feature_rows.empty()) throw ParseError(path + ": no data rows");
    Matrix inputs(feature_rows.size(), width - 1);
    for (std::size_t r = 0; r < feature_rows.size(); ++r) {
        for (std::size_t c = 0; c + 1 < width; ++c) {
            inputs.at(r, c) = feature_rows[r][c];
        }
    }
    const int classes = *std::max_element(labels.begin(), labels.end()) + 1;
    return Dataset::labeled(std::move(inputs), std::move(labels), classes);
}

void save_csv(const std::string& path, const Dataset& data) {
    if (!data.is_labeled()) throw UsageError("save_csv: dataset must be labeled");
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path);
    char buf[64];
    for (std::size_t r = 0; r < data.size(); ++r) {
        for (std::size_t c = 0; c < data.dim(); ++c) {
            // %.9g round-trips binary32 exactly.
            std::snprintf(buf, sizeof buf, "%.9g", static_cast<double>(data.inputs().at(r, c)));
            out << buf << ',';
        }
        out << data.label(r) << '\n';
    }
    if (!out) throw IoError("write failed for " + path);
}

}  // namespace rafl
