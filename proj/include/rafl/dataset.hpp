#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "rafl/network.hpp"

namespace rafl {

// An in-memory tabular dataset: float features plus optional integer
// labels. Unlabeled sets (the public distillation pool) refuse label
// access instead of handing out garbage.
class Dataset {
public:
    Dataset() = default;

    static Dataset labeled(Matrix inputs, std::vector<int> labels, int class_count);
    static Dataset unlabeled(Matrix inputs, int class_count);

    std::size_t size() const { return inputs_.rows; }
    std::size_t dim() const { return inputs_.cols; }
    int class_count() const { return class_count_; }
    bool is_labeled() const { return has_labels_; }

    const Matrix& inputs() const { return inputs_; }
    const std::vector<int>& labels() const;
    int label(std::size_t i) const;

private:
    Matrix inputs_;
    std::vector<int> labels_;
    int class_count_ = 0;
    bool has_labels_ = false;
};

struct BlobSpec {
    std::size_t samples = 0;
    std::size_t dims = 0;
    int classes = 0;
    double spread = 1.0;       // stddev of the per-sample offset from the class center
    std::uint64_t seed = 0;
};

// Gaussian blobs, one center per class, class-balanced up to remainder.
Dataset synth_blobs(const BlobSpec& spec);

// Same generator but with every class center nudged by a seeded offset of
// the given magnitude; models a public pool that is related to, but not
// drawn from, the private distribution. Labels are kept.
Dataset synth_blobs_shifted(const BlobSpec& spec, double center_shift, std::uint64_t shift_seed);

Dataset strip_labels(const Dataset& data);

// A client's slice of the training set, by row index.
struct Shard {
    std::vector<std::size_t> indices;

    std::size_t size() const { return indices.size(); }
};

struct PartitionSpec {
    int n_clients = 0;
    double alpha = 0.5;                   // Dirichlet concentration; lower = more skew
    std::size_t min_samples_per_client = 1;
    std::uint64_t seed = 0;
};

// Label-skewed partition: for each class, shard proportions are drawn from
// a symmetric Dirichlet(alpha) and converted to counts by largest
// remainder. If any shard lands under the floor the whole draw is
// rejected and resampled (bounded retries, then PartitionError).
std::vector<Shard> dirichlet_partition(const Dataset& data, const PartitionSpec& spec);

// Seeded shuffle-and-cut. `right_fraction` of rows (rounded) go right.
std::pair<Dataset, Dataset> split_dataset(const Dataset& data, double right_fraction, std::uint64_t seed);

// Splits off an unlabeled public pool: (remaining labeled, public).
std::pair<Dataset, Dataset> public_split(const Dataset& data, double public_fraction, std::uint64_t seed);

Dataset subset(const Dataset& data, std::span<const std::size_t> indices);

Batch batch_from(const Dataset& data, std::span<const std::size_t> indices);

std::vector<int> label_histogram(const Dataset& data, const Shard& shard);

// CSV exchange format: one row per sample, features then an integer label
// in the last column.
Dataset load_csv(const std::string& path);
void save_csv(const std::string& path, const Dataset& data);

}  // namespace rafl
