#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <vector>

#include "rafl/matrix.hpp"
#include "rafl/rng.hpp"

namespace rafl {

// Hidden-layer nonlinearity: leaky rectifier. The small negative slope
// keeps the finite-difference oracle well behaved away from the kink.
inline constexpr double kLeakySlope = 0.01;

template <class T>
T activate(T x) {
    return x >= T(0) ? x : static_cast<T>(kLeakySlope) * x;
}

template <class T>
T activate_grad(T x) {
    return x >= T(0) ? T(1) : static_cast<T>(kLeakySlope);
}

// One fully connected layer; weight is [out x in] so row r holds the
// incoming weights of output unit r.
template <class T>
struct DenseLayerT {
    Mat<T> weight;
    std::vector<T> bias;

    std::size_t in_dim() const { return weight.cols; }
    std::size_t out_dim() const { return weight.rows; }
};

using DenseLayer = DenseLayerT<float>;

// A plain feed-forward classifier: affine layers with the leaky rectifier
// between them and raw logits at the end.
template <class T>
struct NetT {
    std::vector<DenseLayerT<T>> layers;

    std::size_t input_dim() const { return layers.empty() ? 0 : layers.front().in_dim(); }
    std::size_t output_dim() const { return layers.empty() ? 0 : layers.back().out_dim(); }

    std::uint64_t param_count() const {
        std::uint64_t n = 0;
        for (const auto& l : layers) {
            n += static_cast<std::uint64_t>(l.weight.size()) + l.bias.size();
        }
        return n;
    }
};

using NetworkParams = NetT<float>;

template <class T>
bool same_arch(const NetT<T>& a, const NetT<T>& b) {
    if (a.layers.size() != b.layers.size()) return false;
    for (std::size_t k = 0; k < a.layers.size(); ++k) {
        if (!a.layers[k].weight.same_shape(b.layers[k].weight)) return false;
    }
    return true;
}

template <class To, class From>
NetT<To> cast_net(const NetT<From>& net) {
    NetT<To> out;
    out.layers.reserve(net.layers.size());
    for (const auto& l : net.layers) {
        DenseLayerT<To> layer;
        layer.weight = cast_mat<To>(l.weight);
        layer.bias.assign(l.bias.begin(), l.bias.end());
        out.layers.push_back(std::move(layer));
    }
    return out;
}

// A minibatch. An empty label vector marks the batch as unlabeled
// (distillation batches carry inputs only).
template <class T>
struct BatchT {
    Mat<T> inputs;
    std::vector<int> labels;

    std::size_t size() const { return inputs.rows; }
    bool labeled() const { return !labels.empty(); }
};

using Batch = BatchT<float>;

template <class To, class From>
BatchT<To> cast_batch(const BatchT<From>& b) {
    return BatchT<To>{cast_mat<To>(b.inputs), b.labels};
}

// z = x * W^T + b for a batch of rows.
template <class T>
Mat<T> affine(const Mat<T>& x, const DenseLayerT<T>& layer) {
    if (x.cols != layer.in_dim()) {
        throw ShapeError("affine: input " + shape_string(x.rows, x.cols) + " vs weight " +
                         shape_string(layer.out_dim(), layer.in_dim()));
    }
    Mat<T> z(x.rows, layer.out_dim());
    for (std::size_t r = 0; r < x.rows; ++r) {
        const T* xr = &x.values[r * x.cols];
        for (std::size_t o = 0; o < layer.out_dim(); ++o) {
            const T* w = &layer.weight.values[o * layer.weight.cols];
            T acc = layer.bias[o];
            for (std::size_t i = 0; i < x.cols; ++i) {
                acc += xr[i] * w[i];
            }
            z.at(r, o) = acc;
        }
    }
    return z;
}

// Everything the backward pass needs: the input to each layer and each
// layer's pre-activation output.
template <class T>
struct ForwardTrace {
    std::vector<Mat<T>> layer_inputs;  // layer_inputs[k] feeds layers[k]
    std::vector<Mat<T>> pre_acts;      // pre_acts[k] = affine output of layers[k]

    const Mat<T>& logits() const { return pre_acts.back(); }
};

template <class T>
ForwardTrace<T> forward_trace(const NetT<T>& net, const Mat<T>& inputs) {
    if (net.layers.empty()) throw UsageError("forward: network has no layers");
    ForwardTrace<T> trace;
    trace.layer_inputs.reserve(net.layers.size());
    trace.pre_acts.reserve(net.layers.size());
    Mat<T> cur = inputs;
    for (std::size_t k = 0; k < net.layers.size(); ++k) {
        trace.layer_inputs.push_back(cur);
        Mat<T> z = affine(cur, net.layers[k]);
        trace.pre_acts.push_back(z);
        if (k + 1 < net.layers.size()) {
            for (auto& v : z.values) v = activate(v);
            cur = std::move(z);
        }
    }
    return trace;
}

// Logits for a batch of inputs.
template <class T>
Mat<T> forward(const NetT<T>& net, const Mat<T>& inputs) {
    if (net.layers.empty()) throw UsageError("forward: network has no layers");
    Mat<T> cur = inputs;
    for (std::size_t k = 0; k < net.layers.size(); ++k) {
        Mat<T> z = affine(cur, net.layers[k]);
        if (k + 1 < net.layers.size()) {
            for (auto& v : z.values) v = activate(v);
        }
        cur = std::move(z);
    }
    return cur;
}

// Row-wise softmax with max subtraction. Rejects non-finite logits so a
// diverging run fails loudly instead of training on NaNs.
template <class T>
Mat<T> softmax(const Mat<T>& logits) {
    if (!logits.all_finite()) throw UsageError("softmax: non-finite logits");
    Mat<T> p(logits.rows, logits.cols);
    for (std::size_t r = 0; r < logits.rows; ++r) {
        T mx = logits.at(r, 0);
        for (std::size_t c = 1; c < logits.cols; ++c) mx = std::max(mx, logits.at(r, c));
        T sum = T(0);
        for (std::size_t c = 0; c < logits.cols; ++c) {
            const T e = std::exp(logits.at(r, c) - mx);
            p.at(r, c) = e;
            sum += e;
        }
        for (std::size_t c = 0; c < logits.cols; ++c) p.at(r, c) /= sum;
    }
    return p;
}

// Row-wise log-softmax, same stabilization.
template <class T>
Mat<T> log_softmax(const Mat<T>& logits) {
    if (!logits.all_finite()) throw UsageError("log_softmax: non-finite logits");
    Mat<T> out(logits.rows, logits.cols);
    for (std::size_t r = 0; r < logits.rows; ++r) {
        T mx = logits.at(r, 0);
        for (std::size_t c = 1; c < logits.cols; ++c) mx = std::max(mx, logits.at(r, c));
        T sum = T(0);
        for (std::size_t c = 0; c < logits.cols; ++c) sum += std::exp(logits.at(r, c) - mx);
        const T lse = mx + std::log(sum);
        for (std::size_t c = 0; c < logits.cols; ++c) out.at(r, c) = logits.at(r, c) - lse;
    }
    return out;
}

// Predicted class per row; ties resolve to the lowest class index.
template <class T>
std::vector<int> argmax_rows(const Mat<T>& logits) {
    std::vector<int> pred(logits.rows);
    for (std::size_t r = 0; r < logits.rows; ++r) {
        int best = 0;
        for (std::size_t c = 1; c < logits.cols; ++c) {
            if (logits.at(r, c) > logits.at(r, best)) best = static_cast<int>(c);
        }
        pred[r] = best;
    }
    return pred;
}

template <class T>
double accuracy(const NetT<T>& net, const Mat<T>& inputs, const std::vector<int>& labels) {
    if (inputs.rows == 0) throw UsageError("accuracy: empty input");
    if (inputs.rows != labels.size()) throw ShapeError("accuracy: inputs vs labels size");
    const auto pred = argmax_rows(forward(net, inputs));
    std::size_t hits = 0;
    for (std::size_t r = 0; r < labels.size(); ++r) {
        if (pred[r] == labels[r]) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(labels.size());
}

// Glorot-uniform weights, zero biases.
inline void init_params(NetworkParams& net, Rng& rng) {
    for (auto& layer : net.layers) {
        const double limit = std::sqrt(6.0 / static_cast<double>(layer.in_dim() + layer.out_dim()));
        for (auto& w : layer.weight.values) {
            w = static_cast<float>(uniform_real(rng, -limit, limit));
        }
        for (auto& b : layer.bias) b = 0.0f;
    }
}

// Builds an uninitialized net with the given layer sizes:
// dims = {in, h1, ..., out}.
inline NetworkParams make_net(const std::vector<std::size_t>& dims) {
    if (dims.size() < 2) throw UsageError("make_net: need at least input and output dims");
    NetworkParams net;
    for (std::size_t k = 0; k + 1 < dims.size(); ++k) {
        DenseLayer layer;
        layer.weight = Matrix(dims[k + 1], dims[k]);
        layer.bias.assign(dims[k + 1], 0.0f);
        net.layers.push_back(std::move(layer));
    }
    return net;
}

}  // namespace rafl
