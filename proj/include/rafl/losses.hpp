#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "rafl/network.hpp"

namespace rafl {

// Composable training objective. Every local update in the system is some
// combination of these three terms:
//   - task cross-entropy on the batch labels
//   - KL(softmax(target) || softmax(net)) against detached target logits
//   - a proximal pull (mu/2)*||w - anchor||^2 toward reference weights
template <class T>
struct LossSpecT {
    bool task_cross_entropy = true;
    const Mat<T>* kl_target_logits = nullptr;
    double prox_mu = 0.0;
    const NetT<T>* prox_anchor = nullptr;
};

using LossSpec = LossSpecT<float>;

template <class T>
struct GradsT {
    std::vector<Mat<T>> d_weight;
    std::vector<std::vector<T>> d_bias;
};

using Grads = GradsT<float>;

template <class T>
void validate_loss_inputs(const NetT<T>& net, const BatchT<T>& batch, const LossSpecT<T>& spec) {
    if (net.layers.empty()) throw UsageError("loss: network has no layers");
    if (batch.size() == 0) throw UsageError("loss: empty batch");
    if (batch.inputs.cols != net.input_dim()) {
        throw ShapeError("loss: batch width " + std::to_string(batch.inputs.cols) +
                         " vs network input " + std::to_string(net.input_dim()));
    }
    if (!spec.task_cross_entropy && spec.kl_target_logits == nullptr) {
        throw UsageError("loss: spec selects no objective term");
    }
    if (spec.task_cross_entropy) {
        if (!batch.labeled()) throw UsageError("loss: cross-entropy needs a labeled batch");
        if (batch.labels.size() != batch.size()) throw ShapeError("loss: labels vs batch size");
        const int classes = static_cast<int>(net.output_dim());
        for (int y : batch.labels) {
            if (y < 0 || y >= classes) {
                throw UsageError("loss: label " + std::to_string(y) + " outside " +
                                 std::to_string(classes) + " classes");
            }
        }
    }
    if (spec.kl_target_logits != nullptr) {
        if (spec.kl_target_logits->rows != batch.size() ||
            spec.kl_target_logits->cols != net.output_dim()) {
            throw ShapeError("loss: distillation target shape " +
                             shape_string(spec.kl_target_logits->rows, spec.kl_target_logits->cols) +
                             " vs logits " + shape_string(batch.size(), net.output_dim()));
        }
    }
    if (spec.prox_mu < 0.0) throw UsageError("loss: negative proximal coefficient");
    if (spec.prox_mu > 0.0) {
        if (spec.prox_anchor == nullptr) throw UsageError("loss: proximal term without anchor weights");
        if (!same_arch(net, *spec.prox_anchor)) throw ShapeError("loss: proximal anchor architecture mismatch");
    }
}

// Batch-mean cross-entropy of the given logits against integer labels.
template <class T>
double cross_entropy_from_logits(const Mat<T>& logits, const std::vector<int>& labels) {
    const Mat<T> logp = log_softmax(logits);
    double sum = 0.0;
    for (std::size_t r = 0; r < logits.rows; ++r) {
        sum -= static_cast<double>(logp.at(r, static_cast<std::size_t>(labels[r])));
    }
    return sum / static_cast<double>(logits.rows);
}

// Batch-mean KL(softmax(target_logits) || softmax(logits)).
template <class T>
double kl_from_logits(const Mat<T>& target_logits, const Mat<T>& logits) {
    require_same_shape(target_logits, logits, "kl: target vs logits");
    const Mat<T> logp = log_softmax(target_logits);
    const Mat<T> logq = log_softmax(logits);
    double sum = 0.0;
    for (std::size_t i = 0; i < logp.values.size(); ++i) {
        const double lp = static_cast<double>(logp.values[i]);
        sum += std::exp(lp) * (lp - static_cast<double>(logq.values[i]));
    }
    return sum / static_cast<double>(logits.rows);
}

template <class T>
double prox_penalty(const NetT<T>& net, const NetT<T>& anchor, double mu) {
    double sq = 0.0;
    for (std::size_t k = 0; k < net.layers.size(); ++k) {
        const auto& l = net.layers[k];
        const auto& a = anchor.layers[k];
        for (std::size_t i = 0; i < l.weight.values.size(); ++i) {
            const double d = static_cast<double>(l.weight.values[i]) - static_cast<double>(a.weight.values[i]);
            sq += d * d;
        }
        for (std::size_t i = 0; i < l.bias.size(); ++i) {
            const double d = static_cast<double>(l.bias[i]) - static_cast<double>(a.bias[i]);
            sq += d * d;
        }
    }
    return 0.5 * mu * sq;
}

// Scalar objective value; accumulated in double regardless of T.
template <class T>
double loss_value(const NetT<T>& net, const BatchT<T>& batch, const LossSpecT<T>& spec) {
    validate_loss_inputs(net, batch, spec);
    const Mat<T> logits = forward(net, batch.inputs);
    double total = 0.0;
    if (spec.task_cross_entropy) total += cross_entropy_from_logits(logits, batch.labels);
    if (spec.kl_target_logits != nullptr) total += kl_from_logits(*spec.kl_target_logits, logits);
    if (spec.prox_mu > 0.0) total += prox_penalty(net, *spec.prox_anchor, spec.prox_mu);
    return total;
}

// Gradient of the combined objective at the logits: each enabled term
// contributes (softmax(logits) - target distribution) / batch_size.
template <class T>
Mat<T> logit_gradient(const Mat<T>& logits, const BatchT<T>& batch, const LossSpecT<T>& spec) {
    Mat<T> g(logits.rows, logits.cols, T(0));
    const T inv_b = T(1) / static_cast<T>(logits.rows);
    if (spec.task_cross_entropy || spec.kl_target_logits != nullptr) {
        const Mat<T> q = softmax(logits);
        if (spec.task_cross_entropy) {
            for (std::size_t r = 0; r < logits.rows; ++r) {
                for (std::size_t c = 0; c < logits.cols; ++c) {
                    g.at(r, c) += q.at(r, c) * inv_b;
                }
                g.at(r, static_cast<std::size_t>(batch.labels[r])) -= inv_b;
            }
        }
        if (spec.kl_target_logits != nullptr) {
            const Mat<T> p = softmax(*spec.kl_target_logits);
            for (std::size_t i = 0; i < g.values.size(); ++i) {
                g.values[i] += (q.values[i] - p.values[i]) * inv_b;
            }
        }
    }
    return g;
}

// Analytic gradients via backprop through the affine stack.
template <class T>
GradsT<T> backward(const NetT<T>& net, const BatchT<T>& batch, const LossSpecT<T>& spec) {
    validate_loss_inputs(net, batch, spec);
    const ForwardTrace<T> trace = forward_trace(net, batch.inputs);
    const std::size_t depth = net.layers.size();

    GradsT<T> grads;
    grads.d_weight.resize(depth);
    grads.d_bias.resize(depth);

    Mat<T> delta = logit_gradient(trace.logits(), batch, spec);
    for (std::size_t k = depth; k-- > 0;) {
        const auto& layer = net.layers[k];
        // What fed this layer in the forward pass; forward_trace stored it
        // post-activation, so it is used as-is.
        const Mat<T>& fed = trace.layer_inputs[k];
        Mat<T> dw(layer.out_dim(), layer.in_dim(), T(0));
        std::vector<T> db(layer.out_dim(), T(0));
        for (std::size_t r = 0; r < delta.rows; ++r) {
            for (std::size_t o = 0; o < layer.out_dim(); ++o) {
                const T d = delta.at(r, o);
                db[o] += d;
                T* dwo = &dw.values[o * layer.in_dim()];
                const T* f = &fed.values[r * fed.cols];
                for (std::size_t i = 0; i < layer.in_dim(); ++i) {
                    dwo[i] += d * f[i];
                }
            }
        }
        grads.d_weight[k] = std::move(dw);
        grads.d_bias[k] = std::move(db);
        if (k > 0) {
            Mat<T> prev(delta.rows, layer.in_dim(), T(0));
            for (std::size_t r = 0; r < delta.rows; ++r) {
                for (std::size_t o = 0; o < layer.out_dim(); ++o) {
                    const T d = delta.at(r, o);
                    const T* w = &layer.weight.values[o * layer.in_dim()];
                    T* p = &prev.values[r * layer.in_dim()];
                    for (std::size_t i = 0; i < layer.in_dim(); ++i) {
                        p[i] += d * w[i];
                    }
                }
            }
            const Mat<T>& pre = trace.pre_acts[k - 1];
            for (std::size_t i = 0; i < prev.values.size(); ++i) {
                prev.values[i] *= activate_grad(pre.values[i]);
            }
            delta = std::move(prev);
        }
    }

    if (spec.prox_mu > 0.0) {
        const T mu = static_cast<T>(spec.prox_mu);
        for (std::size_t k = 0; k < depth; ++k) {
            const auto& l = net.layers[k];
            const auto& a = spec.prox_anchor->layers[k];
            for (std::size_t i = 0; i < l.weight.values.size(); ++i) {
                grads.d_weight[k].values[i] += mu * (l.weight.values[i] - a.weight.values[i]);
            }
            for (std::size_t i = 0; i < l.bias.size(); ++i) {
                grads.d_bias[k][i] += mu * (l.bias[i] - a.bias[i]);
            }
        }
    }
    return grads;
}

// Plain SGD with optional weight decay; decay applies to every parameter.
template <class T>
void sgd_step(NetT<T>& net, const GradsT<T>& grads, T lr, T weight_decay = T(0)) {
    if (grads.d_weight.size() != net.layers.size()) {
        throw ShapeError("sgd_step: gradient layer count mismatch");
    }
    for (std::size_t k = 0; k < net.layers.size(); ++k) {
        auto& l = net.layers[k];
        const auto& dw = grads.d_weight[k];
        if (!dw.same_shape(l.weight) || grads.d_bias[k].size() != l.bias.size()) {
            throw ShapeError("sgd_step: gradient shape mismatch at layer " + std::to_string(k));
        }
        for (std::size_t i = 0; i < l.weight.values.size(); ++i) {
            l.weight.values[i] -= lr * (dw.values[i] + weight_decay * l.weight.values[i]);
        }
        for (std::size_t i = 0; i < l.bias.size(); ++i) {
            l.bias[i] -= lr * (grads.d_bias[k][i] + weight_decay * l.bias[i]);
        }
    }
}

namespace detail {

template <class Fn>
void for_each_param(NetT<double>& net, Fn&& fn) {
    for (auto& layer : net.layers) {
        for (auto& w : layer.weight.values) fn(w);
        for (auto& b : layer.bias) fn(b);
    }
}

}  // namespace detail

// Central-difference gradient check, run entirely in double. Returns the
// worst relative error |analytic - numeric| / max(1e-12, |numeric|) over
// all parameters.
inline double finite_difference_check(const NetT<double>& net, const BatchT<double>& batch,
                                      const LossSpecT<double>& spec, double eps = 1e-5) {
    validate_loss_inputs(net, batch, spec);
    const GradsT<double> analytic = backward(net, batch, spec);

    std::vector<double> flat_analytic;
    for (std::size_t k = 0; k < net.layers.size(); ++k) {
        flat_analytic.insert(flat_analytic.end(), analytic.d_weight[k].values.begin(),
                             analytic.d_weight[k].values.end());
        flat_analytic.insert(flat_analytic.end(), analytic.d_bias[k].begin(), analytic.d_bias[k].end());
    }

    NetT<double> probe = net;
    std::vector<double*> slots;
    detail::for_each_param(probe, [&](double& w) { slots.push_back(&w); });

    double worst = 0.0;
    for (std::size_t i = 0; i < slots.size(); ++i) {
        const double saved = *slots[i];
        *slots[i] = saved + eps;
        const double up = loss_value(probe, batch, spec);
        *slots[i] = saved - eps;
        const double down = loss_value(probe, batch, spec);
        *slots[i] = saved;
        const double numeric = (up - down) / (2.0 * eps);
        const double rel = std::abs(flat_analytic[i] - numeric) / std::max(1e-12, std::abs(numeric));
        worst = std::max(worst, rel);
    }
    return worst;
}

// Float-facing wrapper: widens the net, batch, and every tensor the loss
// spec references to double before checking.
inline double finite_difference_check(const NetworkParams& net, const Batch& batch,
                                      const LossSpec& spec, double eps = 1e-5) {
    const NetT<double> net64 = cast_net<double>(net);
    const BatchT<double> batch64 = cast_batch<double>(batch);
    Mat<double> target64;
    NetT<double> anchor64;
    LossSpecT<double> spec64;
    spec64.task_cross_entropy = spec.task_cross_entropy;
    spec64.prox_mu = spec.prox_mu;
    if (spec.kl_target_logits != nullptr) {
        target64 = cast_mat<double>(*spec.kl_target_logits);
        spec64.kl_target_logits = &target64;
    }
    if (spec.prox_anchor != nullptr) {
        anchor64 = cast_net<double>(*spec.prox_anchor);
        spec64.prox_anchor = &anchor64;
    }
    return finite_difference_check(net64, batch64, spec64, eps);
}

}  // namespace rafl
