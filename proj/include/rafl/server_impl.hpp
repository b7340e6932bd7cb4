#pragma once

#include "rafl/errors.hpp"

namespace rafl {

template <class T>
NetT<T> weighted_mean(const std::vector<const NetT<T>*>& nets, const std::vector<std::uint64_t>& n_samples) {
    if (nets.empty()) throw UsageError("weighted mean: no nets");
    if (nets.size() != n_samples.size()) throw UsageError("weighted mean: nets vs weights size");
    std::uint64_t total = 0;
    for (std::uint64_t n : n_samples) {
        if (n == 0) throw UsageError("weighted mean: zero-sample contribution");
        total += n;
    }
    for (const auto* net : nets) {
        if (!same_arch(*nets.front(), *net)) {
            throw ShapeError("weighted mean: architecture mismatch between contributions");
        }
    }

    const auto& shape = *nets.front();
    NetT<T> out;
    for (const auto& l : shape.layers) {
        DenseLayerT<T> layer;
        layer.weight = Mat<T>(l.out_dim(), l.in_dim());
        layer.bias.assign(l.out_dim(), T(0));
        out.layers.push_back(std::move(layer));
    }
    for (std::size_t k = 0; k < shape.layers.size(); ++k) {
        auto& acc_w = out.layers[k].weight.values;
        auto& acc_b = out.layers[k].bias;
        for (std::size_t l = 0; l < nets.size(); ++l) {
            const T w = static_cast<T>(static_cast<double>(n_samples[l]) / static_cast<double>(total));
            const auto& src = nets[l]->layers[k];
            for (std::size_t i = 0; i < acc_w.size(); ++i) {
                acc_w[i] += w * src.weight.values[i];
            }
            for (std::size_t i = 0; i < acc_b.size(); ++i) {
                acc_b[i] += w * src.bias[i];
            }
        }
    }
    return out;
}

}  // namespace rafl
