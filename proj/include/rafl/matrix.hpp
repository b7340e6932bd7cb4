#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "rafl/errors.hpp"

namespace rafl {

// Dense row-major matrix. T is float on training paths and double on
// verification paths (oracles, finite differences, exact aggregation).
template <class T>
struct Mat {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<T> values;

    Mat() = default;
    Mat(std::size_t r, std::size_t c, T fill = T{0}) : rows(r), cols(c), values(r * c, fill) {}

    T& at(std::size_t r, std::size_t c) { return values[r * cols + c]; }
    const T& at(std::size_t r, std::size_t c) const { return values[r * cols + c]; }

    std::size_t size() const { return values.size(); }
    bool same_shape(const Mat& o) const { return rows == o.rows && cols == o.cols; }

    bool all_finite() const {
        for (T x : values) {
            if (!std::isfinite(static_cast<double>(x))) return false;
        }
        return true;
    }
};

using Matrix = Mat<float>;

template <class To, class From>
Mat<To> cast_mat(const Mat<From>& m) {
    Mat<To> out(m.rows, m.cols);
    for (std::size_t i = 0; i < m.values.size(); ++i) {
        out.values[i] = static_cast<To>(m.values[i]);
    }
    return out;
}

inline std::string shape_string(std::size_t r, std::size_t c) {
    return "[" + std::to_string(r) + "x" + std::to_string(c) + "]";
}

template <class T>
void require_same_shape(const Mat<T>& a, const Mat<T>& b, const char* what) {
    if (!a.same_shape(b)) {
        throw ShapeError(std::string(what) + ": " + shape_string(a.rows, a.cols) +
                         " vs " + shape_string(b.rows, b.cols));
    }
}

}  // namespace rafl
