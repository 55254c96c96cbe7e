#pragma once

#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "fusionlab/errors.hpp"
#include "fusionlab/rng.hpp"

namespace fusionlab {

/// Dense row-major tensor. Shapes are carried explicitly; there are no views.
/// `grad` is the one mutable slot after construction: forward values are
/// settled when an op returns, backward fills gradients in.
template <typename T>
struct Tensor {
    std::vector<std::size_t> shape;
    std::vector<T> values;
    std::optional<std::vector<T>> grad;
    bool requires_grad = false;

    Tensor() = default;

    explicit Tensor(std::vector<std::size_t> s) : shape(std::move(s)) {
        values.assign(numel_of(shape), T(0));
    }

    Tensor(std::vector<std::size_t> s, std::vector<T> v)
        : shape(std::move(s)), values(std::move(v)) {
        if (numel_of(shape) != values.size())
            throw ShapeError("tensor value count " + std::to_string(values.size()) +
                             " does not match shape " + shape_string(shape));
    }

    static std::size_t numel_of(const std::vector<std::size_t>& s) {
        std::size_t n = 1;
        for (std::size_t e : s) {
            if (e == 0) throw ShapeError("zero extent in shape " + shape_string(s));
            n *= e;
        }
        return n;
    }

    std::size_t numel() const { return values.size(); }

    // 1-D tensors are treated as a single row by the matrix-style ops
    std::size_t rows() const {
        if (shape.empty()) return 1;
        return shape.size() == 1 ? 1 : shape[0];
    }
    std::size_t cols() const {
        if (shape.empty()) return 1;
        return shape.back();
    }

    T& at(std::size_t r, std::size_t c) { return values[r * cols() + c]; }
    const T& at(std::size_t r, std::size_t c) const { return values[r * cols() + c]; }

    const T* row_ptr(std::size_t r) const { return values.data() + r * cols(); }
    T* row_ptr(std::size_t r) { return values.data() + r * cols(); }

    void ensure_grad() {
        if (!grad) grad.emplace(values.size(), T(0));
    }

    void zero_grad() {
        if (grad) std::fill(grad->begin(), grad->end(), T(0));
    }

    bool all_finite() const {
        for (T v : values)
            if (!std::isfinite(static_cast<double>(v))) return false;
        return true;
    }

    static std::string shape_string(const std::vector<std::size_t>& s) {
        std::ostringstream os;
        os << "[";
        for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
        os << "]";
        return os.str();
    }

    std::string shape_string() const { return shape_string(shape); }
};

template <typename T>
Tensor<T> zeros(std::vector<std::size_t> shape) {
    return Tensor<T>(std::move(shape));
}

template <typename T>
Tensor<T> full(std::vector<std::size_t> shape, T v) {
    Tensor<T> t(std::move(shape));
    std::fill(t.values.begin(), t.values.end(), v);
    return t;
}

template <typename T>
Tensor<T> from_rows(std::initializer_list<std::initializer_list<T>> rows) {
    const std::size_t r = rows.size();
    const std::size_t c = rows.begin()->size();
    Tensor<T> t({r, c});
    std::size_t i = 0;
    for (const auto& row : rows) {
        if (row.size() != c) throw ShapeError("ragged row list");
        for (T v : row) t.values[i++] = v;
    }
    return t;
}

template <typename T>
Tensor<T> uniform_tensor(std::vector<std::size_t> shape, RandomSource& rng, double lo, double hi) {
    Tensor<T> t(std::move(shape));
    for (auto& v : t.values) v = static_cast<T>(rng.uniform(lo, hi));
    return t;
}

template <typename T>
Tensor<T> normal_tensor(std::vector<std::size_t> shape, RandomSource& rng, double mean, double std) {
    Tensor<T> t(std::move(shape));
    for (auto& v : t.values) v = static_cast<T>(rng.normal(mean, std));
    return t;
}

}  // namespace fusionlab
