#pragma once

#include <cmath>
#include <functional>
#include <string>

#include "fusionlab/tape.hpp"
#include "fusionlab/tensor.hpp"

namespace fusionlab {

/// Callback over named parameter tensors. Modules expose visit(prefix, fn)
/// walking their tensors in a fixed declaration order; the census, the
/// optimizer, and the checkpoint writer all address parameters this way.
template <typename T>
using ParamVisitor = std::function<void(const std::string&, Tensor<T>&)>;

template <typename T = float>
struct LinearParams {
    Tensor<T> weight;  // in x out
    Tensor<T> bias;    // out; ignored when has_bias is false
    bool has_bias = true;

    static LinearParams init(std::size_t in, std::size_t out, RandomSource& rng,
                             bool with_bias = true) {
        LinearParams p;
        const double bound = 1.0 / std::sqrt(static_cast<double>(in));
        p.weight = uniform_tensor<T>({in, out}, rng, -bound, bound);
        p.weight.requires_grad = true;
        p.has_bias = with_bias;
        if (with_bias) {
            p.bias = zeros<T>({out});
            p.bias.requires_grad = true;
        }
        return p;
    }

    Var apply(Tape<T>& t, Var x) {
        Var y = t.matmul(x, t.param(weight));
        if (has_bias) y = t.bias_add(y, t.param(bias));
        return y;
    }

    std::size_t in_dim() const { return weight.shape[0]; }
    std::size_t out_dim() const { return weight.shape[1]; }

    void visit(const std::string& prefix, const ParamVisitor<T>& fn) {
        fn(prefix + ".weight", weight);
        if (has_bias) fn(prefix + ".bias", bias);
    }
};

template <typename T = float>
struct LayerNormParams {
    Tensor<T> gamma;
    Tensor<T> beta;
    T eps = T(1e-5);

    static LayerNormParams init(std::size_t d) {
        LayerNormParams p;
        p.gamma = full<T>({d}, T(1));
        p.beta = zeros<T>({d});
        p.gamma.requires_grad = true;
        p.beta.requires_grad = true;
        return p;
    }

    Var apply(Tape<T>& t, Var x) { return t.layernorm(x, t.param(gamma), t.param(beta), eps); }

    void visit(const std::string& prefix, const ParamVisitor<T>& fn) {
        fn(prefix + ".gamma", gamma);
        fn(prefix + ".beta", beta);
    }
};

/// Token embedding table, rows indexed by id.
template <typename T = float>
struct EmbeddingParams {
    Tensor<T> table;  // vocab x dim

    static EmbeddingParams init(std::size_t vocab, std::size_t dim, RandomSource& rng) {
        EmbeddingParams p;
        p.table = normal_tensor<T>({vocab, dim}, rng, 0.0, 0.02);
        p.table.requires_grad = true;
        return p;
    }

    Var apply(Tape<T>& t, const std::vector<int>& ids) {
        return t.embedding(t.param(table), ids);
    }

    void visit(const std::string& prefix, const ParamVisitor<T>& fn) {
        fn(prefix + ".table", table);
    }
};

}  // namespace fusionlab
