#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <utility>
#include <vector>

#include "fusionlab/flops.hpp"
#include "fusionlab/rng.hpp"
#include "fusionlab/simd/kernels.hpp"
#include "fusionlab/tensor.hpp"

namespace fusionlab {

/// Handle to a node on a tape. Plain index; tapes never share nodes.
struct Var {
    std::int32_t id = -1;
    bool valid() const { return id >= 0; }
};

/// Reverse-mode tape. Operations append nodes in execution order; backward
/// walks nodes in exact reverse insertion order, which is a reverse
/// topological order because every input precedes its consumers. Gradients
/// accumulate with +=, so a node consumed twice receives both contributions.
///
/// Forward flops are counted per the convention in flops.hpp as ops are
/// recorded, giving the instrumented side of the cost-model comparison.
template <typename T>
class Tape {
public:
    Tape() { nodes_.reserve(256); }

    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    // ---- leaves ------------------------------------------------------------

    /// Owned leaf; the tape keeps a copy of the tensor.
    Var leaf(Tensor<T> value) {
        Node n;
        n.owned = std::move(value);
        n.needs_grad = n.owned.requires_grad;
        nodes_.push_back(std::move(n));
        return Var{static_cast<std::int32_t>(nodes_.size() - 1)};
    }

    /// Non-owning leaf over parameter storage. The tensor must outlive the
    /// tape and stay immutable until backward has run. backward() writes the
    /// gradient back into the tensor's grad slot unless told not to.
    Var param(Tensor<T>& external) {
        Node n;
        n.external = &external;
        n.needs_grad = external.requires_grad;
        nodes_.push_back(std::move(n));
        return Var{static_cast<std::int32_t>(nodes_.size() - 1)};
    }

    // ---- access ------------------------------------------------------------

    const Tensor<T>& value(Var v) const { return nodes_[check(v)].val(); }

    /// Gradient of a node after backward(). Zero-length if the node was never
    /// reached (no grad path).
    const std::vector<T>& grad(Var v) const { return nodes_[check(v)].grad; }

    std::size_t size() const { return nodes_.size(); }
    std::int64_t flops() const { return flops_; }

    // ---- elementwise -------------------------------------------------------

    Var add(Var a, Var b) {
        const Tensor<T>& ta = value(a);
        const Tensor<T>& tb = value(b);
        require_same_shape(ta, tb, "add");
        Tensor<T> out(ta.shape);
        simd::add(ta.values.data(), tb.values.data(), out.values.data(), out.numel());
        return push(std::move(out), flops::elementwise(ta.numel()), {a, b},
                    [a, b](Tape& t, const std::vector<T>& g) {
                        t.accumulate(a, g.data(), g.size());
                        t.accumulate(b, g.data(), g.size());
                    });
    }

    Var sub(Var a, Var b) {
        const Tensor<T>& ta = value(a);
        const Tensor<T>& tb = value(b);
        require_same_shape(ta, tb, "sub");
        Tensor<T> out(ta.shape);
        simd::sub(ta.values.data(), tb.values.data(), out.values.data(), out.numel());
        return push(std::move(out), flops::elementwise(ta.numel()), {a, b},
                    [a, b](Tape& t, const std::vector<T>& g) {
                        t.accumulate(a, g.data(), g.size());
                        t.accumulate_scaled(b, T(-1), g.data(), g.size());
                    });
    }

    Var mul(Var a, Var b) {
        const Tensor<T>& ta = value(a);
        const Tensor<T>& tb = value(b);
        require_same_shape(ta, tb, "mul");
        Tensor<T> out(ta.shape);
        simd::mul(ta.values.data(), tb.values.data(), out.values.data(), out.numel());
        return push(std::move(out), flops::elementwise(ta.numel()), {a, b},
                    [a, b](Tape& t, const std::vector<T>& g) {
                        t.accumulate_product(a, g.data(), t.value(b).values.data(), g.size());
                        t.accumulate_product(b, g.data(), t.value(a).values.data(), g.size());
                    });
    }

    /// Multiply by a compile-time constant scalar.
    Var scale(Var a, T s) {
        const Tensor<T>& ta = value(a);
        Tensor<T> out(ta.shape);
        simd::scale(ta.values.data(), s, out.values.data(), out.numel());
        return push(std::move(out), flops::elementwise(ta.numel()), {a},
                    [a, s](Tape& t, const std::vector<T>& g) {
                        t.accumulate_scaled(a, s, g.data(), g.size());
                    });
    }

    /// Multiply by a learnable scalar held in a 1-element tensor.
    Var scale_by(Var x, Var s) {
        const Tensor<T>& tx = value(x);
        const Tensor<T>& ts = value(s);
        if (ts.numel() != 1) throw ShapeError("scale_by expects a 1-element scalar, got " + ts.shape_string());
        const T sv = ts.values[0];
        Tensor<T> out(tx.shape);
        simd::scale(tx.values.data(), sv, out.values.data(), out.numel());
        return push(std::move(out), flops::elementwise(tx.numel()), {x, s},
                    [x, s, sv](Tape& t, const std::vector<T>& g) {
                        t.accumulate_scaled(x, sv, g.data(), g.size());
                        const T ds = simd::dot(t.value(x).values.data(), g.data(), g.size());
                        t.accumulate_value(s, 0, ds);
                    });
    }

    // ---- linear algebra ----------------------------------------------------

    Var matmul(Var a, Var b) {
        const Tensor<T>& ta = value(a);
        const Tensor<T>& tb = value(b);
        const std::size_t m = ta.rows(), k = ta.cols();
        const std::size_t k2 = tb.rows(), n = tb.cols();
        if (tb.shape.size() != 2)
            throw ShapeError("matmul right operand must be 2-D, got " + tb.shape_string());
        if (k != k2)
            throw ShapeError("matmul inner extents differ: " + ta.shape_string() + " vs " +
                             tb.shape_string());
        Tensor<T> out({m, n});
        for (std::size_t i = 0; i < m; ++i) {
            T* ci = out.row_ptr(i);
            const T* ai = ta.row_ptr(i);
            for (std::size_t l = 0; l < k; ++l) simd::axpy(ai[l], tb.row_ptr(l), ci, n);
        }
        return push(std::move(out), flops::matmul(m, k, n), {a, b},
                    [a, b, m, k, n](Tape& t, const std::vector<T>& g) {
                        const Tensor<T>& A = t.value(a);
                        const Tensor<T>& B = t.value(b);
                        if (t.needs_grad(a)) {
                            std::vector<T>& ga = t.grad_buf(a);
                            for (std::size_t i = 0; i < m; ++i) {
                                const T* gi = g.data() + i * n;
                                T* gai = ga.data() + i * k;
                                for (std::size_t l = 0; l < k; ++l)
                                    gai[l] += simd::dot(gi, B.row_ptr(l), n);
                            }
                        }
                        if (t.needs_grad(b)) {
                            std::vector<T>& gb = t.grad_buf(b);
                            for (std::size_t i = 0; i < m; ++i) {
                                const T* gi = g.data() + i * n;
                                const T* ai = A.row_ptr(i);
                                for (std::size_t l = 0; l < k; ++l)
                                    simd::axpy(ai[l], gi, gb.data() + l * n, n);
                            }
                        }
                    });
    }

    Var transpose(Var a) {
        const Tensor<T>& ta = value(a);
        const std::size_t r = ta.rows(), c = ta.cols();
        Tensor<T> out({c, r});
        for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < c; ++j) out.at(j, i) = ta.at(i, j);
        return push(std::move(out), 0, {a}, [a, r, c](Tape& t, const std::vector<T>& g) {
            std::vector<T>& ga = t.grad_buf(a);
            for (std::size_t i = 0; i < r; ++i)
                for (std::size_t j = 0; j < c; ++j) ga[i * c + j] += g[j * r + i];
        });
    }

    Var reshape(Var a, std::vector<std::size_t> shape) {
        const Tensor<T>& ta = value(a);
        if (Tensor<T>::numel_of(shape) != ta.numel())
            throw ShapeError("reshape from " + ta.shape_string() + " to " +
                             Tensor<T>::shape_string(shape) + " changes element count");
        Tensor<T> out(std::move(shape), ta.values);
        return push(std::move(out), 0, {a}, [a](Tape& t, const std::vector<T>& g) {
            t.accumulate(a, g.data(), g.size());
        });
    }

    // ---- concatenation / slicing -------------------------------------------

    /// Token-axis concatenation (stack rows).
    Var concat_rows(Var a, Var b) {
        const Tensor<T>& ta = value(a);
        const Tensor<T>& tb = value(b);
        if (ta.cols() != tb.cols())
            throw ShapeError("concat_rows column mismatch: " + ta.shape_string() + " vs " +
                             tb.shape_string());
        const std::size_t ra = ta.rows(), rb = tb.rows(), c = ta.cols();
        Tensor<T> out({ra + rb, c});
        std::copy(ta.values.begin(), ta.values.end(), out.values.begin());
        std::copy(tb.values.begin(), tb.values.end(), out.values.begin() + ra * c);
        return push(std::move(out), 0, {a, b}, [a, b, ra, rb, c](Tape& t, const std::vector<T>& g) {
            t.accumulate(a, g.data(), ra * c);
            t.accumulate(b, g.data() + ra * c, rb * c);
        });
    }

    /// Channel-axis concatenation (C-Concat: join along the feature dim).
    Var concat_cols(Var a, Var b) {
        const Tensor<T>& ta = value(a);
        const Tensor<T>& tb = value(b);
        if (ta.rows() != tb.rows())
            throw ShapeError("concat_cols row mismatch: " + ta.shape_string() + " vs " +
                             tb.shape_string());
        const std::size_t r = ta.rows(), ca = ta.cols(), cb = tb.cols();
        Tensor<T> out({r, ca + cb});
        for (std::size_t i = 0; i < r; ++i) {
            std::copy(ta.row_ptr(i), ta.row_ptr(i) + ca, out.row_ptr(i));
            std::copy(tb.row_ptr(i), tb.row_ptr(i) + cb, out.row_ptr(i) + ca);
        }
        return push(std::move(out), 0, {a, b}, [a, b, r, ca, cb](Tape& t, const std::vector<T>& g) {
            if (t.needs_grad(a)) {
                std::vector<T>& ga = t.grad_buf(a);
                for (std::size_t i = 0; i < r; ++i)
                    for (std::size_t j = 0; j < ca; ++j) ga[i * ca + j] += g[i * (ca + cb) + j];
            }
            if (t.needs_grad(b)) {
                std::vector<T>& gb = t.grad_buf(b);
                for (std::size_t i = 0; i < r; ++i)
                    for (std::size_t j = 0; j < cb; ++j)
                        gb[i * cb + j] += g[i * (ca + cb) + ca + j];
            }
        });
    }

    /// Rows [r0, r1) of x.
    Var slice_rows(Var x, std::size_t r0, std::size_t r1) {
        const Tensor<T>& tx = value(x);
        const std::size_t r = tx.rows(), c = tx.cols();
        if (r0 >= r1 || r1 > r)
            throw ShapeError("slice_rows [" + std::to_string(r0) + "," + std::to_string(r1) +
                             ") out of range for " + tx.shape_string());
        Tensor<T> out({r1 - r0, c});
        std::copy(tx.values.begin() + r0 * c, tx.values.begin() + r1 * c, out.values.begin());
        return push(std::move(out), 0, {x}, [x, r0, c](Tape& t, const std::vector<T>& g) {
            std::vector<T>& gx = t.grad_buf(x);
            simd::add(gx.data() + r0 * c, g.data(), gx.data() + r0 * c, g.size());
        });
    }

    /// Columns [c0, c1) of x.
    Var slice_cols(Var x, std::size_t c0, std::size_t c1) {
        const Tensor<T>& tx = value(x);
        const std::size_t r = tx.rows(), c = tx.cols();
        if (c0 >= c1 || c1 > c)
            throw ShapeError("slice_cols [" + std::to_string(c0) + "," + std::to_string(c1) +
                             ") out of range for " + tx.shape_string());
        const std::size_t w = c1 - c0;
        Tensor<T> out({r, w});
        for (std::size_t i = 0; i < r; ++i)
            std::copy(tx.row_ptr(i) + c0, tx.row_ptr(i) + c1, out.row_ptr(i));
        return push(std::move(out), 0, {x}, [x, r, c, c0, w](Tape& t, const std::vector<T>& g) {
            std::vector<T>& gx = t.grad_buf(x);
            for (std::size_t i = 0; i < r; ++i)
                for (std::size_t j = 0; j < w; ++j) gx[i * c + c0 + j] += g[i * w + j];
        });
    }

    // ---- normalization / activations ----------------------------------------

    /// Row-wise softmax over the last axis, stabilized by max subtraction.
    Var softmax_rows(Var x) { return softmax_impl(x, false); }

    /// Softmax over a square score matrix where row i attends to columns
    /// 0..i only (autoregressive mask).
    Var causal_softmax_rows(Var x) {
        const Tensor<T>& tx = value(x);
        if (tx.rows() != tx.cols())
            throw ShapeError("causal softmax expects square scores, got " + tx.shape_string());
        return softmax_impl(x, true);
    }

    Var layernorm(Var x, Var gamma, Var beta, T eps) {
        const Tensor<T>& tx = value(x);
        const Tensor<T>& tg = value(gamma);
        const Tensor<T>& tb = value(beta);
        const std::size_t r = tx.rows(), c = tx.cols();
        if (tg.numel() != c || tb.numel() != c)
            throw ShapeError("layernorm affine params must have length " + std::to_string(c));
        Tensor<T> out({r, c});
        if (tx.shape.size() == 1) out.shape = tx.shape;
        std::vector<T> xhat(r * c);
        std::vector<T> inv(r);
        for (std::size_t i = 0; i < r; ++i) {
            const T* xi = tx.row_ptr(i);
            T mu = simd::sum(xi, c) / static_cast<T>(c);
            T var = T(0);
            for (std::size_t j = 0; j < c; ++j) {
                const T d = xi[j] - mu;
                var += d * d;
            }
            var /= static_cast<T>(c);
            const T iv = T(1) / std::sqrt(var + eps);
            inv[i] = iv;
            T* oi = out.values.data() + i * c;
            for (std::size_t j = 0; j < c; ++j) {
                const T h = (xi[j] - mu) * iv;
                xhat[i * c + j] = h;
                oi[j] = tg.values[j] * h + tb.values[j];
            }
        }
        return push(std::move(out), flops::layernorm(r * c), {x, gamma, beta},
                    [x, gamma, beta, r, c, xhat = std::move(xhat),
                     inv = std::move(inv)](Tape& t, const std::vector<T>& g) {
                        const Tensor<T>& tg = t.value(gamma);
                        if (t.needs_grad(gamma)) {
                            std::vector<T>& gg = t.grad_buf(gamma);
                            for (std::size_t i = 0; i < r; ++i)
                                for (std::size_t j = 0; j < c; ++j)
                                    gg[j] += g[i * c + j] * xhat[i * c + j];
                        }
                        if (t.needs_grad(beta)) {
                            std::vector<T>& gb = t.grad_buf(beta);
                            for (std::size_t i = 0; i < r; ++i)
                                for (std::size_t j = 0; j < c; ++j) gb[j] += g[i * c + j];
                        }
                        if (t.needs_grad(x)) {
                            std::vector<T>& gx = t.grad_buf(x);
                            std::vector<T> gy(c);
                            for (std::size_t i = 0; i < r; ++i) {
                                T mean_gy = T(0), mean_gyx = T(0);
                                for (std::size_t j = 0; j < c; ++j) {
                                    gy[j] = g[i * c + j] * tg.values[j];
                                    mean_gy += gy[j];
                                    mean_gyx += gy[j] * xhat[i * c + j];
                                }
                                mean_gy /= static_cast<T>(c);
                                mean_gyx /= static_cast<T>(c);
                                for (std::size_t j = 0; j < c; ++j)
                                    gx[i * c + j] +=
                                        inv[i] * (gy[j] - mean_gy - xhat[i * c + j] * mean_gyx);
                            }
                        }
                    });
    }

    /// Add a length-c bias vector to every row of x.
    Var bias_add(Var x, Var b) {
        const Tensor<T>& tx = value(x);
        const Tensor<T>& tb = value(b);
        const std::size_t r = tx.rows(), c = tx.cols();
        if (tb.numel() != c)
            throw ShapeError("bias_add length mismatch: " + tx.shape_string() + " vs " +
                             tb.shape_string());
        Tensor<T> out = tx;
        out.grad.reset();
        out.requires_grad = false;
        for (std::size_t i = 0; i < r; ++i)
            simd::add(out.row_ptr(i), tb.values.data(), out.row_ptr(i), c);
        return push(std::move(out), flops::elementwise(r * c), {x, b},
                    [x, b, r, c](Tape& t, const std::vector<T>& g) {
                        t.accumulate(x, g.data(), g.size());
                        if (t.needs_grad(b)) {
                            std::vector<T>& gb = t.grad_buf(b);
                            for (std::size_t i = 0; i < r; ++i)
                                simd::add(gb.data(), g.data() + i * c, gb.data(), c);
                        }
                    });
    }

    Var relu(Var x) {
        const Tensor<T>& tx = value(x);
        Tensor<T> out(tx.shape);
        for (std::size_t i = 0; i < tx.numel(); ++i)
            out.values[i] = tx.values[i] > T(0) ? tx.values[i] : T(0);
        return push(std::move(out), flops::relu(tx.numel()), {x},
                    [x](Tape& t, const std::vector<T>& g) {
                        std::vector<T>& gx = t.grad_buf(x);
                        const Tensor<T>& tx = t.value(x);
                        for (std::size_t i = 0; i < g.size(); ++i)
                            if (tx.values[i] > T(0)) gx[i] += g[i];
                    });
    }

    /// Exact (erf-based) GELU.
    Var gelu(Var x) {
        const Tensor<T>& tx = value(x);
        Tensor<T> out(tx.shape);
        for (std::size_t i = 0; i < tx.numel(); ++i) {
            const double v = static_cast<double>(tx.values[i]);
            out.values[i] = static_cast<T>(0.5 * v * (1.0 + std::erf(v * 0.7071067811865475244)));
        }
        return push(std::move(out), flops::gelu(tx.numel()), {x},
                    [x](Tape& t, const std::vector<T>& g) {
                        std::vector<T>& gx = t.grad_buf(x);
                        const Tensor<T>& tx = t.value(x);
                        for (std::size_t i = 0; i < g.size(); ++i) {
                            const double v = static_cast<double>(tx.values[i]);
                            const double phi = std::exp(-0.5 * v * v) * 0.3989422804014326779;
                            const double Phi = 0.5 * (1.0 + std::erf(v * 0.7071067811865475244));
                            gx[i] += g[i] * static_cast<T>(Phi + v * phi);
                        }
                    });
    }

    /// Row lookup: out[i, :] = table[ids[i], :]. Lookup is free under the
    /// flop convention; backward scatter-adds into the table gradient.
    Var embedding(Var table, const std::vector<int>& ids) {
        const Tensor<T>& tt = value(table);
        const std::size_t v = tt.rows(), d = tt.cols();
        for (int id : ids)
            if (id < 0 || static_cast<std::size_t>(id) >= v)
                throw ConfigError("embedding id " + std::to_string(id) +
                                  " out of range for table " + tt.shape_string());
        Tensor<T> out({ids.size(), d});
        for (std::size_t i = 0; i < ids.size(); ++i)
            std::copy(tt.row_ptr(ids[i]), tt.row_ptr(ids[i]) + d, out.row_ptr(i));
        return push(std::move(out), 0, {table}, [table, ids, d](Tape& t, const std::vector<T>& g) {
            std::vector<T>& gt = t.grad_buf(table);
            for (std::size_t i = 0; i < ids.size(); ++i)
                simd::add(gt.data() + ids[i] * d, g.data() + i * d, gt.data() + ids[i] * d, d);
        });
    }

    /// Mean over rows -> 1 x c.
    Var mean_rows(Var x) {
        const Tensor<T>& tx = value(x);
        const std::size_t r = tx.rows(), c = tx.cols();
        Tensor<T> out({1, c});
        for (std::size_t i = 0; i < r; ++i)
            simd::add(out.values.data(), tx.row_ptr(i), out.values.data(), c);
        simd::scale(out.values.data(), T(1) / static_cast<T>(r), out.values.data(), c);
        return push(std::move(out), flops::mean_rows(r, c), {x},
                    [x, r, c](Tape& t, const std::vector<T>& g) {
                        std::vector<T>& gx = t.grad_buf(x);
                        const T s = T(1) / static_cast<T>(r);
                        for (std::size_t i = 0; i < r; ++i)
                            simd::axpy(s, g.data(), gx.data() + i * c, c);
                    });
    }

    /// Sum of all elements -> 1 x 1.
    Var sum_all(Var x) {
        const Tensor<T>& tx = value(x);
        Tensor<T> out({1, 1});
        out.values[0] = simd::sum(tx.values.data(), tx.numel());
        return push(std::move(out), flops::elementwise(tx.numel()), {x},
                    [x](Tape& t, const std::vector<T>& g) {
                        std::vector<T>& gx = t.grad_buf(x);
                        const T s = g[0];
                        for (auto& v : gx) v += s;
                    });
    }

    /// Mean token-level cross-entropy of logits [t x V] against integer
    /// targets, computed via log-sum-exp -> 1 x 1.
    Var cross_entropy_rows(Var logits, const std::vector<int>& targets) {
        const Tensor<T>& tl = value(logits);
        const std::size_t r = tl.rows(), c = tl.cols();
        if (targets.size() != r)
            throw ShapeError("cross_entropy targets length " + std::to_string(targets.size()) +
                             " vs logits " + tl.shape_string());
        for (int y : targets)
            if (y < 0 || static_cast<std::size_t>(y) >= c)
                throw ConfigError("cross_entropy target " + std::to_string(y) + " out of range");
        std::vector<T> probs(r * c);
        T loss = T(0);
        for (std::size_t i = 0; i < r; ++i) {
            const T* zi = tl.row_ptr(i);
            const T m = simd::max(zi, c);
            T s = T(0);
            for (std::size_t j = 0; j < c; ++j) {
                const T e = std::exp(zi[j] - m);
                probs[i * c + j] = e;
                s += e;
            }
            const T lse = m + std::log(s);
            simd::scale(probs.data() + i * c, T(1) / s, probs.data() + i * c, c);
            loss += lse - zi[targets[i]];
        }
        Tensor<T> out({1, 1});
        out.values[0] = loss / static_cast<T>(r);
        return push(std::move(out), flops::cross_entropy(r, c), {logits},
                    [logits, targets, r, c, probs = std::move(probs)](Tape& t,
                                                                      const std::vector<T>& g) {
                        std::vector<T>& gl = t.grad_buf(logits);
                        const T s = g[0] / static_cast<T>(r);
                        for (std::size_t i = 0; i < r; ++i) {
                            simd::axpy(s, probs.data() + i * c, gl.data() + i * c, c);
                            gl[i * c + targets[i]] -= s;
                        }
                    });
    }

    /// Inverted-scale dropout. p == 0 records nothing extra.
    Var dropout(Var x, T p, RandomSource& rng) {
        if (p <= T(0)) return x;
        if (p >= T(1)) throw ConfigError("dropout rate must be < 1");
        const Tensor<T>& tx = value(x);
        std::vector<T> mask(tx.numel());
        const T keep = T(1) - p;
        for (auto& m : mask) m = rng.uniform() < static_cast<double>(p) ? T(0) : T(1) / keep;
        Tensor<T> out(tx.shape);
        simd::mul(tx.values.data(), mask.data(), out.values.data(), out.numel());
        return push(std::move(out), flops::elementwise(tx.numel()), {x},
                    [x, mask = std::move(mask)](Tape& t, const std::vector<T>& g) {
                        t.accumulate_product(x, g.data(), mask.data(), g.size());
                    });
    }

    // ---- backward ----------------------------------------------------------

    /// Reverse sweep from a scalar loss. Fills gradient buffers for every
    /// node on a grad path; leaves recorded with param() get the result
    /// accumulated into their tensor's grad slot when write_back is set.
    void backward(Var loss, T seed = T(1), bool write_back = true) {
        Node& ln = nodes_[check(loss)];
        if (ln.val().numel() != 1)
            throw ShapeError("backward requires a scalar loss, got " + ln.val().shape_string());
        grad_buf(loss)[0] += seed;
        for (std::int32_t i = loss.id; i >= 0; --i) {
            Node& n = nodes_[i];
            if (!n.needs_grad || n.grad.empty() || !n.pull) continue;
            n.pull(*this, n.grad);
        }
        if (write_back) {
            for (Node& n : nodes_) {
                if (n.external && n.external->requires_grad && !n.grad.empty()) {
                    n.external->ensure_grad();
                    simd::add(n.external->grad->data(), n.grad.data(), n.external->grad->data(),
                              n.grad.size());
                }
            }
        }
    }

    bool needs_grad(Var v) const { return nodes_[check(v)].needs_grad; }

    /// Gradient buffer of a node, allocated on first touch.
    std::vector<T>& grad_buf(Var v) {
        Node& n = nodes_[check(v)];
        if (n.grad.empty()) n.grad.assign(n.val().numel(), T(0));
        return n.grad;
    }

private:
    struct Node {
        Tensor<T> owned;
        Tensor<T>* external = nullptr;
        std::vector<T> grad;
        bool needs_grad = false;
        std::function<void(Tape&, const std::vector<T>&)> pull;

        const Tensor<T>& val() const { return external ? *external : owned; }
    };

    std::int32_t check(Var v) const {
        if (!v.valid() || static_cast<std::size_t>(v.id) >= nodes_.size())
            throw ShapeError("invalid tape handle");
        return v.id;
    }

    void require_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) const {
        if (a.shape != b.shape)
            throw ShapeError(std::string(op) + " shape mismatch: " + a.shape_string() + " vs " +
                             b.shape_string());
    }

    Var push(Tensor<T> out, std::int64_t fl, std::initializer_list<Var> inputs,
             std::function<void(Tape&, const std::vector<T>&)> pull) {
        Node n;
        n.owned = std::move(out);
        for (Var in : inputs)
            if (nodes_[check(in)].needs_grad) n.needs_grad = true;
        if (n.needs_grad) n.pull = std::move(pull);
        flops_ += fl;
        nodes_.push_back(std::move(n));
        return Var{static_cast<std::int32_t>(nodes_.size() - 1)};
    }

    void accumulate(Var v, const T* g, std::size_t n) {
        if (!needs_grad(v)) return;
        std::vector<T>& buf = grad_buf(v);
        simd::add(buf.data(), g, buf.data(), n);
    }

    void accumulate_scaled(Var v, T s, const T* g, std::size_t n) {
        if (!needs_grad(v)) return;
        simd::axpy(s, g, grad_buf(v).data(), n);
    }

    void accumulate_product(Var v, const T* g, const T* w, std::size_t n) {
        if (!needs_grad(v)) return;
        std::vector<T>& buf = grad_buf(v);
        for (std::size_t i = 0; i < n; ++i) buf[i] += g[i] * w[i];
    }

    void accumulate_value(Var v, std::size_t index, T g) {
        if (!needs_grad(v)) return;
        grad_buf(v)[index] += g;
    }

    Var softmax_impl(Var x, bool causal) {
        const Tensor<T>& tx = value(x);
        const std::size_t r = tx.rows(), c = tx.cols();
        Tensor<T> out(tx.shape);
        for (std::size_t i = 0; i < r; ++i) {
            const T* xi = tx.values.data() + i * c;
            T* oi = out.values.data() + i * c;
            const std::size_t span = causal ? i + 1 : c;
            const T m = simd::max(xi, span);
            T s = T(0);
            for (std::size_t j = 0; j < span; ++j) {
                oi[j] = std::exp(xi[j] - m);
                s += oi[j];
            }
            simd::scale(oi, T(1) / s, oi, span);
            for (std::size_t j = span; j < c; ++j) oi[j] = T(0);
        }
        Var out_var = push(std::move(out), flops::softmax(r * c), {x}, nullptr);
        if (nodes_[out_var.id].needs_grad) {
            // dx = y * (g - sum(g*y)); masked positions have y == 0 so the
            // same formula covers the causal case
            nodes_[out_var.id].pull = [x, r, c, out_var](Tape& t, const std::vector<T>& g) {
                std::vector<T>& gx = t.grad_buf(x);
                const Tensor<T>& y = t.value(out_var);
                for (std::size_t i = 0; i < r; ++i) {
                    const T* yi = y.values.data() + i * c;
                    const T* gi = g.data() + i * c;
                    const T dp = simd::dot(gi, yi, c);
                    for (std::size_t j = 0; j < c; ++j) gx[i * c + j] += yi[j] * (gi[j] - dp);
                }
            };
        }
        return out_var;
    }

    std::vector<Node> nodes_;
    std::int64_t flops_ = 0;
};

}  // namespace fusionlab
