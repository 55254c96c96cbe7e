#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "fusionlab/nn.hpp"
#include "fusionlab/tape.hpp"

namespace fusionlab {

/// Self-attention draws queries from the same token sequence as the context;
/// cross-attention draws them from a different one. The wrappers enforce the
/// distinction so a caller cannot mislabel a call site.
enum class AttentionKind { SelfAttention, CrossAttention };

/// Softmax dot-product attention. Scores q_i.k_j are divided by sqrt of the
/// feature dim of q/k before the row softmax; each output row is a convex
/// combination of rows of v.
template <typename T>
Var scaled_dot_attention(Tape<T>& t, Var q, Var k, Var v, bool causal = false) {
    const Tensor<T>& tq = t.value(q);
    const Tensor<T>& tk = t.value(k);
    const Tensor<T>& tv = t.value(v);
    if (tq.cols() != tk.cols())
        throw ShapeError("attention query/key feature dims differ: " + tq.shape_string() +
                         " vs " + tk.shape_string());
    if (tk.rows() != tv.rows())
        throw ShapeError("attention key/value lengths differ: " + tk.shape_string() + " vs " +
                         tv.shape_string());
    const T inv_sqrt_d = T(1) / static_cast<T>(std::sqrt(static_cast<double>(tq.cols())));
    Var scores = t.scale(t.matmul(q, t.transpose(k)), inv_sqrt_d);
    Var alpha = causal ? t.causal_softmax_rows(scores) : t.softmax_rows(scores);
    return t.matmul(alpha, v);
}

/// Per-head projection matrices plus the output projection. Projections are
/// bias-free; num_heads * head_dim must equal the output dim of w_o's input
/// side, which w_o maps back to the model dim.
template <typename T = float>
struct MultiHeadParams {
    std::size_t num_heads = 0;
    std::size_t head_dim = 0;
    std::vector<LinearParams<T>> w_q, w_k, w_v;  // each model-dim x head-dim
    LinearParams<T> w_o;                         // (num_heads*head_dim) x model-dim

    static MultiHeadParams init(std::size_t d_model, std::size_t num_heads, RandomSource& rng) {
        if (num_heads == 0 || d_model % num_heads != 0)
            throw ConfigError("attention heads (" + std::to_string(num_heads) +
                              ") must divide the model dim (" + std::to_string(d_model) + ")");
        MultiHeadParams p;
        p.num_heads = num_heads;
        p.head_dim = d_model / num_heads;
        for (std::size_t h = 0; h < num_heads; ++h) {
            p.w_q.push_back(LinearParams<T>::init(d_model, p.head_dim, rng, false));
            p.w_k.push_back(LinearParams<T>::init(d_model, p.head_dim, rng, false));
            p.w_v.push_back(LinearParams<T>::init(d_model, p.head_dim, rng, false));
        }
        p.w_o = LinearParams<T>::init(num_heads * p.head_dim, d_model, rng, false);
        return p;
    }

    void visit(const std::string& prefix, const ParamVisitor<T>& fn) {
        for (std::size_t h = 0; h < num_heads; ++h) {
            const std::string hp = prefix + ".h" + std::to_string(h);
            w_q[h].visit(hp + ".wq", fn);
            w_k[h].visit(hp + ".wk", fn);
            w_v[h].visit(hp + ".wv", fn);
        }
        w_o.visit(prefix + ".wo", fn);
    }
};

/// Heads run scaled_dot_attention on their own projections, concatenate on
/// the channel axis, and pass through the output projection. Output length
/// equals the query length.
template <typename T>
Var multi_head_attention(Tape<T>& t, MultiHeadParams<T>& p, Var queries, Var context,
                         AttentionKind kind, bool causal = false) {
    if (kind == AttentionKind::SelfAttention && queries.id != context.id)
        throw ConfigError("self-attention requires queries and context from the same sequence");
    if (kind == AttentionKind::CrossAttention && queries.id == context.id)
        throw ConfigError("cross-attention requires a context distinct from the queries");
    Var heads{};
    for (std::size_t h = 0; h < p.num_heads; ++h) {
        Var qh = p.w_q[h].apply(t, queries);
        Var kh = p.w_k[h].apply(t, context);
        Var vh = p.w_v[h].apply(t, context);
        Var oh = scaled_dot_attention(t, qh, kh, vh, causal);
        heads = h == 0 ? oh : t.concat_cols(heads, oh);
    }
    return p.w_o.apply(t, heads);
}

/// Pre-norm residual block: x + MHA(LN(x)) followed by + MLP(LN(.)).
/// The MLP widens by mlp_ratio and uses GELU.
template <typename T = float>
struct TransformerBlockParams {
    LayerNormParams<T> ln1, ln2;
    MultiHeadParams<T> attn;
    LinearParams<T> fc1, fc2;

    static TransformerBlockParams init(std::size_t d, std::size_t heads, RandomSource& rng,
                                       std::size_t mlp_ratio = 4) {
        TransformerBlockParams p;
        p.ln1 = LayerNormParams<T>::init(d);
        p.ln2 = LayerNormParams<T>::init(d);
        p.attn = MultiHeadParams<T>::init(d, heads, rng);
        p.fc1 = LinearParams<T>::init(d, d * mlp_ratio, rng);
        p.fc2 = LinearParams<T>::init(d * mlp_ratio, d, rng);
        return p;
    }

    void visit(const std::string& prefix, const ParamVisitor<T>& fn) {
        ln1.visit(prefix + ".ln1", fn);
        attn.visit(prefix + ".attn", fn);
        ln2.visit(prefix + ".ln2", fn);
        fc1.visit(prefix + ".fc1", fn);
        fc2.visit(prefix + ".fc2", fn);
    }
};

template <typename T>
Var transformer_block(Tape<T>& t, TransformerBlockParams<T>& p, Var x) {
    Var normed = p.ln1.apply(t, x);
    x = t.add(x, multi_head_attention(t, p.attn, normed, normed, AttentionKind::SelfAttention));
    Var h = p.fc2.apply(t, t.gelu(p.fc1.apply(t, p.ln2.apply(t, x))));
    return t.add(x, h);
}

/// Cross-attention analogue of the pre-norm block: queries and context are
/// normalized separately, then x + MHA(LNq(x), LNc(ctx)) and + MLP(LN2(.)).
template <typename T = float>
struct CrossBlockParams {
    LayerNormParams<T> ln_q, ln_c, ln2;
    MultiHeadParams<T> attn;
    LinearParams<T> fc1, fc2;

    static CrossBlockParams init(std::size_t d, std::size_t heads, RandomSource& rng,
                                 std::size_t mlp_ratio = 4) {
        CrossBlockParams p;
        p.ln_q = LayerNormParams<T>::init(d);
        p.ln_c = LayerNormParams<T>::init(d);
        p.ln2 = LayerNormParams<T>::init(d);
        p.attn = MultiHeadParams<T>::init(d, heads, rng);
        p.fc1 = LinearParams<T>::init(d, d * mlp_ratio, rng);
        p.fc2 = LinearParams<T>::init(d * mlp_ratio, d, rng);
        return p;
    }

    void visit(const std::string& prefix, const ParamVisitor<T>& fn) {
        ln_q.visit(prefix + ".lnq", fn);
        ln_c.visit(prefix + ".lnc", fn);
        attn.visit(prefix + ".attn", fn);
        ln2.visit(prefix + ".ln2", fn);
        fc1.visit(prefix + ".fc1", fn);
        fc2.visit(prefix + ".fc2", fn);
    }
};

template <typename T>
Var cross_attention_block(Tape<T>& t, CrossBlockParams<T>& p, Var x, Var context) {
    Var attended = multi_head_attention(t, p.attn, p.ln_q.apply(t, x), p.ln_c.apply(t, context),
                                        AttentionKind::CrossAttention);
    x = t.add(x, attended);
    Var h = p.fc2.apply(t, t.gelu(p.fc1.apply(t, p.ln2.apply(t, x))));
    return t.add(x, h);
}

/// Decoder block: causal self-attention, cross-attention into the encoder
/// memory, then the MLP, each with its own pre-norm.
template <typename T = float>
struct DecoderBlockParams {
    LayerNormParams<T> ln1, ln2, ln_mem, ln3;
    MultiHeadParams<T> self_attn, cross_attn;
    LinearParams<T> fc1, fc2;

    static DecoderBlockParams init(std::size_t d, std::size_t heads, RandomSource& rng,
                                   std::size_t mlp_ratio = 4) {
        DecoderBlockParams p;
        p.ln1 = LayerNormParams<T>::init(d);
        p.ln2 = LayerNormParams<T>::init(d);
        p.ln_mem = LayerNormParams<T>::init(d);
        p.ln3 = LayerNormParams<T>::init(d);
        p.self_attn = MultiHeadParams<T>::init(d, heads, rng);
        p.cross_attn = MultiHeadParams<T>::init(d, heads, rng);
        p.fc1 = LinearParams<T>::init(d, d * mlp_ratio, rng);
        p.fc2 = LinearParams<T>::init(d * mlp_ratio, d, rng);
        return p;
    }

    void visit(const std::string& prefix, const ParamVisitor<T>& fn) {
        ln1.visit(prefix + ".ln1", fn);
        self_attn.visit(prefix + ".self", fn);
        ln2.visit(prefix + ".ln2", fn);
        ln_mem.visit(prefix + ".lnmem", fn);
        cross_attn.visit(prefix + ".cross", fn);
        ln3.visit(prefix + ".ln3", fn);
        fc1.visit(prefix + ".fc1", fn);
        fc2.visit(prefix + ".fc2", fn);
    }
};

/// Shared body for blocks built as self-attention, cross-attention into a
/// second sequence, then the MLP. The decoder uses it with a causal mask;
/// co-attention branches use it unmasked.
template <typename T>
Var self_cross_ff_block(Tape<T>& t, DecoderBlockParams<T>& p, Var x, Var context, bool causal) {
    Var n1 = p.ln1.apply(t, x);
    x = t.add(x, multi_head_attention(t, p.self_attn, n1, n1, AttentionKind::SelfAttention,
                                      causal));
    Var attended = multi_head_attention(t, p.cross_attn, p.ln2.apply(t, x),
                                        p.ln_mem.apply(t, context), AttentionKind::CrossAttention);
    x = t.add(x, attended);
    Var h = p.fc2.apply(t, t.gelu(p.fc1.apply(t, p.ln3.apply(t, x))));
    return t.add(x, h);
}

template <typename T>
Var decoder_block(Tape<T>& t, DecoderBlockParams<T>& p, Var x, Var memory) {
    return self_cross_ff_block(t, p, x, memory, /*causal=*/true);
}

}  // namespace fusionlab
