#pragma once

#include <cstdint>
#include <cstdio>
#include <string>
#include <vector>

#include "fusionlab/flops.hpp"
#include "fusionlab/model.hpp"

// Analytic flop and parameter accounting. Every function mirrors the exact
// op stream the corresponding forward pass records on a tape under the
// shared convention in flops.hpp, so analytic and instrumented counts can be
// compared with ==, not a tolerance.

namespace fusionlab::cost {

struct Cost {
    std::int64_t flops = 0;
    std::int64_t params = 0;
    Cost& operator+=(const Cost& o) {
        flops += o.flops;
        params += o.params;
        return *this;
    }
    friend Cost operator+(Cost a, const Cost& b) { return a += b; }
};

/// tokens x in -> tokens x out. Zero tokens cost no flops but the weights
/// still exist.
inline Cost count_linear(std::int64_t in, std::int64_t out, std::int64_t tokens,
                         bool bias = true) {
    if (in <= 0 || out <= 0 || tokens < 0)
        throw ConfigError("count_linear needs positive dims and nonnegative tokens");
    return {flops::linear(tokens, in, out, bias), in * out + (bias ? out : 0)};
}

/// Multi-head attention, q_len queries over kv_len context at width d.
/// Per head (head_dim = d/heads, all projections bias-free):
///   q/k/v projections        2·q·d·hd + 2·2·kv·d·hd
///   scores q @ k^T           2·q·hd·kv
///   1/sqrt(hd) scale         q·kv
///   softmax                  5·q·kv
///   weighted sum             2·q·kv·hd
/// plus the output projection 2·q·d·d.
inline Cost count_attention(std::int64_t q_len, std::int64_t kv_len, std::int64_t d,
                            std::int64_t heads) {
    if (q_len <= 0 || kv_len <= 0 || d <= 0 || heads <= 0)
        throw ConfigError("count_attention needs positive dims");
    if (d % heads != 0) throw ConfigError("head count must divide width");
    const std::int64_t hd = d / heads;
    Cost c;
    c.flops += heads * (flops::linear(q_len, d, hd, false) +
                        2 * flops::linear(kv_len, d, hd, false) +
                        flops::matmul(q_len, hd, kv_len) + flops::elementwise(q_len * kv_len) +
                        flops::softmax(q_len * kv_len) + flops::matmul(q_len, kv_len, hd));
    c.flops += flops::linear(q_len, d, d, false);
    c.params = heads * 3 * d * hd + d * d;
    return c;
}

namespace detail {

// pre-norm MLP: LN, d -> 4d, GELU, 4d -> d, residual add
inline Cost feedforward(std::int64_t tokens, std::int64_t d) {
    Cost c;
    c.flops = flops::layernorm(tokens * d) + flops::linear(tokens, d, 4 * d) +
              flops::gelu(tokens * 4 * d) + flops::linear(tokens, 4 * d, d) +
              flops::elementwise(tokens * d);
    c.params = 2 * d + (d * 4 * d + 4 * d) + (4 * d * d + d);
    return c;
}

}  // namespace detail

/// Pre-norm self-attention block: LN, attention, residual, then the MLP.
inline Cost count_transformer_block(std::int64_t tokens, std::int64_t d, std::int64_t heads) {
    Cost c;
    c.flops = flops::layernorm(tokens * d);
    c += count_attention(tokens, tokens, d, heads);
    c.flops += flops::elementwise(tokens * d);
    c.params += 2 * d;
    c += detail::feedforward(tokens, d);
    return c;
}

/// Pre-norm cross-attention block: both sides normed, attention, residual
/// on the query side, then the MLP over the query tokens.
inline Cost count_cross_block(std::int64_t q_len, std::int64_t kv_len, std::int64_t d,
                              std::int64_t heads) {
    Cost c;
    c.flops = flops::layernorm(q_len * d) + flops::layernorm(kv_len * d);
    c += count_attention(q_len, kv_len, d, heads);
    c.flops += flops::elementwise(q_len * d);
    c.params += 2 * 2 * d;
    c += detail::feedforward(q_len, d);
    return c;
}

/// Self-attention, cross-attention into memory, then the MLP; the decoder
/// block and the co-attention branch block share this structure.
inline Cost count_decoder_block(std::int64_t q_len, std::int64_t mem_len, std::int64_t d,
                                std::int64_t heads) {
    Cost c;
    c.flops = flops::layernorm(q_len * d);
    c += count_attention(q_len, q_len, d, heads);
    c.flops += flops::elementwise(q_len * d);
    c.flops += flops::layernorm(q_len * d) + flops::layernorm(mem_len * d);
    c += count_attention(q_len, mem_len, d, heads);
    c.flops += flops::elementwise(q_len * d);
    c.params += 3 * 2 * d;  // the feedforward term carries its own norm
    c += detail::feedforward(q_len, d);
    return c;
}

inline std::int64_t fused_tokens(const FusionSpec& spec, std::int64_t n, std::int64_t m) {
    switch (spec.variant) {
        case FusionVariant::MergedAttention:
        case FusionVariant::CompoundTokens:
        case FusionVariant::CoAttention: return n + m;
        case FusionVariant::CompoundTokensTAQ: return m;
        case FusionVariant::CoTokenization:
            return static_cast<std::int64_t>(spec.co_tok_learned_tokens) + m;
    }
    return n + m;
}

/// Fusion-stage cost for n vision and m text tokens entering at width d.
inline Cost count_fusion(const FusionSpec& spec, std::int64_t n, std::int64_t m) {
    spec.validate();
    if (n <= 0 || m <= 0) throw ConfigError("count_fusion needs positive token counts");
    const std::int64_t d = static_cast<std::int64_t>(spec.model_dim);
    const std::int64_t heads = static_cast<std::int64_t>(spec.heads);
    const std::int64_t half = d / 2;
    Cost c;
    const auto combine = [&](std::int64_t tokens) {
        switch (spec.combine_op) {
            case CombineOp::ChannelConcat: return Cost{0, 0};
            case CombineOp::Weighting:
                return Cost{3 * flops::elementwise(tokens * half), 2};
            case CombineOp::Summation:
            case CombineOp::ElementwiseProduct:
                return Cost{flops::elementwise(tokens * half), 0};
        }
        return Cost{0, 0};
    };
    const auto reproject = [&](std::int64_t tokens) {
        return spec.combine_op == CombineOp::ChannelConcat ? Cost{0, 0}
                                                           : count_linear(half, d, tokens);
    };
    switch (spec.variant) {
        case FusionVariant::MergedAttention: return c;
        case FusionVariant::CompoundTokens:
            c += count_linear(d, half, n);
            c += count_linear(d, half, m);
            c += count_cross_block(n, m, half, heads);
            c += count_cross_block(m, n, half, heads);
            c += combine(n);
            c += combine(m);
            c += reproject(n + m);
            return c;
        case FusionVariant::CompoundTokensTAQ:
            c += count_linear(d, half, n);
            c += count_linear(d, half, m);
            c += count_cross_block(m, n, half, heads);
            c += combine(m);
            c += reproject(m);
            return c;
        case FusionVariant::CoAttention:
            for (std::size_t b = 0; b < spec.co_attention_blocks; ++b) {
                c += count_decoder_block(n, m, d, heads);
                c += count_decoder_block(m, n, d, heads);
            }
            return c;
        case FusionVariant::CoTokenization: {
            const std::int64_t k = static_cast<std::int64_t>(spec.co_tok_learned_tokens);
            for (std::size_t r = 0; r < spec.co_tok_rounds; ++r) {
                c += count_linear(d, k, n, false);  // pooling logits
                c.flops += flops::softmax(k * n) + flops::matmul(k, n, d);
                for (std::size_t b = 0; b < spec.co_tok_blocks_per_round; ++b)
                    c += count_transformer_block(k + m, d, heads);
            }
            return c;
        }
    }
    return c;
}

struct CostReport {
    struct Component {
        std::string name;
        std::int64_t flops = 0;
        std::int64_t params = 0;
    };
    std::vector<Component> components;

    void add(const std::string& name, const Cost& c) {
        components.push_back({name, c.flops, c.params});
    }
    std::int64_t total_flops() const {
        std::int64_t s = 0;
        for (const auto& c : components) s += c.flops;
        return s;
    }
    std::int64_t total_params() const {
        std::int64_t s = 0;
        for (const auto& c : components) s += c.params;
        return s;
    }
    std::int64_t flops_of(const std::string& name) const { return find(name).flops; }
    std::int64_t params_of(const std::string& name) const { return find(name).params; }

    std::string table() const {
        std::string out;
        char line[128];
        std::snprintf(line, sizeof line, "%-16s %16s %16s\n", "component", "flops", "params");
        out += line;
        for (const auto& c : components) {
            std::snprintf(line, sizeof line, "%-16s %16lld %16lld\n", c.name.c_str(),
                          static_cast<long long>(c.flops), static_cast<long long>(c.params));
            out += line;
        }
        std::snprintf(line, sizeof line, "%-16s %16lld %16lld\n", "total",
                      static_cast<long long>(total_flops()),
                      static_cast<long long>(total_params()));
        out += line;
        return out;
    }

private:
    const Component& find(const std::string& name) const {
        for (const auto& c : components)
            if (c.name == name) return c;
        throw ConfigError("no cost component named " + name);
    }
};

/// Inference forward cost of the whole pipeline at the model spec's maximum
/// sequence lengths: question at max_text_len, and for the decoder head a
/// teacher-forced pass over the full answer window through the vocab
/// projection (loss excluded).
inline CostReport count_model(const ModelSpec& spec) {
    spec.validate();
    const std::int64_t d = static_cast<std::int64_t>(spec.model_dim);
    const std::int64_t heads = static_cast<std::int64_t>(spec.fusion.heads);
    const std::int64_t n = static_cast<std::int64_t>(spec.vision_tokens());
    const std::int64_t m = static_cast<std::int64_t>(spec.max_text_len);
    const std::int64_t v = static_cast<std::int64_t>(spec.vocab_size);
    const std::int64_t ft = fused_tokens(spec.fusion, n, m);
    CostReport report;

    Cost image = count_linear(static_cast<std::int64_t>(spec.cell_feature_dim), d, n);
    image.flops += flops::elementwise(n * d);  // position add
    image.params += n * d;
    report.add("image_encoder", image);

    Cost text;  // embedding lookup is free under the convention
    text.flops = flops::elementwise(m * d);
    text.params = v * d + static_cast<std::int64_t>(spec.max_text_len) * d;
    report.add("text_encoder", text);

    Cost bias{flops::elementwise(n * d) + flops::elementwise(m * d), 2 * d};
    report.add("modality_bias", bias);

    report.add("fusion", count_fusion(spec.fusion, n, m));

    Cost encoder;
    for (std::size_t b = 0; b < spec.resolved_encoder_blocks(); ++b)
        encoder += count_transformer_block(ft, d, heads);
    report.add("encoder", encoder);

    if (spec.head == HeadKind::Decoder) {
        const std::int64_t a = static_cast<std::int64_t>(spec.max_answer_len) + 1;
        Cost dec;
        dec.flops = flops::elementwise(a * d);  // position add
        dec.params = a * d;
        for (std::size_t b = 0; b < spec.decoder_blocks; ++b)
            dec += count_decoder_block(a, ft, d, heads);
        dec.flops += flops::layernorm(a * d);
        dec.params += 2 * d;
        dec += count_linear(d, v, a);
        report.add("decoder", dec);
    } else {
        Cost head;
        head.flops = flops::mean_rows(ft, d);
        head += count_linear(d, static_cast<std::int64_t>(spec.num_classes), 1);
        report.add("classifier", head);
    }
    return report;
}

}  // namespace fusionlab::cost
