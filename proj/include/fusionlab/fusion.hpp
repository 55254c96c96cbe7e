#pragma once

#include <string>
#include <vector>

#include "fusionlab/attention.hpp"
#include "fusionlab/nn.hpp"
#include "fusionlab/tape.hpp"

namespace fusionlab {

enum class FusionVariant {
    MergedAttention,
    CoAttention,
    CompoundTokens,
    CompoundTokensTAQ,
    CoTokenization,
};

enum class CombineOp { ChannelConcat, Weighting, Summation, ElementwiseProduct };

enum class Modality { Vision, Text, Fused };

/// Tokens on a tape plus the modality tag the fusion wrappers check.
struct TokenSeq {
    Var tokens;
    Modality modality = Modality::Fused;
};

std::string fusion_variant_name(FusionVariant v);
FusionVariant fusion_variant_from_name(const std::string& name);
std::string combine_op_name(CombineOp op);
CombineOp combine_op_from_name(const std::string& name);

/// Configuration for one fusion strategy. Depth defaults: 6 co-attention
/// blocks per branch; 3 tokenization rounds of 4 blocks pooling to 64 learned
/// tokens.
struct FusionSpec {
    FusionVariant variant = FusionVariant::CompoundTokens;
    CombineOp combine_op = CombineOp::ChannelConcat;
    std::size_t model_dim = 64;
    std::size_t heads = 4;
    std::size_t co_attention_blocks = 6;
    std::size_t co_tok_rounds = 3;
    std::size_t co_tok_learned_tokens = 64;
    std::size_t co_tok_blocks_per_round = 4;

    bool is_compound() const {
        return variant == FusionVariant::CompoundTokens ||
               variant == FusionVariant::CompoundTokensTAQ;
    }

    void validate() const {
        if (model_dim < 2) throw ConfigError("fusion model_dim must be at least 2");
        if (heads == 0) throw ConfigError("fusion heads must be positive");
        if (model_dim % heads != 0)
            throw ConfigError("heads (" + std::to_string(heads) + ") must divide model_dim (" +
                              std::to_string(model_dim) + ")");
        if (is_compound()) {
            if (model_dim % 2 != 0)
                throw ConfigError("compound-tokens fusion needs an even model_dim, got " +
                                  std::to_string(model_dim));
            if ((model_dim / 2) % heads != 0)
                throw ConfigError("heads must divide the halved dim " +
                                  std::to_string(model_dim / 2) + " for compound-tokens fusion");
        }
        if (variant == FusionVariant::CoAttention && co_attention_blocks == 0)
            throw ConfigError("co-attention needs at least one block per branch");
        if (variant == FusionVariant::CoTokenization &&
            (co_tok_rounds == 0 || co_tok_learned_tokens == 0 || co_tok_blocks_per_round == 0))
            throw ConfigError("co-tokenization depths must be positive");
    }
};

/// Learnable mixing scalars for the weighted combine, initialized uniformly
/// on [0, 1).
template <typename T = float>
struct CombineScalars {
    Tensor<T> alpha, beta;

    static CombineScalars init(RandomSource& rng) {
        CombineScalars s;
        s.alpha = uniform_tensor<T>({1}, rng, 0.0, 1.0);
        s.beta = uniform_tensor<T>({1}, rng, 0.0, 1.0);
        s.alpha.requires_grad = true;
        s.beta.requires_grad = true;
        return s;
    }

    void visit(const std::string& prefix, const ParamVisitor<T>& fn) {
        fn(prefix + ".alpha", alpha);
        fn(prefix + ".beta", beta);
    }
};

/// Combine a branch's own tokens q with its cross-attended tokens x:
/// channel concat [q ‖ x], weighted sum alpha*q + beta*x, plain sum, or
/// elementwise product. Only the weighted form takes scalars.
template <typename T>
Var compound_combine(Tape<T>& t, Var q, Var x, CombineOp op, CombineScalars<T>* scalars) {
    if ((op == CombineOp::Weighting) != (scalars != nullptr))
        throw ConfigError("combine scalars are required for weighting and only for weighting");
    const Tensor<T>& tq = t.value(q);
    const Tensor<T>& tx = t.value(x);
    if (tq.shape != tx.shape)
        throw ShapeError("combine inputs must match: " + tq.shape_string() + " vs " +
                         tx.shape_string());
    switch (op) {
        case CombineOp::ChannelConcat: return t.concat_cols(q, x);
        case CombineOp::Weighting:
            return t.add(t.scale_by(q, t.param(scalars->alpha)),
                         t.scale_by(x, t.param(scalars->beta)));
        case CombineOp::Summation: return t.add(q, x);
        case CombineOp::ElementwiseProduct: return t.mul(q, x);
    }
    throw ConfigError("unknown combine op");
}

/// One fusion strategy with its parameters. Construction materializes only
/// the tensors the chosen variant uses, so parameter censuses reflect the
/// variant faithfully (merged attention owns none).
template <typename T = float>
struct FusionModule {
    FusionSpec spec;

    // compound-tokens branches (full variant uses both cross blocks, the
    // text-as-query variant only the text one)
    LinearParams<T> proj_vision, proj_text;  // d -> d/2
    CrossBlockParams<T> cross_vision;        // queries = projected vision
    CrossBlockParams<T> cross_text;          // queries = projected text
    CombineScalars<T> vision_scalars, text_scalars;
    LinearParams<T> reproject;  // d/2 -> d, for combine ops that keep dim d/2

    // co-attention branches
    std::vector<DecoderBlockParams<T>> co_vision_blocks, co_text_blocks;

    // co-tokenization rounds
    std::vector<LinearParams<T>> pool_logits;                    // d -> learned tokens
    std::vector<std::vector<TransformerBlockParams<T>>> rounds;  // blocks per round

    static FusionModule init(const FusionSpec& spec, RandomSource& rng) {
        spec.validate();
        FusionModule m;
        m.spec = spec;
        const std::size_t d = spec.model_dim;
        const std::size_t half = d / 2;
        switch (spec.variant) {
            case FusionVariant::MergedAttention: break;
            case FusionVariant::CompoundTokens:
            case FusionVariant::CompoundTokensTAQ: {
                m.proj_vision = LinearParams<T>::init(d, half, rng);
                m.proj_text = LinearParams<T>::init(d, half, rng);
                if (spec.variant == FusionVariant::CompoundTokens)
                    m.cross_vision = CrossBlockParams<T>::init(half, spec.heads, rng);
                m.cross_text = CrossBlockParams<T>::init(half, spec.heads, rng);
                if (spec.combine_op == CombineOp::Weighting) {
                    if (spec.variant == FusionVariant::CompoundTokens)
                        m.vision_scalars = CombineScalars<T>::init(rng);
                    m.text_scalars = CombineScalars<T>::init(rng);
                }
                if (spec.combine_op != CombineOp::ChannelConcat)
                    m.reproject = LinearParams<T>::init(half, d, rng);
                break;
            }
            case FusionVariant::CoAttention:
                for (std::size_t b = 0; b < spec.co_attention_blocks; ++b) {
                    m.co_vision_blocks.push_back(DecoderBlockParams<T>::init(d, spec.heads, rng));
                    m.co_text_blocks.push_back(DecoderBlockParams<T>::init(d, spec.heads, rng));
                }
                break;
            case FusionVariant::CoTokenization:
                for (std::size_t r = 0; r < spec.co_tok_rounds; ++r) {
                    m.pool_logits.push_back(
                        LinearParams<T>::init(d, spec.co_tok_learned_tokens, rng, false));
                    std::vector<TransformerBlockParams<T>> blocks;
                    for (std::size_t b = 0; b < spec.co_tok_blocks_per_round; ++b)
                        blocks.push_back(TransformerBlockParams<T>::init(d, spec.heads, rng));
                    m.rounds.push_back(std::move(blocks));
                }
                break;
        }
        return m;
    }

    /// Linear map into half the embedding width, applied per token.
    Var project_half(Tape<T>& t, const TokenSeq& seq) {
        if (!spec.is_compound())
            throw ConfigError("half projection only exists for compound-tokens variants");
        LinearParams<T>& proj = seq.modality == Modality::Vision ? proj_vision : proj_text;
        return proj.apply(t, seq.tokens);
    }

    /// Token-axis concatenation, no parameters: rows ordered [vision; text].
    Var fuse_merged(Tape<T>& t, const TokenSeq& vision, const TokenSeq& text) {
        check_inputs(t, vision, text);
        return t.concat_rows(vision.tokens, text.tokens);
    }

    /// Both branches: project to d/2, cross-attend into the other projected
    /// branch, combine with the branch's own projected tokens, then join on
    /// the token axis. Token count is N+M, the same as merged attention.
    Var fuse_compound_tokens(Tape<T>& t, const TokenSeq& vision, const TokenSeq& text) {
        check_inputs(t, vision, text);
        Var vi = project_half(t, vision);
        Var tx = project_half(t, text);
        Var vi_attended = cross_attention_block(t, cross_vision, vi, tx);
        Var tx_attended = cross_attention_block(t, cross_text, tx, vi);
        CombineScalars<T>* vs =
            spec.combine_op == CombineOp::Weighting ? &vision_scalars : nullptr;
        CombineScalars<T>* ts = spec.combine_op == CombineOp::Weighting ? &text_scalars : nullptr;
        Var v_cmpd = compound_combine(t, vi, vi_attended, spec.combine_op, vs);
        Var t_cmpd = compound_combine(t, tx, tx_attended, spec.combine_op, ts);
        return finish_compound(t, t.concat_rows(v_cmpd, t_cmpd));
    }

    /// Single cross-attention with the text tokens as queries over the
    /// projected vision context; output keeps only the M text positions.
    Var fuse_compound_taq(Tape<T>& t, const TokenSeq& vision, const TokenSeq& text) {
        check_inputs(t, vision, text);
        Var vi = project_half(t, vision);
        Var tx = project_half(t, text);
        Var tx_attended = cross_attention_block(t, cross_text, tx, vi);
        CombineScalars<T>* ts = spec.combine_op == CombineOp::Weighting ? &text_scalars : nullptr;
        return finish_compound(t, compound_combine(t, tx, tx_attended, spec.combine_op, ts));
    }

    /// Parallel branches; each block applies self-attention, cross-attention
    /// into the other branch's tokens at block entry, and a feedforward.
    std::pair<Var, Var> fuse_co_attention(Tape<T>& t, const TokenSeq& vision,
                                          const TokenSeq& text) {
        check_inputs(t, vision, text);
        Var v = vision.tokens, x = text.tokens;
        for (std::size_t b = 0; b < spec.co_attention_blocks; ++b) {
            Var v_next = self_cross_ff_block(t, co_vision_blocks[b], v, x, false);
            Var x_next = self_cross_ff_block(t, co_text_blocks[b], x, v, false);
            v = v_next;
            x = x_next;
        }
        return {v, x};
    }

    /// One pooling step: per learned slot, softmax weights over the vision
    /// token axis, then the weighted sum. Every pooled token is a convex
    /// combination of the input vision tokens.
    Var pool_vision(Tape<T>& t, Var vision_tokens, std::size_t round) {
        Var logits = t.transpose(pool_logits[round].apply(t, vision_tokens));  // slots x N
        return t.matmul(t.softmax_rows(logits), vision_tokens);
    }

    /// Each round pools the original vision tokens down to a fixed set of
    /// learned tokens, joins them with the carried text tokens, and runs this
    /// round's transformer blocks.
    Var fuse_co_tokenization(Tape<T>& t, const TokenSeq& vision, const TokenSeq& text) {
        check_inputs(t, vision, text);
        const std::size_t k = spec.co_tok_learned_tokens;
        const std::size_t m = t.value(text.tokens).rows();
        Var carried_text = text.tokens;
        Var fused{};
        for (std::size_t r = 0; r < spec.co_tok_rounds; ++r) {
            fused = t.concat_rows(pool_vision(t, vision.tokens, r), carried_text);
            for (auto& block : rounds[r]) fused = transformer_block(t, block, fused);
            carried_text = t.slice_rows(fused, k, k + m);
        }
        return fused;
    }

    /// Dispatch on the configured variant; always returns fused tokens at the
    /// full model dim.
    TokenSeq apply(Tape<T>& t, const TokenSeq& vision, const TokenSeq& text) {
        Var out{};
        switch (spec.variant) {
            case FusionVariant::MergedAttention: out = fuse_merged(t, vision, text); break;
            case FusionVariant::CompoundTokens: out = fuse_compound_tokens(t, vision, text); break;
            case FusionVariant::CompoundTokensTAQ:
                out = fuse_compound_taq(t, vision, text);
                break;
            case FusionVariant::CoAttention: {
                auto [v, x] = fuse_co_attention(t, vision, text);
                out = t.concat_rows(v, x);
                break;
            }
            case FusionVariant::CoTokenization:
                out = fuse_co_tokenization(t, vision, text);
                break;
        }
        return TokenSeq{out, Modality::Fused};
    }

    /// Fused token count for given input lengths, before any encoder stack.
    std::size_t fused_length(std::size_t n_vision, std::size_t m_text) const {
        switch (spec.variant) {
            case FusionVariant::MergedAttention:
            case FusionVariant::CompoundTokens:
            case FusionVariant::CoAttention: return n_vision + m_text;
            case FusionVariant::CompoundTokensTAQ: return m_text;
            case FusionVariant::CoTokenization: return spec.co_tok_learned_tokens + m_text;
        }
        return 0;
    }

    void visit(const std::string& prefix, const ParamVisitor<T>& fn) {
        switch (spec.variant) {
            case FusionVariant::MergedAttention: break;
            case FusionVariant::CompoundTokens:
            case FusionVariant::CompoundTokensTAQ:
                proj_vision.visit(prefix + ".projv", fn);
                proj_text.visit(prefix + ".projt", fn);
                if (spec.variant == FusionVariant::CompoundTokens)
                    cross_vision.visit(prefix + ".crossv", fn);
                cross_text.visit(prefix + ".crosst", fn);
                if (spec.combine_op == CombineOp::Weighting) {
                    if (spec.variant == FusionVariant::CompoundTokens)
                        vision_scalars.visit(prefix + ".scalev", fn);
                    text_scalars.visit(prefix + ".scalet", fn);
                }
                if (spec.combine_op != CombineOp::ChannelConcat)
                    reproject.visit(prefix + ".reproject", fn);
                break;
            case FusionVariant::CoAttention:
                for (std::size_t b = 0; b < co_vision_blocks.size(); ++b) {
                    co_vision_blocks[b].visit(prefix + ".v" + std::to_string(b), fn);
                    co_text_blocks[b].visit(prefix + ".t" + std::to_string(b), fn);
                }
                break;
            case FusionVariant::CoTokenization:
                for (std::size_t r = 0; r < rounds.size(); ++r) {
                    const std::string rp = prefix + ".r" + std::to_string(r);
                    pool_logits[r].visit(rp + ".pool", fn);
                    for (std::size_t b = 0; b < rounds[r].size(); ++b)
                        rounds[r][b].visit(rp + ".b" + std::to_string(b), fn);
                }
                break;
        }
    }

private:
    void check_inputs(Tape<T>& t, const TokenSeq& vision, const TokenSeq& text) const {
        if (vision.modality != Modality::Vision || text.modality != Modality::Text)
            throw ConfigError("fusion expects a vision sequence and a text sequence");
        const Tensor<T>& tv = t.value(vision.tokens);
        const Tensor<T>& tt = t.value(text.tokens);
        if (tv.cols() != spec.model_dim || tt.cols() != spec.model_dim)
            throw ShapeError("fusion inputs must have dim " + std::to_string(spec.model_dim) +
                             ": " + tv.shape_string() + " vs " + tt.shape_string());
    }

    // combine ops other than channel concat leave tokens at d/2; map them
    // back to d so every variant feeds the same encoder width
    Var finish_compound(Tape<T>& t, Var fused) {
        if (spec.combine_op == CombineOp::ChannelConcat) return fused;
        return reproject.apply(t, fused);
    }
};

inline std::string fusion_variant_name(FusionVariant v) {
    switch (v) {
        case FusionVariant::MergedAttention: return "merged_attention";
        case FusionVariant::CoAttention: return "co_attention";
        case FusionVariant::CompoundTokens: return "compound_tokens";
        case FusionVariant::CompoundTokensTAQ: return "compound_tokens_taq";
        case FusionVariant::CoTokenization: return "co_tokenization";
    }
    return "unknown";
}

inline FusionVariant fusion_variant_from_name(const std::string& name) {
    if (name == "merged_attention") return FusionVariant::MergedAttention;
    if (name == "co_attention") return FusionVariant::CoAttention;
    if (name == "compound_tokens") return FusionVariant::CompoundTokens;
    if (name == "compound_tokens_taq") return FusionVariant::CompoundTokensTAQ;
    if (name == "co_tokenization") return FusionVariant::CoTokenization;
    throw ConfigError("unknown fusion variant: " + name);
}

inline std::string combine_op_name(CombineOp op) {
    switch (op) {
        case CombineOp::ChannelConcat: return "channel_concat";
        case CombineOp::Weighting: return "weighting";
        case CombineOp::Summation: return "summation";
        case CombineOp::ElementwiseProduct: return "elementwise_product";
    }
    return "unknown";
}

inline CombineOp combine_op_from_name(const std::string& name) {
    if (name == "channel_concat") return CombineOp::ChannelConcat;
    if (name == "weighting") return CombineOp::Weighting;
    if (name == "summation") return CombineOp::Summation;
    if (name == "elementwise_product") return CombineOp::ElementwiseProduct;
    throw ConfigError("unknown combine op: " + name);
}

}  // namespace fusionlab
