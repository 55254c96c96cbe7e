#pragma once

#include <string>
#include <vector>

#include "fusionlab/attention.hpp"
#include "fusionlab/fusion.hpp"
#include "fusionlab/nn.hpp"
#include "fusionlab/tape.hpp"

namespace fusionlab {

enum class HeadKind { Decoder, LinearClassifier };

inline std::string head_kind_name(HeadKind h) {
    return h == HeadKind::Decoder ? "decoder" : "classifier";
}

inline HeadKind head_kind_from_name(const std::string& name) {
    if (name == "decoder") return HeadKind::Decoder;
    if (name == "classifier") return HeadKind::LinearClassifier;
    throw ConfigError("unknown head kind: " + name);
}

/// Whole-pipeline configuration. encoder_blocks is the total block budget;
/// variants that spend part of it on their own attention stages run a
/// correspondingly shallower self-attention encoder (see
/// resolved_encoder_blocks).
struct ModelSpec {
    std::size_t model_dim = 64;
    std::size_t vocab_size = 32;
    std::size_t max_text_len = 32;
    std::size_t max_answer_len = 8;
    std::size_t encoder_blocks = 2;
    std::size_t decoder_blocks = 2;
    HeadKind head = HeadKind::Decoder;
    std::size_t num_classes = 0;
    FusionSpec fusion;
    std::size_t grid_h = 3, grid_w = 3;
    std::size_t cell_feature_dim = 16;
    int bos_id = 0;
    int eos_id = 1;

    std::size_t vision_tokens() const { return grid_h * grid_w; }

    /// Self-attention blocks left for the shared multimodal encoder after
    /// the fusion stage takes its share of the budget: compound tokens
    /// spends two cross-attention blocks, the text-as-query variant one, and
    /// the co-attention/co-tokenization variants carry all their blocks
    /// internally.
    std::size_t resolved_encoder_blocks() const {
        switch (fusion.variant) {
            case FusionVariant::MergedAttention: return encoder_blocks;
            case FusionVariant::CompoundTokens:
                return encoder_blocks >= 2 ? encoder_blocks - 2 : 0;
            case FusionVariant::CompoundTokensTAQ:
                return encoder_blocks >= 1 ? encoder_blocks - 1 : 0;
            case FusionVariant::CoAttention:
            case FusionVariant::CoTokenization: return 0;
        }
        return encoder_blocks;
    }

    void validate() const {
        if (model_dim == 0) throw ConfigError("model_dim must be positive");
        if (fusion.model_dim != model_dim)
            throw ConfigError("fusion dim " + std::to_string(fusion.model_dim) +
                              " does not match model dim " + std::to_string(model_dim));
        fusion.validate();
        if (vocab_size < 3) throw ConfigError("vocab_size must cover begin/end markers plus words");
        if (bos_id < 0 || eos_id < 0 || static_cast<std::size_t>(bos_id) >= vocab_size ||
            static_cast<std::size_t>(eos_id) >= vocab_size || bos_id == eos_id)
            throw ConfigError("begin/end token ids must be distinct and within the vocab");
        if (max_text_len == 0 || max_answer_len == 0)
            throw ConfigError("sequence length limits must be positive");
        if (grid_h == 0 || grid_w == 0) throw ConfigError("image grid extents must be positive");
        if (cell_feature_dim == 0) throw ConfigError("cell_feature_dim must be positive");
        if (head == HeadKind::Decoder && decoder_blocks == 0)
            throw ConfigError("decoder head needs at least one block");
        if (head == HeadKind::LinearClassifier && num_classes < 2)
            throw ConfigError("classifier head needs at least two classes");
    }
};

/// Options for a single forward pass; dropout requires an RNG.
template <typename T>
struct ForwardOptions {
    T dropout = T(0);
    RandomSource* rng = nullptr;
};

/// The end-to-end pipeline: stub patch/text encoders, modality biases,
/// fusion, shared self-attention encoder, and either an autoregressive
/// decoder with a vocab projection or a linear classifier over mean-pooled
/// encoder output.
template <typename T = float>
struct Model {
    ModelSpec spec;

    LinearParams<T> patch_embed;  // cell features -> d
    Tensor<T> image_pos;          // N x d
    EmbeddingParams<T> token_embed;
    Tensor<T> text_pos;    // max_text_len x d
    Tensor<T> vision_bias;  // d, added per vision token before fusion
    Tensor<T> text_bias;    // d
    FusionModule<T> fusion;
    std::vector<TransformerBlockParams<T>> encoder;

    // decoder head
    Tensor<T> answer_pos;  // (max_answer_len + 1) x d, position 0 is the begin marker
    std::vector<DecoderBlockParams<T>> decoder;
    LayerNormParams<T> final_ln;
    LinearParams<T> lm_head;  // d -> vocab

    // classifier head
    LinearParams<T> classifier;  // d -> num_classes

    static Model init(const ModelSpec& spec, RandomSource& rng) {
        spec.validate();
        Model m;
        m.spec = spec;
        const std::size_t d = spec.model_dim;
        m.patch_embed = LinearParams<T>::init(spec.cell_feature_dim, d, rng);
        m.image_pos = normal_tensor<T>({spec.vision_tokens(), d}, rng, 0.0, 0.02);
        m.image_pos.requires_grad = true;
        m.token_embed = EmbeddingParams<T>::init(spec.vocab_size, d, rng);
        m.text_pos = normal_tensor<T>({spec.max_text_len, d}, rng, 0.0, 0.02);
        m.text_pos.requires_grad = true;
        m.vision_bias = zeros<T>({d});
        m.vision_bias.requires_grad = true;
        m.text_bias = zeros<T>({d});
        m.text_bias.requires_grad = true;
        m.fusion = FusionModule<T>::init(spec.fusion, rng);
        for (std::size_t b = 0; b < spec.resolved_encoder_blocks(); ++b)
            m.encoder.push_back(TransformerBlockParams<T>::init(d, spec.fusion.heads, rng));
        if (spec.head == HeadKind::Decoder) {
            m.answer_pos = normal_tensor<T>({spec.max_answer_len + 1, d}, rng, 0.0, 0.02);
            m.answer_pos.requires_grad = true;
            for (std::size_t b = 0; b < spec.decoder_blocks; ++b)
                m.decoder.push_back(DecoderBlockParams<T>::init(d, spec.fusion.heads, rng));
            m.final_ln = LayerNormParams<T>::init(d);
            m.lm_head = LinearParams<T>::init(d, spec.vocab_size, rng);
        } else {
            m.classifier = LinearParams<T>::init(d, spec.num_classes, rng);
        }
        return m;
    }

    /// Patch-embed per-cell features and add learned 2-D position embeddings.
    TokenSeq encode_image(Tape<T>& t, const Tensor<T>& cell_features) {
        const std::size_t n = spec.vision_tokens();
        if (cell_features.rows() != n || cell_features.cols() != spec.cell_feature_dim)
            throw ShapeError("image features " + cell_features.shape_string() +
                             " do not match grid " + std::to_string(spec.grid_h) + "x" +
                             std::to_string(spec.grid_w) + " with " +
                             std::to_string(spec.cell_feature_dim) + " features per cell");
        Var tokens = patch_embed.apply(t, t.leaf(cell_features));
        tokens = t.add(tokens, t.param(image_pos));
        return TokenSeq{tokens, Modality::Vision};
    }

    /// Embed token ids and add position embeddings for the occupied slots.
    TokenSeq encode_text(Tape<T>& t, const std::vector<int>& ids) {
        if (ids.empty()) throw ConfigError("text input must hold at least one token");
        if (ids.size() > spec.max_text_len)
            throw ConfigError("text length " + std::to_string(ids.size()) +
                              " exceeds max_text_len " + std::to_string(spec.max_text_len));
        Var tokens = token_embed.apply(t, ids);
        tokens = t.add(tokens, t.slice_rows(t.param(text_pos), 0, ids.size()));
        return TokenSeq{tokens, Modality::Text};
    }

    /// Encoders -> modality biases -> fusion -> shared self-attention stack.
    Var encode_fused(Tape<T>& t, const Tensor<T>& image, const std::vector<int>& question_ids,
                     const ForwardOptions<T>& opts = {}) {
        TokenSeq vision = encode_image(t, image);
        TokenSeq text = encode_text(t, question_ids);
        vision.tokens = t.bias_add(vision.tokens, t.param(vision_bias));
        text.tokens = t.bias_add(text.tokens, t.param(text_bias));
        Var h = fusion.apply(t, vision, text).tokens;
        if (opts.dropout > T(0)) h = t.dropout(h, opts.dropout, *opts.rng);
        for (auto& block : encoder) h = transformer_block(t, block, h);
        return h;
    }

    /// Teacher-forced decoding loss: the decoder sees [begin] + answer and is
    /// trained to emit answer + [end], token-level mean cross-entropy.
    Var forward_generative(Tape<T>& t, const Tensor<T>& image,
                           const std::vector<int>& question_ids,
                           const std::vector<int>& answer_ids,
                           const ForwardOptions<T>& opts = {}) {
        require_head(HeadKind::Decoder);
        if (answer_ids.size() > spec.max_answer_len)
            throw ConfigError("answer length " + std::to_string(answer_ids.size()) +
                              " exceeds max_answer_len " + std::to_string(spec.max_answer_len));
        Var memory = encode_fused(t, image, question_ids, opts);
        Var logits = answer_logits(t, memory, answer_ids, opts);
        std::vector<int> targets = answer_ids;
        targets.push_back(spec.eos_id);
        return t.cross_entropy_rows(logits, targets);
    }

    /// Greedy decoding until the end marker or max_len tokens.
    std::vector<int> generate(const Tensor<T>& image, const std::vector<int>& question_ids,
                              std::size_t max_len) {
        require_head(HeadKind::Decoder);
        std::vector<int> out;
        if (max_len == 0) return out;
        Tape<T> t;
        Var memory = encode_fused(t, image, question_ids);
        for (std::size_t step = 0; step < std::min(max_len, spec.max_answer_len); ++step) {
            Var logits = answer_logits(t, memory, out, {});
            const Tensor<T>& lv = t.value(logits);
            const std::size_t last = lv.rows() - 1;
            int best = 0;
            for (std::size_t j = 1; j < lv.cols(); ++j)
                if (lv.at(last, j) > lv.at(last, best)) best = static_cast<int>(j);
            if (best == spec.eos_id) break;
            out.push_back(best);
        }
        return out;
    }

    /// Mean-pool the fused encoding and project to class logits.
    Var forward_classify(Tape<T>& t, const Tensor<T>& image,
                         const std::vector<int>& question_ids,
                         const ForwardOptions<T>& opts = {}) {
        require_head(HeadKind::LinearClassifier);
        Var pooled = t.mean_rows(encode_fused(t, image, question_ids, opts));
        return classifier.apply(t, pooled);
    }

    void visit(const ParamVisitor<T>& fn) {
        patch_embed.visit("img.patch", fn);
        fn("img.pos", image_pos);
        token_embed.visit("txt.embed", fn);
        fn("txt.pos", text_pos);
        fn("mod.vision_bias", vision_bias);
        fn("mod.text_bias", text_bias);
        fusion.visit("fusion", fn);
        for (std::size_t b = 0; b < encoder.size(); ++b)
            encoder[b].visit("enc.b" + std::to_string(b), fn);
        if (spec.head == HeadKind::Decoder) {
            fn("dec.pos", answer_pos);
            for (std::size_t b = 0; b < decoder.size(); ++b)
                decoder[b].visit("dec.b" + std::to_string(b), fn);
            final_ln.visit("dec.final_ln", fn);
            lm_head.visit("dec.lm_head", fn);
        } else {
            classifier.visit("head.classifier", fn);
        }
    }

    std::size_t parameter_count() {
        std::size_t n = 0;
        visit([&](const std::string&, Tensor<T>& p) { n += p.numel(); });
        return n;
    }

    /// Stable fingerprint of every parameter outside the head, for surgery
    /// checks.
    std::uint64_t trunk_checksum() {
        std::uint64_t h = 0xcbf29ce484222325ull;
        visit([&](const std::string& name, Tensor<T>& p) {
            if (name.rfind("dec.", 0) == 0 || name.rfind("head.", 0) == 0) return;
            h = fnv1a64(name.data(), name.size(), h);
            h = fnv1a64(p.values.data(), p.values.size() * sizeof(T), h);
        });
        return h;
    }

    /// Causally masked decoder pass over [begin] + prefix against the fused
    /// memory, projected to vocab logits, one row per input position.
    Var answer_logits(Tape<T>& t, Var memory, const std::vector<int>& prefix,
                      const ForwardOptions<T>& opts) {
        std::vector<int> input_ids = {spec.bos_id};
        input_ids.insert(input_ids.end(), prefix.begin(), prefix.end());
        Var h = token_embed.apply(t, input_ids);
        h = t.add(h, t.slice_rows(t.param(answer_pos), 0, input_ids.size()));
        if (opts.dropout > T(0)) h = t.dropout(h, opts.dropout, *opts.rng);
        for (auto& block : decoder) h = decoder_block(t, block, h, memory);
        return lm_head.apply(t, final_ln.apply(t, h));
    }

private:
    void require_head(HeadKind needed) const {
        if (spec.head != needed)
            throw ConfigError(std::string("model is configured with a ") +
                              head_kind_name(spec.head) + " head, not a " +
                              head_kind_name(needed) + " head");
    }
};

/// Replace a generative model's decoder with a freshly initialized linear
/// classifier, carrying every trunk weight over unchanged.
template <typename T>
Model<T> head_swap(Model<T>& source, std::size_t num_classes, RandomSource& rng) {
    if (source.spec.head != HeadKind::Decoder)
        throw ConfigError("head swap expects a decoder-headed source model");
    ModelSpec spec = source.spec;
    spec.head = HeadKind::LinearClassifier;
    spec.num_classes = num_classes;
    Model<T> swapped = Model<T>::init(spec, rng);
    std::vector<std::pair<std::string, Tensor<T>*>> here;
    swapped.visit([&](const std::string& name, Tensor<T>& p) {
        if (name.rfind("head.", 0) != 0) here.emplace_back(name, &p);
    });
    std::size_t matched = 0;
    source.visit([&](const std::string& name, Tensor<T>& p) {
        if (name.rfind("dec.", 0) == 0) return;
        if (matched >= here.size() || here[matched].first != name)
            throw ConfigError("head swap walked mismatched parameters at " + name);
        here[matched].second->values = p.values;
        ++matched;
    });
    if (matched != here.size())
        throw ConfigError("head swap did not cover every trunk parameter");
    return swapped;
}

}  // namespace fusionlab
