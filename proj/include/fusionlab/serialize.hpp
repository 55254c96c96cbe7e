#pragma once

#include <bit>
#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "fusionlab/model.hpp"

namespace fusionlab {

inline void to_json(nlohmann::json& j, const FusionSpec& s) {
    j = nlohmann::json{{"variant", fusion_variant_name(s.variant)},
                       {"combine_op", combine_op_name(s.combine_op)},
                       {"model_dim", s.model_dim},
                       {"heads", s.heads},
                       {"co_attention_blocks", s.co_attention_blocks},
                       {"co_tok_rounds", s.co_tok_rounds},
                       {"co_tok_learned_tokens", s.co_tok_learned_tokens},
                       {"co_tok_blocks_per_round", s.co_tok_blocks_per_round}};
}

inline void from_json(const nlohmann::json& j, FusionSpec& s) {
    s.variant = fusion_variant_from_name(j.at("variant").get<std::string>());
    s.combine_op = combine_op_from_name(j.at("combine_op").get<std::string>());
    j.at("model_dim").get_to(s.model_dim);
    j.at("heads").get_to(s.heads);
    j.at("co_attention_blocks").get_to(s.co_attention_blocks);
    j.at("co_tok_rounds").get_to(s.co_tok_rounds);
    j.at("co_tok_learned_tokens").get_to(s.co_tok_learned_tokens);
    j.at("co_tok_blocks_per_round").get_to(s.co_tok_blocks_per_round);
}

inline void to_json(nlohmann::json& j, const ModelSpec& s) {
    j = nlohmann::json{{"model_dim", s.model_dim},
                       {"vocab_size", s.vocab_size},
                       {"max_text_len", s.max_text_len},
                       {"max_answer_len", s.max_answer_len},
                       {"encoder_blocks", s.encoder_blocks},
                       {"decoder_blocks", s.decoder_blocks},
                       {"head", head_kind_name(s.head)},
                       {"num_classes", s.num_classes},
                       {"fusion", s.fusion},
                       {"grid_h", s.grid_h},
                       {"grid_w", s.grid_w},
                       {"cell_feature_dim", s.cell_feature_dim},
                       {"bos_id", s.bos_id},
                       {"eos_id", s.eos_id}};
}

inline void from_json(const nlohmann::json& j, ModelSpec& s) {
    j.at("model_dim").get_to(s.model_dim);
    j.at("vocab_size").get_to(s.vocab_size);
    j.at("max_text_len").get_to(s.max_text_len);
    j.at("max_answer_len").get_to(s.max_answer_len);
    j.at("encoder_blocks").get_to(s.encoder_blocks);
    j.at("decoder_blocks").get_to(s.decoder_blocks);
    s.head = head_kind_from_name(j.at("head").get<std::string>());
    j.at("num_classes").get_to(s.num_classes);
    j.at("fusion").get_to(s.fusion);
    j.at("grid_h").get_to(s.grid_h);
    j.at("grid_w").get_to(s.grid_w);
    j.at("cell_feature_dim").get_to(s.cell_feature_dim);
    j.at("bos_id").get_to(s.bos_id);
    j.at("eos_id").get_to(s.eos_id);
}

/// Optimizer and data-stream position carried inside a checkpoint so a run
/// can resume bit-exactly. Moment vectors are flat over the model's
/// parameters in visit order.
struct TrainingState {
    std::int64_t step = 0;
    std::string data_rng_state;
    std::vector<float> adam_m;
    std::vector<float> adam_v;
};

namespace detail {

constexpr char kCheckpointMagic[8] = {'M', 'M', 'F', 'L', '0', '0', '0', '1'};

inline void write_u64_le(std::ostream& out, std::uint64_t v) {
    char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
    out.write(b, 8);
}

inline std::uint64_t read_u64_le(std::istream& in) {
    unsigned char b[8];
    if (!in.read(reinterpret_cast<char*>(b), 8)) throw IoError("checkpoint truncated");
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return v;
}

inline void write_f32_le(std::ostream& out, const float* data, std::size_t count) {
    for (std::size_t i = 0; i < count; ++i) {
        const auto bits = std::bit_cast<std::uint32_t>(data[i]);
        char b[4];
        for (int k = 0; k < 4; ++k) b[k] = static_cast<char>((bits >> (8 * k)) & 0xff);
        out.write(b, 4);
    }
}

inline void read_f32_le(std::istream& in, float* data, std::size_t count) {
    for (std::size_t i = 0; i < count; ++i) {
        unsigned char b[4];
        if (!in.read(reinterpret_cast<char*>(b), 4)) throw IoError("checkpoint truncated");
        std::uint32_t bits = 0;
        for (int k = 0; k < 4; ++k) bits |= static_cast<std::uint32_t>(b[k]) << (8 * k);
        data[i] = std::bit_cast<float>(bits);
    }
}

}  // namespace detail

/// Layout: 8-byte magic, u64 little-endian manifest length, JSON manifest,
/// then raw float32 little-endian parameter data in manifest order, followed
/// by the two optimizer moment blocks when training state is present.
inline void save_checkpoint(const std::string& path, Model<float>& model,
                            const TrainingState* training = nullptr) {
    nlohmann::json manifest;
    manifest["format_version"] = 1;
    manifest["spec"] = model.spec;
    nlohmann::json params = nlohmann::json::array();
    std::vector<Tensor<float>*> order;
    model.visit([&](const std::string& name, Tensor<float>& p) {
        params.push_back({{"name", name}, {"shape", p.shape}});
        order.push_back(&p);
    });
    manifest["params"] = std::move(params);
    std::size_t total = 0;
    for (auto* p : order) total += p->numel();
    if (training) {
        if (training->adam_m.size() != total || training->adam_v.size() != total)
            throw ConfigError("optimizer moment length does not match the parameter count");
        manifest["training"] = {{"step", training->step},
                                {"data_rng", training->data_rng_state}};
    }
    const std::string text = manifest.dump();
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open checkpoint for writing: " + path);
    out.write(detail::kCheckpointMagic, 8);
    detail::write_u64_le(out, text.size());
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (auto* p : order) detail::write_f32_le(out, p->values.data(), p->numel());
    if (training) {
        detail::write_f32_le(out, training->adam_m.data(), total);
        detail::write_f32_le(out, training->adam_v.data(), total);
    }
    if (!out) throw IoError("failed writing checkpoint: " + path);
}

/// True when the checkpoint carries optimizer state alongside the weights,
/// reading only the manifest.
inline bool checkpoint_has_training_state(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open checkpoint: " + path);
    char magic[8];
    if (!in.read(magic, 8) || !std::equal(magic, magic + 8, detail::kCheckpointMagic))
        throw IoError("not a checkpoint file: " + path);
    const std::uint64_t len = detail::read_u64_le(in);
    std::string text(len, '\0');
    if (!in.read(text.data(), static_cast<std::streamsize>(len)))
        throw IoError("checkpoint truncated");
    try {
        return nlohmann::json::parse(text).contains("training");
    } catch (const nlohmann::json::exception& e) {
        throw IoError(std::string("bad checkpoint manifest: ") + e.what());
    }
}

/// Rebuilds the model from the stored spec and overwrites every parameter
/// with the stored bytes. Pass `training` to also recover optimizer state;
/// it is an error to request state from a model-only checkpoint.
inline Model<float> load_checkpoint(const std::string& path, TrainingState* training = nullptr) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open checkpoint: " + path);
    char magic[8];
    if (!in.read(magic, 8) || !std::equal(magic, magic + 8, detail::kCheckpointMagic))
        throw IoError("not a checkpoint file: " + path);
    const std::uint64_t len = detail::read_u64_le(in);
    std::string text(len, '\0');
    if (!in.read(text.data(), static_cast<std::streamsize>(len)))
        throw IoError("checkpoint truncated");
    nlohmann::json manifest;
    try {
        manifest = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw IoError(std::string("bad checkpoint manifest: ") + e.what());
    }
    if (manifest.at("format_version").get<int>() != 1)
        throw IoError("unsupported checkpoint format version");
    ModelSpec spec = manifest.at("spec").get<ModelSpec>();
    RandomSource scratch(0);
    Model<float> model = Model<float>::init(spec, scratch);
    std::vector<Tensor<float>*> order;
    model.visit([&](const std::string&, Tensor<float>& p) { order.push_back(&p); });
    const auto& params = manifest.at("params");
    if (params.size() != order.size()) throw IoError("checkpoint parameter census mismatch");
    std::size_t total = 0;
    for (std::size_t i = 0; i < order.size(); ++i) {
        const auto shape = params[i].at("shape").get<std::vector<std::size_t>>();
        if (shape != order[i]->shape)
            throw IoError("checkpoint shape mismatch at " +
                          params[i].at("name").get<std::string>());
        detail::read_f32_le(in, order[i]->values.data(), order[i]->numel());
        total += order[i]->numel();
    }
    if (training) {
        if (!manifest.contains("training"))
            throw IoError("checkpoint holds no training state: " + path);
        training->step = manifest["training"].at("step").get<std::int64_t>();
        training->data_rng_state = manifest["training"].at("data_rng").get<std::string>();
        training->adam_m.resize(total);
        training->adam_v.resize(total);
        detail::read_f32_le(in, training->adam_m.data(), total);
        detail::read_f32_le(in, training->adam_v.data(), total);
    }
    return model;
}

}  // namespace fusionlab
