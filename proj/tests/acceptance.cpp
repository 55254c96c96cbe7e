// Acceptance gate: one standalone binary, one PASS/FAIL line per criterion,
// exit status 0 only when every criterion holds. No test framework on
// purpose, so the verdict lines stay stable and grep-friendly.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdlib>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <iterator>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "fusionlab/attention.hpp"
#include "fusionlab/costmodel.hpp"
#include "fusionlab/errors.hpp"
#include "fusionlab/fusion.hpp"
#include "fusionlab/harness.hpp"
#include "fusionlab/model.hpp"
#include "fusionlab/nn.hpp"
#include "fusionlab/rng.hpp"
#include "fusionlab/serialize.hpp"
#include "fusionlab/simd/kernels.hpp"
#include "fusionlab/tape.hpp"
#include "fusionlab/tasks.hpp"
#include "fusionlab/tensor.hpp"

namespace {

using namespace fusionlab;
namespace cost = fusionlab::cost;

constexpr FusionVariant kAllVariants[] = {
    FusionVariant::MergedAttention, FusionVariant::CompoundTokens,
    FusionVariant::CompoundTokensTAQ, FusionVariant::CoAttention,
    FusionVariant::CoTokenization};

struct Gate {
    std::size_t checks = 0;
    std::size_t failures = 0;
    std::vector<std::string> notes;

    void expect(bool ok, const std::string& what) {
        ++checks;
        if (!ok) {
            ++failures;
            if (failures <= 16) notes.push_back("FAILED: " + what);
        }
    }
    void info(const std::string& line) { notes.push_back(line); }
};

std::string fmt(const char* spec, ...) {
    char buf[512];
    va_list args;
    va_start(args, spec);
    std::vsnprintf(buf, sizeof(buf), spec, args);
    va_end(args);
    return buf;
}

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::uint64_t fnv1a64(const std::string& bytes) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

template <typename M>
std::int64_t census(M& module) {
    std::int64_t total = 0;
    module.visit("p", [&](const std::string&, Tensor<float>& p) {
        total += static_cast<std::int64_t>(p.numel());
    });
    return total;
}

// Central-difference gradient comparison. The builder reconstructs the loss
// graph from the current tensor values on every call, so perturbing a
// parameter in place and re-evaluating yields the numeric derivative.
void fd_compare(Gate& g, const std::string& ctx, const std::vector<Tensor<double>*>& params,
                const std::function<Var(Tape<double>&)>& build, double rel = 1e-3,
                double abs_floor = 1e-5, double step = 1e-5) {
    for (Tensor<double>* p : params) {
        p->requires_grad = true;
        p->ensure_grad();
        p->zero_grad();
    }
    Tape<double> tape;
    Var loss = build(tape);
    if (tape.value(loss).numel() != 1) {
        g.expect(false, ctx + ": loss is not a scalar");
        return;
    }
    tape.backward(loss);
    std::vector<std::vector<double>> analytic;
    analytic.reserve(params.size());
    for (Tensor<double>* p : params) analytic.push_back(*p->grad);
    const auto eval = [&]() {
        Tape<double> t;
        return t.value(build(t)).values[0];
    };
    std::size_t bad = 0;
    std::string first;
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        Tensor<double>* p = params[pi];
        for (std::size_t i = 0; i < p->numel(); ++i) {
            const double saved = p->values[i];
            p->values[i] = saved + step;
            const double up = eval();
            p->values[i] = saved - step;
            const double down = eval();
            p->values[i] = saved;
            const double numeric = (up - down) / (2.0 * step);
            const double exact = analytic[pi][i];
            const double tol = abs_floor + rel * std::max(std::abs(exact), std::abs(numeric));
            if (std::abs(exact - numeric) > tol) {
                ++bad;
                if (first.empty())
                    first = fmt("param %zu[%zu] analytic %.8g numeric %.8g", pi, i, exact, numeric);
            }
        }
    }
    g.expect(bad == 0,
             ctx + ": " + std::to_string(bad) + " gradient mismatches (first: " + first + ")");
}

// ---------------------------------------------------------------------------
// criterion 1: every tape op and every full model matches finite differences

ModelSpec grad_model_spec(FusionVariant variant) {
    ModelSpec spec;
    spec.model_dim = 8;
    spec.vocab_size = 11;
    spec.max_text_len = 8;
    spec.max_answer_len = 2;
    spec.encoder_blocks = 3;
    spec.decoder_blocks = 1;
    spec.grid_h = 1;
    spec.grid_w = 3;
    spec.cell_feature_dim = 5;
    spec.fusion.variant = variant;
    spec.fusion.model_dim = 8;
    spec.fusion.heads = 2;
    spec.fusion.co_attention_blocks = 1;
    spec.fusion.co_tok_rounds = 1;
    spec.fusion.co_tok_learned_tokens = 4;
    spec.fusion.co_tok_blocks_per_round = 1;
    return spec;
}

void criterion_gradients(Gate& g) {
    std::size_t ops_checked = 0;
    for (std::uint64_t seed : {11ull, 22ull, 33ull}) {
        RandomSource rng(seed);
        Tensor<double> a = uniform_tensor<double>({3, 4}, rng, -1.0, 1.0);
        Tensor<double> b = uniform_tensor<double>({3, 4}, rng, -1.0, 1.0);
        Tensor<double> right = uniform_tensor<double>({4, 2}, rng, -1.0, 1.0);
        Tensor<double> narrow = uniform_tensor<double>({2, 4}, rng, -1.0, 1.0);
        Tensor<double> cols2 = uniform_tensor<double>({3, 2}, rng, -1.0, 1.0);
        Tensor<double> square = uniform_tensor<double>({4, 4}, rng, -1.0, 1.0);
        Tensor<double> gamma = uniform_tensor<double>({4}, rng, 0.5, 1.5);
        Tensor<double> beta = uniform_tensor<double>({4}, rng, -0.5, 0.5);
        Tensor<double> bias = uniform_tensor<double>({4}, rng, -1.0, 1.0);
        Tensor<double> scalar = uniform_tensor<double>({1, 1}, rng, 0.5, 1.5);
        Tensor<double> table = uniform_tensor<double>({6, 4}, rng, -1.0, 1.0);
        Tensor<double> logits = uniform_tensor<double>({3, 5}, rng, -2.0, 2.0);
        Tensor<double> kinked = uniform_tensor<double>({3, 4}, rng, -1.0, 1.0);
        // keep relu inputs away from the kink so central differences are clean
        for (double& v : kinked.values)
            if (std::abs(v) < 0.15) v += v >= 0.0 ? 0.2 : -0.2;

        Tensor<double> w34 = uniform_tensor<double>({3, 4}, rng, -1.0, 1.0);
        Tensor<double> w32 = uniform_tensor<double>({3, 2}, rng, -1.0, 1.0);
        Tensor<double> w43 = uniform_tensor<double>({4, 3}, rng, -1.0, 1.0);
        Tensor<double> w26 = uniform_tensor<double>({2, 6}, rng, -1.0, 1.0);
        Tensor<double> w54 = uniform_tensor<double>({5, 4}, rng, -1.0, 1.0);
        Tensor<double> w36 = uniform_tensor<double>({3, 6}, rng, -1.0, 1.0);
        Tensor<double> w24 = uniform_tensor<double>({2, 4}, rng, -1.0, 1.0);
        Tensor<double> w44 = uniform_tensor<double>({4, 4}, rng, -1.0, 1.0);
        Tensor<double> w14 = uniform_tensor<double>({1, 4}, rng, -1.0, 1.0);

        // nonuniform weighting turns each op output into a scalar loss
        const auto through = [](Tape<double>& t, Var y, Tensor<double>& w) {
            return t.sum_all(t.mul(y, t.leaf(w)));
        };
        const std::string tag = " (seed " + std::to_string(seed) + ")";
        const auto check = [&](const std::string& name, const std::vector<Tensor<double>*>& ps,
                               const std::function<Var(Tape<double>&)>& build) {
            fd_compare(g, name + tag, ps, build);
            ++ops_checked;
        };

        check("add", {&a, &b},
              [&](Tape<double>& t) { return through(t, t.add(t.param(a), t.param(b)), w34); });
        check("sub", {&a, &b},
              [&](Tape<double>& t) { return through(t, t.sub(t.param(a), t.param(b)), w34); });
        check("mul", {&a, &b},
              [&](Tape<double>& t) { return through(t, t.mul(t.param(a), t.param(b)), w34); });
        check("scale", {&a},
              [&](Tape<double>& t) { return through(t, t.scale(t.param(a), 1.7), w34); });
        check("scale_by", {&a, &scalar}, [&](Tape<double>& t) {
            return through(t, t.scale_by(t.param(a), t.param(scalar)), w34);
        });
        check("matmul", {&a, &right}, [&](Tape<double>& t) {
            return through(t, t.matmul(t.param(a), t.param(right)), w32);
        });
        check("transpose", {&a},
              [&](Tape<double>& t) { return through(t, t.transpose(t.param(a)), w43); });
        check("reshape", {&a},
              [&](Tape<double>& t) { return through(t, t.reshape(t.param(a), {2, 6}), w26); });
        check("concat_rows", {&a, &narrow}, [&](Tape<double>& t) {
            return through(t, t.concat_rows(t.param(a), t.param(narrow)), w54);
        });
        check("concat_cols", {&a, &cols2}, [&](Tape<double>& t) {
            return through(t, t.concat_cols(t.param(a), t.param(cols2)), w36);
        });
        check("slice_rows", {&a},
              [&](Tape<double>& t) { return through(t, t.slice_rows(t.param(a), 1, 3), w24); });
        check("slice_cols", {&a},
              [&](Tape<double>& t) { return through(t, t.slice_cols(t.param(a), 1, 3), w32); });
        check("softmax_rows", {&a},
              [&](Tape<double>& t) { return through(t, t.softmax_rows(t.param(a)), w34); });
        check("causal_softmax_rows", {&square}, [&](Tape<double>& t) {
            return through(t, t.causal_softmax_rows(t.param(square)), w44);
        });
        check("layernorm", {&a, &gamma, &beta}, [&](Tape<double>& t) {
            return through(t, t.layernorm(t.param(a), t.param(gamma), t.param(beta), 1e-5), w34);
        });
        check("bias_add", {&a, &bias}, [&](Tape<double>& t) {
            return through(t, t.bias_add(t.param(a), t.param(bias)), w34);
        });
        check("relu", {&kinked},
              [&](Tape<double>& t) { return through(t, t.relu(t.param(kinked)), w34); });
        check("gelu", {&a}, [&](Tape<double>& t) { return through(t, t.gelu(t.param(a)), w34); });
        check("embedding", {&table}, [&](Tape<double>& t) {
            return through(t, t.embedding(t.param(table), {0, 3, 5, 3}), w44);
        });
        check("mean_rows", {&a},
              [&](Tape<double>& t) { return through(t, t.mean_rows(t.param(a)), w14); });
        check("sum_all", {&a}, [&](Tape<double>& t) { return t.sum_all(t.param(a)); });
        check("cross_entropy_rows", {&logits}, [&](Tape<double>& t) {
            return t.cross_entropy_rows(t.param(logits), {1, 4, 0});
        });
        check("dropout", {&a}, [&](Tape<double>& t) {
            RandomSource mask_rng(991);  // same mask on every rebuild
            return through(t, t.dropout(t.param(a), 0.4, mask_rng), w34);
        });
    }
    g.info(fmt("op-level checks: %zu op/seed combinations", ops_checked));

    std::size_t models_checked = 0;
    for (std::uint64_t seed : {11ull, 22ull, 33ull, 44ull, 55ull}) {
        for (FusionVariant variant : kAllVariants) {
            RandomSource rng(seed);
            Model<double> m = Model<double>::init(grad_model_spec(variant), rng);
            std::vector<Tensor<double>*> params;
            m.visit([&](const std::string&, Tensor<double>& p) { params.push_back(&p); });
            RandomSource img_rng(seed + 100);
            Tensor<double> img = uniform_tensor<double>({3, 5}, img_rng, -1.0, 1.0);
            fd_compare(g,
                       fusion_variant_name(variant) + " end-to-end (seed " +
                           std::to_string(seed) + ")",
                       params,
                       [&](Tape<double>& t) { return m.forward_generative(t, img, {2, 3}, {4}); });
            ++models_checked;
        }
    }
    g.info(fmt("end-to-end checks: %zu variant/seed models, every parameter perturbed",
               models_checked));
}

// ---------------------------------------------------------------------------
// criterion 2: fused sequence shapes

void criterion_shapes(Gate& g) {
    RandomSource rng(7);
    const auto out_shape = [&](const FusionSpec& fs, std::size_t n, std::size_t m) {
        FusionModule<float> mod = FusionModule<float>::init(fs, rng);
        Tape<float> t;
        TokenSeq vision{t.leaf(uniform_tensor<float>({n, fs.model_dim}, rng, -1.0, 1.0)),
                        Modality::Vision};
        TokenSeq text{t.leaf(uniform_tensor<float>({m, fs.model_dim}, rng, -1.0, 1.0)),
                      Modality::Text};
        const Tensor<float>& out = t.value(mod.apply(t, vision, text).tokens);
        return std::pair<std::size_t, std::size_t>(out.rows(), out.cols());
    };

    FusionSpec wide;
    wide.model_dim = 768;
    wide.heads = 12;
    wide.variant = FusionVariant::CompoundTokens;
    g.expect(out_shape(wide, 49, 32) == std::pair<std::size_t, std::size_t>(81, 768),
             "compound fusion of 49 vision + 32 text tokens at width 768 yields 81 x 768");
    wide.variant = FusionVariant::CompoundTokensTAQ;
    g.expect(out_shape(wide, 49, 32) == std::pair<std::size_t, std::size_t>(32, 768),
             "text-as-query fusion of 49 + 32 tokens yields 32 x 768");
    wide.variant = FusionVariant::MergedAttention;
    g.expect(out_shape(wide, 49, 32) == std::pair<std::size_t, std::size_t>(81, 768),
             "merged attention of 49 + 32 tokens yields 81 x 768");

    std::size_t sweeps = 0;
    for (int it = 0; it < 20; ++it) {
        const std::size_t n = rng.uniform_int(1, 65);
        const std::size_t m = rng.uniform_int(1, 33);
        const std::size_t d = 2 * rng.uniform_int(2, 33);
        for (FusionVariant variant : kAllVariants) {
            FusionSpec fs;
            fs.variant = variant;
            fs.model_dim = d;
            fs.heads = 1;
            fs.co_attention_blocks = 1;
            fs.co_tok_rounds = 1;
            fs.co_tok_learned_tokens = 4;
            fs.co_tok_blocks_per_round = 1;
            const auto [rows, dims] = out_shape(fs, n, m);
            const auto expected = static_cast<std::size_t>(
                cost::fused_tokens(fs, static_cast<std::int64_t>(n), static_cast<std::int64_t>(m)));
            g.expect(rows == expected && dims == d,
                     fmt("%s n=%zu m=%zu d=%zu: got %zu x %zu, expected %zu x %zu",
                         fusion_variant_name(variant).c_str(), n, m, d, rows, dims, expected, d));
            ++sweeps;
        }
    }
    g.info(fmt("randomized shape sweeps: %zu variant/geometry combinations", sweeps));
}

// ---------------------------------------------------------------------------
// criterion 3: combine ops differentiate and share one budget

ModelSpec reference_scale_spec(FusionVariant variant) {
    ModelSpec spec;
    spec.model_dim = 768;
    spec.vocab_size = 32128;
    spec.max_text_len = 32;
    spec.max_answer_len = 8;
    spec.decoder_blocks = 12;
    spec.grid_h = 7;
    spec.grid_w = 7;
    spec.cell_feature_dim = 64;
    spec.fusion.model_dim = 768;
    spec.fusion.heads = 12;
    spec.fusion.variant = variant;
    std::size_t budget = 12;
    if (variant == FusionVariant::CompoundTokens) budget = 14;
    if (variant == FusionVariant::CompoundTokensTAQ) budget = 13;
    spec.encoder_blocks = budget;
    return spec;
}

void criterion_combine_ops(Gate& g) {
    const CombineOp ops[] = {CombineOp::ChannelConcat, CombineOp::Weighting, CombineOp::Summation,
                             CombineOp::ElementwiseProduct};
    for (std::uint64_t seed : {3ull, 9ull}) {
        for (CombineOp op : ops) {
            FusionSpec fs;
            fs.variant = FusionVariant::CompoundTokens;
            fs.combine_op = op;
            fs.model_dim = 8;
            fs.heads = 2;
            RandomSource rng(seed);
            FusionModule<double> mod = FusionModule<double>::init(fs, rng);
            std::vector<Tensor<double>*> params;
            mod.visit("fusion",
                      [&](const std::string&, Tensor<double>& p) { params.push_back(&p); });
            RandomSource data(seed + 50);
            Tensor<double> vt = uniform_tensor<double>({3, 8}, data, -1.0, 1.0);
            Tensor<double> tt = uniform_tensor<double>({2, 8}, data, -1.0, 1.0);
            Tensor<double> w = uniform_tensor<double>({5, 8}, data, -1.0, 1.0);
            fd_compare(g, combine_op_name(op) + " combine (seed " + std::to_string(seed) + ")",
                       params, [&](Tape<double>& t) {
                           TokenSeq vision{t.leaf(vt), Modality::Vision};
                           TokenSeq text{t.leaf(tt), Modality::Text};
                           return t.sum_all(t.mul(mod.apply(t, vision, text).tokens, t.leaf(w)));
                       });
        }
    }

    std::int64_t min_flops = 0, max_flops = 0, min_params = 0, max_params = 0;
    bool first = true;
    for (CombineOp op : ops) {
        ModelSpec spec = reference_scale_spec(FusionVariant::CompoundTokens);
        spec.fusion.combine_op = op;
        const cost::CostReport report = cost::count_model(spec);
        const std::int64_t f = report.total_flops();
        const std::int64_t p = report.total_params();
        g.info(fmt("%-19s total flops %14lld  params %10lld", combine_op_name(op).c_str(),
                   static_cast<long long>(f), static_cast<long long>(p)));
        if (first) {
            min_flops = max_flops = f;
            min_params = max_params = p;
            first = false;
        } else {
            min_flops = std::min(min_flops, f);
            max_flops = std::max(max_flops, f);
            min_params = std::min(min_params, p);
            max_params = std::max(max_params, p);
        }
    }
    const double flop_spread = static_cast<double>(max_flops) / static_cast<double>(min_flops);
    const double param_spread = static_cast<double>(max_params) / static_cast<double>(min_params);
    g.expect(flop_spread < 1.01, fmt("combine-op flop spread %.5f exceeds 1%%", flop_spread));
    g.expect(param_spread < 1.01, fmt("combine-op param spread %.5f exceeds 1%%", param_spread));
    g.info(fmt("flop spread %.5fx, param spread %.5fx across the four combine ops", flop_spread,
               param_spread));
}

// ---------------------------------------------------------------------------
// criterion 4: analytic cost model equals instrumented execution

FusionSpec small_fusion_spec(FusionVariant variant) {
    FusionSpec fs;
    fs.variant = variant;
    fs.model_dim = 8;
    fs.heads = 2;
    fs.co_attention_blocks = 2;
    fs.co_tok_rounds = 1;
    fs.co_tok_learned_tokens = 4;
    fs.co_tok_blocks_per_round = 1;
    return fs;
}

ModelSpec tiny_model_spec(FusionVariant variant, HeadKind head = HeadKind::Decoder) {
    ModelSpec spec;
    spec.model_dim = 8;
    spec.vocab_size = 11;
    spec.max_text_len = 3;
    spec.max_answer_len = 2;
    spec.encoder_blocks = 3;
    spec.decoder_blocks = 1;
    spec.head = head;
    spec.num_classes = head == HeadKind::LinearClassifier ? 4 : 0;
    spec.grid_h = 2;
    spec.grid_w = 2;
    spec.cell_feature_dim = 5;
    spec.fusion = small_fusion_spec(variant);
    return spec;
}

void criterion_cost_oracle(Gate& g) {
    RandomSource rng(17);

    for (bool with_bias : {true, false}) {
        LinearParams<float> lin = LinearParams<float>::init(5, 7, rng, with_bias);
        Tape<float> t;
        lin.apply(t, t.leaf(uniform_tensor<float>({3, 5}, rng, -1.0, 1.0)));
        const cost::Cost c = cost::count_linear(5, 7, 3, with_bias);
        g.expect(t.flops() == c.flops, fmt("linear flops (bias=%d)", int(with_bias)));
        g.expect(census(lin) == c.params, fmt("linear params (bias=%d)", int(with_bias)));
    }

    for (std::size_t heads : {std::size_t(1), std::size_t(2), std::size_t(4)}) {
        {
            MultiHeadParams<float> p = MultiHeadParams<float>::init(8, heads, rng);
            Tape<float> t;
            Var x = t.leaf(uniform_tensor<float>({3, 8}, rng, -1.0, 1.0));
            multi_head_attention(t, p, x, x, AttentionKind::SelfAttention);
            const cost::Cost c = cost::count_attention(3, 3, 8, static_cast<std::int64_t>(heads));
            g.expect(t.flops() == c.flops, fmt("self-attention flops (heads=%zu)", heads));
            g.expect(census(p) == c.params, fmt("attention params (heads=%zu)", heads));
        }
        {
            MultiHeadParams<float> p = MultiHeadParams<float>::init(8, heads, rng);
            Tape<float> t;
            Var q = t.leaf(uniform_tensor<float>({3, 8}, rng, -1.0, 1.0));
            Var ctx = t.leaf(uniform_tensor<float>({5, 8}, rng, -1.0, 1.0));
            multi_head_attention(t, p, q, ctx, AttentionKind::CrossAttention);
            const cost::Cost c = cost::count_attention(3, 5, 8, static_cast<std::int64_t>(heads));
            g.expect(t.flops() == c.flops, fmt("cross-attention flops (heads=%zu)", heads));
        }
    }

    {
        TransformerBlockParams<float> p = TransformerBlockParams<float>::init(8, 2, rng);
        Tape<float> t;
        transformer_block(t, p, t.leaf(uniform_tensor<float>({4, 8}, rng, -1.0, 1.0)));
        const cost::Cost c = cost::count_transformer_block(4, 8, 2);
        g.expect(t.flops() == c.flops, "transformer block flops");
        g.expect(census(p) == c.params, "transformer block params");
    }
    {
        CrossBlockParams<float> p = CrossBlockParams<float>::init(8, 2, rng);
        Tape<float> t;
        Var x = t.leaf(uniform_tensor<float>({3, 8}, rng, -1.0, 1.0));
        Var ctx = t.leaf(uniform_tensor<float>({5, 8}, rng, -1.0, 1.0));
        cross_attention_block(t, p, x, ctx);
        const cost::Cost c = cost::count_cross_block(3, 5, 8, 2);
        g.expect(t.flops() == c.flops, "cross block flops");
        g.expect(census(p) == c.params, "cross block params");
    }
    {
        DecoderBlockParams<float> p = DecoderBlockParams<float>::init(8, 2, rng);
        Tape<float> t;
        Var x = t.leaf(uniform_tensor<float>({3, 8}, rng, -1.0, 1.0));
        Var mem = t.leaf(uniform_tensor<float>({5, 8}, rng, -1.0, 1.0));
        decoder_block(t, p, x, mem);
        const cost::Cost c = cost::count_decoder_block(3, 5, 8, 2);
        g.expect(t.flops() == c.flops, "decoder block flops");
        g.expect(census(p) == c.params, "decoder block params");
    }

    for (FusionVariant variant : kAllVariants) {
        const FusionSpec fs = small_fusion_spec(variant);
        FusionModule<float> mod = FusionModule<float>::init(fs, rng);
        Tape<float> t;
        TokenSeq vision{t.leaf(uniform_tensor<float>({3, 8}, rng, -1.0, 1.0)), Modality::Vision};
        TokenSeq text{t.leaf(uniform_tensor<float>({2, 8}, rng, -1.0, 1.0)), Modality::Text};
        TokenSeq fused = mod.apply(t, vision, text);
        const cost::Cost c = cost::count_fusion(fs, 3, 2);
        g.expect(t.flops() == c.flops, fusion_variant_name(variant) + " fusion-stage flops");
        g.expect(census(mod) == c.params, fusion_variant_name(variant) + " fusion-stage params");
        g.expect(t.value(fused.tokens).rows() ==
                     static_cast<std::size_t>(cost::fused_tokens(fs, 3, 2)),
                 fusion_variant_name(variant) + " fused token count");
    }

    for (FusionVariant variant : kAllVariants) {
        const ModelSpec spec = tiny_model_spec(variant);
        Model<float> m = Model<float>::init(spec, rng);
        const cost::CostReport report = cost::count_model(spec);
        g.expect(report.total_params() == static_cast<std::int64_t>(m.parameter_count()),
                 fusion_variant_name(variant) + " model params");
        Tape<float> t;
        Tensor<float> img = uniform_tensor<float>({4, 5}, rng, -1.0, 1.0);
        Var memory = m.encode_fused(t, img, {2, 3, 4});  // question at max_text_len
        m.answer_logits(t, memory, {5, 6}, {});          // full answer window
        g.expect(t.flops() == report.total_flops(),
                 fusion_variant_name(variant) + " full-model flops");
    }
    {
        const ModelSpec spec =
            tiny_model_spec(FusionVariant::CompoundTokens, HeadKind::LinearClassifier);
        Model<float> m = Model<float>::init(spec, rng);
        const cost::CostReport report = cost::count_model(spec);
        g.expect(report.total_params() == static_cast<std::int64_t>(m.parameter_count()),
                 "classifier model params");
        Tape<float> t;
        Tensor<float> img = uniform_tensor<float>({4, 5}, rng, -1.0, 1.0);
        m.forward_classify(t, img, {2, 3, 4});
        g.expect(t.flops() == report.total_flops(), "classifier full-model flops");
    }

    // fusion stage + 12 shared blocks at width 768: text-as-query shrinks the
    // sequence and lands cheapest, compound pays for its exchange on top of
    // the merged sequence
    const auto stage_flops = [](FusionVariant variant) {
        FusionSpec fs;
        fs.variant = variant;
        fs.model_dim = 768;
        fs.heads = 12;
        std::int64_t total = cost::count_fusion(fs, 49, 32).flops;
        const std::int64_t ft = cost::fused_tokens(fs, 49, 32);
        for (int b = 0; b < 12; ++b) total += cost::count_transformer_block(ft, 768, 12).flops;
        return total;
    };
    const std::int64_t taq = stage_flops(FusionVariant::CompoundTokensTAQ);
    const std::int64_t merged = stage_flops(FusionVariant::MergedAttention);
    const std::int64_t compound = stage_flops(FusionVariant::CompoundTokens);
    g.expect(taq < merged && merged < compound,
             fmt("stage ordering violated: taq %lld, merged %lld, compound %lld",
                 static_cast<long long>(taq), static_cast<long long>(merged),
                 static_cast<long long>(compound)));
    g.info(fmt("stage flops at width 768: text-as-query %lld < merged %lld < compound %lld",
               static_cast<long long>(taq), static_cast<long long>(merged),
               static_cast<long long>(compound)));

    const std::int64_t merged_total =
        cost::count_model(reference_scale_spec(FusionVariant::MergedAttention)).total_flops();
    const std::int64_t compound_total =
        cost::count_model(reference_scale_spec(FusionVariant::CompoundTokens)).total_flops();
    const double ratio = static_cast<double>(compound_total) / static_cast<double>(merged_total);
    g.expect(ratio > 1.0 && ratio < 1.05,
             fmt("budget-matched compound/merged flop ratio %.4f outside (1.0, 1.05)", ratio));
    g.info(fmt("budget-matched model totals: compound/merged flop ratio %.4f", ratio));
}

// ---------------------------------------------------------------------------
// criterion 5: the shared encoder cost is invariant to where fusion happens

void criterion_token_invariance(Gate& g) {
    const auto check_pair = [&](std::size_t model_dim, std::size_t grid, std::size_t text_len,
                                std::size_t heads, std::size_t depth) {
        ModelSpec merged;
        merged.model_dim = model_dim;
        merged.vocab_size = 200;
        merged.max_text_len = text_len;
        merged.max_answer_len = 4;
        merged.decoder_blocks = 2;
        merged.grid_h = grid;
        merged.grid_w = grid;
        merged.cell_feature_dim = 9;
        merged.fusion.model_dim = model_dim;
        merged.fusion.heads = heads;
        merged.fusion.variant = FusionVariant::MergedAttention;
        merged.encoder_blocks = depth;

        ModelSpec compound = merged;
        compound.fusion.variant = FusionVariant::CompoundTokens;
        compound.encoder_blocks = depth + 2;  // fusion stage absorbs two blocks

        g.expect(merged.resolved_encoder_blocks() == depth &&
                     compound.resolved_encoder_blocks() == depth,
                 fmt("resolved encoder depth mismatch at depth %zu", depth));
        const cost::CostReport a = cost::count_model(merged);
        const cost::CostReport b = cost::count_model(compound);
        g.expect(a.flops_of("encoder") == b.flops_of("encoder"),
                 fmt("shared-encoder flops differ at d=%zu grid=%zux%zu depth=%zu", model_dim,
                     grid, grid, depth));
        g.expect(a.params_of("encoder") == b.params_of("encoder"),
                 fmt("shared-encoder params differ at depth %zu", depth));
        const std::int64_t n = static_cast<std::int64_t>(grid * grid);
        const std::int64_t m = static_cast<std::int64_t>(text_len);
        g.expect(cost::fused_tokens(merged.fusion, n, m) ==
                     cost::fused_tokens(compound.fusion, n, m),
                 "fused sequence lengths differ between merged and compound");
        g.info(fmt("d=%zu grid=%zux%zu depth=%zu: shared-encoder flops %lld on both sides",
                   model_dim, grid, grid, depth,
                   static_cast<long long>(a.flops_of("encoder"))));
    };

    for (std::size_t depth : {std::size_t(1), std::size_t(2), std::size_t(12)})
        check_pair(768, 7, 32, 12, depth);
    for (std::size_t depth : {std::size_t(1), std::size_t(2)}) check_pair(64, 3, 16, 4, depth);
}

// ---------------------------------------------------------------------------
// criterion 6: every variant trains to memorization; runs reproduce exactly

ExperimentConfig memorization_config(FusionVariant variant, const std::string& out_dir) {
    ExperimentConfig cfg;
    cfg.task.kind = TaskKind::Attribute;
    cfg.task.grid_h = 2;
    cfg.task.grid_w = 2;
    cfg.task.num_shapes = 2;
    cfg.task.num_colors = 2;
    cfg.model.model_dim = 32;
    cfg.model.fusion.model_dim = 32;
    cfg.model.fusion.heads = 4;
    cfg.model.fusion.variant = variant;
    cfg.model.fusion.co_attention_blocks = 2;
    cfg.model.fusion.co_tok_rounds = 2;
    cfg.model.fusion.co_tok_learned_tokens = 8;
    cfg.model.fusion.co_tok_blocks_per_round = 1;
    cfg.model.encoder_blocks = 3;
    cfg.model.decoder_blocks = 1;
    cfg.model.max_text_len = 16;
    cfg.model.max_answer_len = 2;
    cfg.optim.base_lr = 3e-3;
    cfg.optim.warmup_steps = 30;
    cfg.optim.cosine_cycle_steps = 10000;
    cfg.optim.total_steps = 2000;
    cfg.optim.batch_size = 8;
    cfg.train_size = 8;
    cfg.eval_size = 0;
    cfg.eval_on_train = true;
    cfg.eval_interval = 25;
    cfg.early_stop_exact_match = 1.0;
    cfg.seed = 5;
    cfg.out_dir = out_dir;
    return cfg;
}

void criterion_training_sanity(Gate& g) {
    const std::string root = "acceptance_out";
    std::filesystem::create_directories(root);

    for (FusionVariant variant : kAllVariants) {
        const std::string name = fusion_variant_name(variant);
        TrainResult r = train(memorization_config(variant, root + "/c6_" + name));
        g.expect(r.final_eval.exact_match_accuracy == 1.0,
                 name + " failed to memorize 8 examples within 2000 steps (exact match " +
                     std::to_string(r.final_eval.exact_match_accuracy) + ")");
        g.info(fmt("%-22s memorized 8/8 after %zu steps", name.c_str(), r.steps_run));
    }

    // identical configs on the scalar backend must produce identical bytes
    simd::select_backend(simd::Backend::Scalar);
    ExperimentConfig det = memorization_config(FusionVariant::MergedAttention, root + "/c6_det_a");
    det.optim.total_steps = 60;
    det.early_stop_exact_match = 0.0;
    det.eval_interval = 30;
    det.deterministic = true;
    TrainResult run_a = train(det);
    det.out_dir = root + "/c6_det_b";
    TrainResult run_b = train(det);
    simd::select_best();

    const std::uint64_t ckpt_a = fnv1a64(slurp(run_a.checkpoint_path));
    const std::uint64_t ckpt_b = fnv1a64(slurp(run_b.checkpoint_path));
    const std::uint64_t metrics_a = fnv1a64(slurp(run_a.metrics_path));
    const std::uint64_t metrics_b = fnv1a64(slurp(run_b.metrics_path));
    g.expect(ckpt_a == ckpt_b, fmt("checkpoint bytes diverged: %016llx vs %016llx",
                                   static_cast<unsigned long long>(ckpt_a),
                                   static_cast<unsigned long long>(ckpt_b)));
    g.expect(metrics_a == metrics_b, "metrics bytes diverged between identical runs");
    g.info(fmt("deterministic rerun checksums: checkpoint %016llx, metrics %016llx",
               static_cast<unsigned long long>(ckpt_a),
               static_cast<unsigned long long>(metrics_a)));
}

// ---------------------------------------------------------------------------
// criterion 7: fused variants against a text-only baseline at matched depth

ExperimentConfig comparison_config(FusionVariant variant, std::uint64_t seed,
                                   const std::string& out_dir) {
    ExperimentConfig cfg;
    cfg.task.kind = TaskKind::Attribute;
    cfg.task.grid_h = 4;
    cfg.task.grid_w = 4;
    cfg.task.num_shapes = 8;
    cfg.task.num_colors = 8;
    cfg.task.feature_noise = 0.25;
    cfg.model.model_dim = 48;
    cfg.model.fusion.model_dim = 48;
    cfg.model.fusion.heads = 4;
    cfg.model.fusion.variant = variant;
    // compound spends two budget blocks inside the fusion stage; granting it
    // those blocks back equalizes the shared-encoder depth at two
    cfg.model.encoder_blocks = variant == FusionVariant::CompoundTokens ? 4 : 2;
    cfg.model.decoder_blocks = 2;
    cfg.model.max_text_len = 16;
    cfg.model.max_answer_len = 4;
    cfg.optim.base_lr = 1e-3;
    cfg.optim.warmup_steps = 200;
    cfg.optim.cosine_cycle_steps = 20000;
    cfg.optim.batch_size = 16;
    cfg.optim.total_steps = 5000;
    cfg.eval_interval = 1000;
    cfg.train_size = 8192;
    cfg.eval_size = 200;
    cfg.seed = seed;
    cfg.out_dir = out_dir;
    return cfg;
}

void criterion_comparison(Gate& g) {
    const std::string root = "acceptance_out";
    std::filesystem::create_directories(root);
    const std::uint64_t seeds[] = {1, 2, 3};

    struct Arm {
        std::string label;
        FusionVariant variant;
        bool zero_vision;
        std::int64_t flops = 0;
        std::vector<double> em;
    };
    std::vector<Arm> arms = {
        {"merged_attention", FusionVariant::MergedAttention, false, 0, {}},
        {"compound_tokens", FusionVariant::CompoundTokens, false, 0, {}},
        {"text_only", FusionVariant::MergedAttention, true, 0, {}},
    };

    for (Arm& arm : arms) {
        for (std::uint64_t seed : seeds) {
            if (arm.zero_vision && seed != 1) continue;  // one baseline run suffices
            ExperimentConfig cfg = comparison_config(
                arm.variant, seed, root + "/c7_" + arm.label + "_s" + std::to_string(seed));
            cfg.zero_vision = arm.zero_vision;
            ExperimentConfig resolved = cfg;
            resolved.finalize();
            arm.flops = cost::count_model(resolved.model).total_flops();
            TrainResult r = train(cfg);
            g.expect(r.steps_run == 5000, arm.label + " run did not complete 5000 steps");
            arm.em.push_back(r.final_eval.exact_match_accuracy);
        }
    }

    const auto mean_of = [](const std::vector<double>& xs) {
        double s = 0.0;
        for (double x : xs) s += x;
        return s / static_cast<double>(xs.size());
    };
    const auto stddev_of = [&](const std::vector<double>& xs) {
        if (xs.size() < 2) return 0.0;
        const double m = mean_of(xs);
        double s = 0.0;
        for (double x : xs) s += (x - m) * (x - m);
        return std::sqrt(s / static_cast<double>(xs.size() - 1));
    };

    std::ostringstream table;
    table << fmt("%-18s %14s %8s %8s %8s %8s %8s\n", "arm", "flops", "em(s1)", "em(s2)",
                 "em(s3)", "mean", "std");
    for (const Arm& arm : arms) {
        std::string cells;
        for (std::size_t i = 0; i < 3; ++i)
            cells += i < arm.em.size() ? fmt(" %8.4f", arm.em[i]) : fmt(" %8s", "-");
        table << fmt("%-18s %14lld%s %8.4f %8.4f\n", arm.label.c_str(),
                     static_cast<long long>(arm.flops), cells.c_str(), mean_of(arm.em),
                     stddev_of(arm.em));
    }
    {
        std::ofstream out(root + "/c7_comparison.txt", std::ios::binary);
        out << table.str();
    }
    std::istringstream lines(table.str());
    for (std::string line; std::getline(lines, line);) g.info(line);

    const double text_em = arms[2].em.at(0);
    const double merged_mean = mean_of(arms[0].em);
    const double compound_mean = mean_of(arms[1].em);
    // question wording reveals whether a shape or a color is asked, so a blind
    // model can reach one eighth here but no further without the image
    g.expect(text_em >= 0.05 && text_em <= 0.25,
             fmt("text-only exact match %.4f is not at chance (expected about 0.125)", text_em));
    g.expect(merged_mean >= text_em + 0.10,
             fmt("merged attention %.4f does not beat the text-only baseline %.4f", merged_mean,
                 text_em));
    g.expect(compound_mean >= text_em + 0.10,
             fmt("compound tokens %.4f does not beat the text-only baseline %.4f", compound_mean,
                 text_em));
    g.info(fmt("compound vs merged mean exact-match delta: %+.4f (per-seed detail above)",
               compound_mean - merged_mean));
}

// ---------------------------------------------------------------------------
// criterion 8: evaluation metrics are exact

void criterion_metrics(Gate& g) {
    for (int k = 0; k <= 10; ++k) {
        std::vector<std::string> refs;
        for (int i = 0; i < 10; ++i) refs.push_back(i < k ? "red" : "blue");
        const double got = vqa_accuracy("red", refs);
        const double want = std::min(static_cast<double>(k) / 3.0, 1.0);
        g.expect(got == want, fmt("soft accuracy with %d matches: got %.6f want %.6f", k, got, want));
    }

    for (TaskKind kind : {TaskKind::Attribute, TaskKind::SpatialRelation,
                          TaskKind::Entailment3Way, TaskKind::Counting}) {
        TaskConfig tc;
        tc.kind = kind;
        Dataset ds = generate_dataset(23, 200, tc);
        std::map<int, std::vector<int>> class_tokens;
        bool consistent = true;
        for (const QAExample& ex : ds.examples) {
            auto it = class_tokens.find(ex.answer_class);
            if (it == class_tokens.end())
                class_tokens[ex.answer_class] = ex.answer_ids;
            else if (it->second != ex.answer_ids)
                consistent = false;
        }
        g.expect(consistent, task_kind_name(kind) + ": one class maps to several answer words");
        std::size_t pairs = 0, agree = 0;
        for (const QAExample& ex : ds.examples) {
            for (const auto& [cls, ids] : class_tokens) {
                const bool match = exact_match(ids, ex.answer_ids) == 1;
                const bool same_class = cls == ex.answer_class;
                agree += match == same_class;
                ++pairs;
            }
        }
        g.expect(agree == pairs,
                 fmt("%s: exact match and class labels disagree on %zu of %zu pairs",
                     task_kind_name(kind).c_str(), pairs - agree, pairs));
        g.info(fmt("%-16s %zu class/example pairs agree across %zu classes",
                   task_kind_name(kind).c_str(), pairs, class_tokens.size()));
    }

    TaskConfig ec;
    ec.kind = TaskKind::Entailment3Way;
    Vocab vocab = Vocab::build(ec);
    Dataset ds = generate_dataset(17, 500, ec);
    ModelSpec spec;
    spec.model_dim = 32;
    spec.vocab_size = vocab.size();
    spec.max_text_len = 16;
    spec.max_answer_len = 4;
    spec.encoder_blocks = 1;
    spec.decoder_blocks = 1;
    spec.head = HeadKind::LinearClassifier;
    spec.num_classes = ec.answer_class_count();
    spec.grid_h = ec.grid_h;
    spec.grid_w = ec.grid_w;
    spec.cell_feature_dim = ec.feature_dim();
    spec.fusion.variant = FusionVariant::MergedAttention;
    spec.fusion.model_dim = 32;
    spec.fusion.heads = 4;
    RandomSource rng(4242);
    Model<float> model = Model<float>::init(spec, rng);
    const EvalResult r = evaluate(model, ds);
    g.expect(std::abs(r.exact_match_accuracy - 1.0 / 3.0) <= 0.1,
             fmt("untrained 3-way classifier scored %.4f, expected about 0.333",
                 r.exact_match_accuracy));
    g.info(fmt("untrained 3-way classifier accuracy %.4f over 500 balanced examples",
               r.exact_match_accuracy));
}

// ---------------------------------------------------------------------------
// criterion 9: head swaps keep the trunk bit-identical; warm starts train

void criterion_head_swap(Gate& g) {
    for (std::uint64_t seed : {1ull, 2ull, 3ull}) {
        ModelSpec spec;
        spec.model_dim = 32;
        spec.vocab_size = 19;
        spec.max_text_len = 16;
        spec.max_answer_len = 4;
        spec.encoder_blocks = 2;
        spec.decoder_blocks = 1;
        spec.grid_h = 2;
        spec.grid_w = 2;
        spec.cell_feature_dim = 5;
        spec.fusion.variant = FusionVariant::MergedAttention;
        spec.fusion.model_dim = 32;
        spec.fusion.heads = 4;
        RandomSource rng(seed);
        Model<float> m = Model<float>::init(spec, rng);
        const std::uint64_t before = m.trunk_checksum();
        RandomSource head_rng(seed + 900);
        Model<float> swapped = head_swap(m, 6, head_rng);
        g.expect(swapped.trunk_checksum() == before,
                 fmt("trunk checksum changed across head swap (seed %llu)",
                     static_cast<unsigned long long>(seed)));
        g.expect(swapped.spec.head == HeadKind::LinearClassifier && swapped.spec.num_classes == 6,
                 "swapped head is not a 6-way classifier");
        g.info(fmt("seed %llu: trunk checksum %016llx preserved across head swap",
                   static_cast<unsigned long long>(seed),
                   static_cast<unsigned long long>(before)));
    }

    const std::string root = "acceptance_out";
    std::filesystem::create_directories(root);

    ExperimentConfig pre;
    pre.task.kind = TaskKind::Attribute;  // 3x3 grid, 4 shapes, 4 colors, 8 classes
    pre.model.model_dim = 32;
    pre.model.fusion.model_dim = 32;
    pre.model.fusion.heads = 4;
    pre.model.fusion.variant = FusionVariant::MergedAttention;
    pre.model.encoder_blocks = 2;
    pre.model.decoder_blocks = 1;
    pre.model.max_text_len = 16;
    pre.model.max_answer_len = 4;
    pre.optim.base_lr = 1e-3;
    pre.optim.warmup_steps = 80;
    pre.optim.cosine_cycle_steps = 20000;
    pre.optim.total_steps = 800;
    pre.optim.batch_size = 16;
    pre.train_size = 512;
    pre.eval_size = 128;
    pre.eval_interval = 200;
    pre.seed = 1;
    pre.out_dir = root + "/c9_pretrain";
    TrainResult pretrained = train(pre);
    g.info(fmt("generative pretraining exact match %.4f after %zu steps",
               pretrained.final_eval.exact_match_accuracy, pretrained.steps_run));

    RandomSource head_rng(77);
    Model<float> classifier = head_swap(pretrained.model, 8, head_rng);
    g.expect(classifier.trunk_checksum() == pretrained.model.trunk_checksum(),
             "trunk checksum changed when swapping the trained decoder for a classifier");
    const std::string warm_path = root + "/c9_warm_start.ckpt";
    save_checkpoint(warm_path, classifier);  // weights only: a warm start, not a resume

    int warm_wins = 0;
    for (std::uint64_t seed : {1ull, 2ull, 3ull}) {
        ExperimentConfig tune = pre;
        tune.model = classifier.spec;
        tune.optim.warmup_steps = 30;
        tune.optim.total_steps = 300;
        tune.eval_interval = 100;
        tune.seed = seed;
        tune.out_dir = root + "/c9_warm_s" + std::to_string(seed);
        TrainResult warm = train(tune, warm_path);
        tune.out_dir = root + "/c9_scratch_s" + std::to_string(seed);
        TrainResult scratch = train(tune);
        g.expect(warm.steps_run == 300 && scratch.steps_run == 300,
                 "fine-tuning runs did not complete");
        const double dw = warm.final_eval.exact_match_accuracy;
        const double dsc = scratch.final_eval.exact_match_accuracy;
        warm_wins += dw >= dsc;
        g.info(fmt("seed %llu: 300-step classifier accuracy, warm start %.4f vs scratch %.4f",
                   static_cast<unsigned long long>(seed), dw, dsc));
    }
    g.info(fmt("warm start matched or beat scratch on %d of 3 seeds", warm_wins));
}

}  // namespace

// Optional arguments select a subset of criteria by number, e.g.
// `acceptance 1 4 5`; no arguments runs the full gate.
int main(int argc, char** argv) {
    struct Criterion {
        int id;
        const char* name;
        void (*run)(Gate&);
    };
    const Criterion criteria[] = {
        {1, "autodiff gradients match central finite differences", criterion_gradients},
        {2, "fusion output shapes honor their contracts", criterion_shapes},
        {3, "combine ops differentiate and share one budget", criterion_combine_ops},
        {4, "analytic cost model matches instrumented execution", criterion_cost_oracle},
        {5, "shared-encoder cost is invariant to the fusion stage", criterion_token_invariance},
        {6, "every variant trains; deterministic runs reproduce bytes", criterion_training_sanity},
        {7, "fused models beat a text-only baseline at matched depth", criterion_comparison},
        {8, "evaluation metrics are exact and mutually consistent", criterion_metrics},
        {9, "head swaps preserve the trunk bit-for-bit", criterion_head_swap},
    };

    std::vector<int> wanted;
    for (int i = 1; i < argc; ++i) wanted.push_back(std::atoi(argv[i]));

    simd::select_best();
    std::printf("acceptance gate: %zu criteria, backend %s\n\n",
                wanted.empty() ? std::size(criteria) : wanted.size(),
                simd::active_backend() == simd::Backend::Avx2 ? "avx2" : "scalar");

    bool all_passed = true;
    for (const Criterion& c : criteria) {
        if (!wanted.empty() && std::find(wanted.begin(), wanted.end(), c.id) == wanted.end())
            continue;
        Gate gate;
        const auto started = std::chrono::steady_clock::now();
        try {
            c.run(gate);
        } catch (const std::exception& e) {
            gate.expect(false, std::string("unhandled exception: ") + e.what());
        }
        const double secs =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
        const bool ok = gate.failures == 0;
        all_passed = all_passed && ok;
        std::printf("[%s] criterion %d: %s (%zu checks, %.1fs)\n", ok ? "PASS" : "FAIL", c.id,
                    c.name, gate.checks, secs);
        for (const std::string& note : gate.notes) std::printf("    %s\n", note.c_str());
        std::fflush(stdout);
    }

    std::printf("\n%s\n", all_passed ? "acceptance: all criteria passed"
                                     : "acceptance: at least one criterion FAILED");
    return all_passed ? 0 : 1;
}
