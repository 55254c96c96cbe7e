#include "fusionlab/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>

namespace fusionlab {

namespace {

std::string trimmed(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    std::size_t b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

std::size_t parse_size(const std::string& key, const std::string& value) {
    try {
        std::size_t pos = 0;
        unsigned long long v = std::stoull(value, &pos);
        if (pos != value.size() || value[0] == '-') throw std::invalid_argument(value);
        return static_cast<std::size_t>(v);
    } catch (const std::exception&) {
        throw ConfigError("value for " + key + " is not a non-negative integer: '" + value + "'");
    }
}

std::uint64_t parse_u64(const std::string& key, const std::string& value) {
    return static_cast<std::uint64_t>(parse_size(key, value));
}

double parse_double(const std::string& key, const std::string& value) {
    try {
        std::size_t pos = 0;
        double v = std::stod(value, &pos);
        if (pos != value.size()) throw std::invalid_argument(value);
        return v;
    } catch (const std::exception&) {
        throw ConfigError("value for " + key + " is not a number: '" + value + "'");
    }
}

bool parse_bool(const std::string& key, const std::string& value) {
    if (value == "true" || value == "1") return true;
    if (value == "false" || value == "0") return false;
    throw ConfigError("value for " + key + " is not a boolean: '" + value + "'");
}

std::string fmt_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open " + path + " for writing");
    out << content;
    if (!out) throw IoError("failed writing " + path);
}

}  // namespace

void ExperimentConfig::finalize() {
    task.validate();
    const Vocab vocab = Vocab::build(task);
    model.vocab_size = vocab.size();
    model.grid_h = task.grid_h;
    model.grid_w = task.grid_w;
    model.cell_feature_dim = task.feature_dim();
    model.fusion.model_dim = model.model_dim;
    if (model.head == HeadKind::LinearClassifier && model.num_classes == 0)
        model.num_classes = task.answer_class_count();
    model.validate();
    if (optim.base_lr <= 0.0) throw ConfigError("optim.base_lr must be positive");
    if (optim.total_steps == 0) throw ConfigError("optim.total_steps must be positive");
    if (optim.warmup_steps == 0) throw ConfigError("optim.warmup_steps must be positive");
    if (optim.warmup_steps >= optim.total_steps)
        throw ConfigError("optim.warmup_steps (" + std::to_string(optim.warmup_steps) +
                          ") must be smaller than optim.total_steps (" +
                          std::to_string(optim.total_steps) + ")");
    if (optim.cosine_cycle_steps == 0) throw ConfigError("optim.cosine_cycle must be positive");
    if (optim.grad_clip_norm <= 0.0) throw ConfigError("optim.grad_clip_norm must be positive");
    if (optim.weight_decay < 0.0) throw ConfigError("optim.weight_decay must not be negative");
    if (optim.dropout < 0.0 || optim.dropout >= 1.0)
        throw ConfigError("optim.dropout must lie in [0, 1)");
    if (optim.batch_size == 0) throw ConfigError("optim.batch_size must be positive");
    if (eval_interval == 0) throw ConfigError("run.eval_interval must be positive");
    if (train_size == 0) throw ConfigError("run.train_size must be positive");
    if (!eval_on_train && eval_size == 0)
        throw ConfigError("run.eval_size must be positive unless run.eval_on_train is set");
    if (out_dir.empty()) throw ConfigError("out must not be empty");
}

void apply_override(ExperimentConfig& cfg, const std::string& key, const std::string& value) {
    if (key == "seed") cfg.seed = parse_u64(key, value);
    else if (key == "out") cfg.out_dir = value;
    else if (key == "deterministic") cfg.deterministic = parse_bool(key, value);
    else if (key == "model.dim") {
        cfg.model.model_dim = parse_size(key, value);
        cfg.model.fusion.model_dim = cfg.model.model_dim;
    } else if (key == "model.heads") cfg.model.fusion.heads = parse_size(key, value);
    else if (key == "model.encoder_blocks") cfg.model.encoder_blocks = parse_size(key, value);
    else if (key == "model.decoder_blocks") cfg.model.decoder_blocks = parse_size(key, value);
    else if (key == "model.head") cfg.model.head = head_kind_from_name(value);
    else if (key == "model.num_classes") cfg.model.num_classes = parse_size(key, value);
    else if (key == "model.max_text_len") cfg.model.max_text_len = parse_size(key, value);
    else if (key == "model.max_answer_len") cfg.model.max_answer_len = parse_size(key, value);
    else if (key == "model.fusion.variant") cfg.model.fusion.variant = fusion_variant_from_name(value);
    else if (key == "model.fusion.combine_op") cfg.model.fusion.combine_op = combine_op_from_name(value);
    else if (key == "model.fusion.co_attention_blocks")
        cfg.model.fusion.co_attention_blocks = parse_size(key, value);
    else if (key == "model.fusion.co_tok_rounds") cfg.model.fusion.co_tok_rounds = parse_size(key, value);
    else if (key == "model.fusion.co_tok_learned_tokens")
        cfg.model.fusion.co_tok_learned_tokens = parse_size(key, value);
    else if (key == "model.fusion.co_tok_blocks_per_round")
        cfg.model.fusion.co_tok_blocks_per_round = parse_size(key, value);
    else if (key == "task.kind") cfg.task.kind = task_kind_from_name(value);
    else if (key == "task.grid_h") cfg.task.grid_h = parse_size(key, value);
    else if (key == "task.grid_w") cfg.task.grid_w = parse_size(key, value);
    else if (key == "task.num_shapes") cfg.task.num_shapes = parse_size(key, value);
    else if (key == "task.num_colors") cfg.task.num_colors = parse_size(key, value);
    else if (key == "task.feature_noise") cfg.task.feature_noise = parse_double(key, value);
    else if (key == "task.max_count") cfg.task.max_count = parse_size(key, value);
    else if (key == "optim.base_lr") cfg.optim.base_lr = parse_double(key, value);
    else if (key == "optim.warmup_steps") cfg.optim.warmup_steps = parse_size(key, value);
    else if (key == "optim.cosine_cycle") cfg.optim.cosine_cycle_steps = parse_size(key, value);
    else if (key == "optim.weight_decay") cfg.optim.weight_decay = parse_double(key, value);
    else if (key == "optim.dropout") cfg.optim.dropout = parse_double(key, value);
    else if (key == "optim.grad_clip_norm") cfg.optim.grad_clip_norm = parse_double(key, value);
    else if (key == "optim.batch_size") cfg.optim.batch_size = parse_size(key, value);
    else if (key == "optim.total_steps") cfg.optim.total_steps = parse_size(key, value);
    else if (key == "run.eval_interval") cfg.eval_interval = parse_size(key, value);
    else if (key == "run.train_size") cfg.train_size = parse_size(key, value);
    else if (key == "run.eval_size") cfg.eval_size = parse_size(key, value);
    else if (key == "run.eval_on_train") cfg.eval_on_train = parse_bool(key, value);
    else if (key == "run.early_stop_exact_match") cfg.early_stop_exact_match = parse_double(key, value);
    else if (key == "run.zero_vision") cfg.zero_vision = parse_bool(key, value);
    else if (key == "run.checkpoint_interval") cfg.checkpoint_interval = parse_size(key, value);
    else throw ConfigError("unknown config key: " + key);
}

ExperimentConfig parse_config_text(const std::string& text) {
    ExperimentConfig cfg;
    std::istringstream in(text);
    std::string line;
    std::size_t number = 0;
    while (std::getline(in, line)) {
        ++number;
        const std::size_t hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trimmed(line);
        if (line.empty()) continue;
        const std::size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config line " + std::to_string(number) + " has no '=': " + line);
        const std::string key = trimmed(line.substr(0, eq));
        const std::string value = trimmed(line.substr(eq + 1));
        if (key.empty()) throw ConfigError("config line " + std::to_string(number) + " has an empty key");
        apply_override(cfg, key, value);
    }
    return cfg;
}

ExperimentConfig load_config_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open config file " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_config_text(buf.str());
}

std::string resolved_config_text(const ExperimentConfig& cfg) {
    std::vector<std::pair<std::string, std::string>> kv;
    auto put = [&](const std::string& k, const std::string& v) { kv.emplace_back(k, v); };
    put("seed", std::to_string(cfg.seed));
    put("out", cfg.out_dir);
    put("deterministic", cfg.deterministic ? "true" : "false");
    put("model.dim", std::to_string(cfg.model.model_dim));
    put("model.heads", std::to_string(cfg.model.fusion.heads));
    put("model.encoder_blocks", std::to_string(cfg.model.encoder_blocks));
    put("model.decoder_blocks", std::to_string(cfg.model.decoder_blocks));
    put("model.head", head_kind_name(cfg.model.head));
    put("model.num_classes", std::to_string(cfg.model.num_classes));
    put("model.max_text_len", std::to_string(cfg.model.max_text_len));
    put("model.max_answer_len", std::to_string(cfg.model.max_answer_len));
    put("model.fusion.variant", fusion_variant_name(cfg.model.fusion.variant));
    put("model.fusion.combine_op", combine_op_name(cfg.model.fusion.combine_op));
    put("model.fusion.co_attention_blocks", std::to_string(cfg.model.fusion.co_attention_blocks));
    put("model.fusion.co_tok_rounds", std::to_string(cfg.model.fusion.co_tok_rounds));
    put("model.fusion.co_tok_learned_tokens", std::to_string(cfg.model.fusion.co_tok_learned_tokens));
    put("model.fusion.co_tok_blocks_per_round", std::to_string(cfg.model.fusion.co_tok_blocks_per_round));
    put("task.kind", task_kind_name(cfg.task.kind));
    put("task.grid_h", std::to_string(cfg.task.grid_h));
    put("task.grid_w", std::to_string(cfg.task.grid_w));
    put("task.num_shapes", std::to_string(cfg.task.num_shapes));
    put("task.num_colors", std::to_string(cfg.task.num_colors));
    put("task.feature_noise", fmt_double(cfg.task.feature_noise));
    put("task.max_count", std::to_string(cfg.task.max_count));
    put("optim.base_lr", fmt_double(cfg.optim.base_lr));
    put("optim.warmup_steps", std::to_string(cfg.optim.warmup_steps));
    put("optim.cosine_cycle", std::to_string(cfg.optim.cosine_cycle_steps));
    put("optim.weight_decay", fmt_double(cfg.optim.weight_decay));
    put("optim.dropout", fmt_double(cfg.optim.dropout));
    put("optim.grad_clip_norm", fmt_double(cfg.optim.grad_clip_norm));
    put("optim.batch_size", std::to_string(cfg.optim.batch_size));
    put("optim.total_steps", std::to_string(cfg.optim.total_steps));
    put("run.eval_interval", std::to_string(cfg.eval_interval));
    put("run.train_size", std::to_string(cfg.train_size));
    put("run.eval_size", std::to_string(cfg.eval_size));
    put("run.eval_on_train", cfg.eval_on_train ? "true" : "false");
    put("run.early_stop_exact_match", fmt_double(cfg.early_stop_exact_match));
    put("run.zero_vision", cfg.zero_vision ? "true" : "false");
    put("run.checkpoint_interval", std::to_string(cfg.checkpoint_interval));
    std::sort(kv.begin(), kv.end());
    std::ostringstream out;
    out << "# resolved experiment configuration\n";
    for (const auto& [k, v] : kv) out << k << "=" << v << "\n";
    return out.str();
}

double lr_schedule(std::size_t step, const OptimizerConfig& cfg) {
    if (cfg.warmup_steps > 0 && step < cfg.warmup_steps)
        return cfg.base_lr * static_cast<double>(step) / static_cast<double>(cfg.warmup_steps);
    const std::size_t into_cycle = step - cfg.warmup_steps;
    if (into_cycle >= cfg.cosine_cycle_steps) return 0.0;
    const double progress =
        static_cast<double>(into_cycle) / static_cast<double>(cfg.cosine_cycle_steps);
    return cfg.base_lr * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

void AdamOptimizer::step(const std::vector<Tensor<float>*>& params, double lr,
                         std::size_t step_index) {
    if (step_index == 0) throw ConfigError("optimizer step index is 1-based");
    const double b1 = cfg_.adam_beta1;
    const double b2 = cfg_.adam_beta2;
    const double corr1 = 1.0 - std::pow(b1, static_cast<double>(step_index));
    const double corr2 = 1.0 - std::pow(b2, static_cast<double>(step_index));
    std::size_t offset = 0;
    for (Tensor<float>* p : params) {
        const std::size_t n = p->numel();
        if (offset + n > m_.size())
            throw ConfigError("optimizer state is smaller than the parameter set");
        const float* g = p->grad ? p->grad->data() : nullptr;
        for (std::size_t i = 0; i < n; ++i) {
            const double gi = g ? static_cast<double>(g[i]) : 0.0;
            // moments are stored in f32 and reloaded from the stored value, so
            // a checkpointed run resumes bit-exactly
            m_[offset + i] = static_cast<float>(b1 * m_[offset + i] + (1.0 - b1) * gi);
            v_[offset + i] = static_cast<float>(b2 * v_[offset + i] + (1.0 - b2) * gi * gi);
            const double mhat = static_cast<double>(m_[offset + i]) / corr1;
            const double vhat = static_cast<double>(v_[offset + i]) / corr2;
            double update = lr * mhat / (std::sqrt(vhat) + cfg_.adam_eps);
            update += lr * cfg_.weight_decay * static_cast<double>(p->values[i]);
            p->values[i] = static_cast<float>(static_cast<double>(p->values[i]) - update);
        }
        offset += n;
    }
    if (offset != m_.size())
        throw ConfigError("optimizer state does not cover every parameter");
}

void AdamOptimizer::restore(std::vector<float> m, std::vector<float> v) {
    if (m.size() != m_.size() || v.size() != v_.size())
        throw ConfigError("restored optimizer state has " + std::to_string(m.size()) + "/" +
                          std::to_string(v.size()) + " entries, expected " +
                          std::to_string(m_.size()));
    m_ = std::move(m);
    v_ = std::move(v);
}

namespace {

std::string csv_row(const RunRecord& r) {
    std::ostringstream out;
    char buf[64];
    out << r.step << ",";
    std::snprintf(buf, sizeof buf, "%.9g", r.loss);
    out << buf << ",";
    std::snprintf(buf, sizeof buf, "%.17g", r.lr);
    out << buf << ",";
    if (r.has_eval) {
        std::snprintf(buf, sizeof buf, "%.6f", r.exact_match);
        out << buf << ",";
        std::snprintf(buf, sizeof buf, "%.6f", r.vqa_soft);
        out << buf << ",";
    } else {
        out << ",,";
    }
    std::snprintf(buf, sizeof buf, "%.9g", r.grad_norm);
    out << buf << "\n";
    return out.str();
}

}  // namespace

TrainResult train(const ExperimentConfig& cfg_in, const std::string& resume_from) {
    ExperimentConfig cfg = cfg_in;
    cfg.finalize();
    std::filesystem::create_directories(cfg.out_dir);

    Dataset train_ds = generate_dataset(cfg.seed, cfg.train_size, cfg.task);
    const Dataset eval_ds =
        cfg.eval_on_train ? train_ds : generate_dataset(cfg.seed + 1, cfg.eval_size, cfg.task);

    TrainResult result;
    result.train_fingerprint_before = dataset_fingerprint(train_ds);

    const RandomSource root(cfg.seed);
    RandomSource init_rng = root.fork(1);
    RandomSource run_rng = root.fork(2);  // batch sampling and dropout; checkpointed

    Model<float> model = Model<float>::init(cfg.model, init_rng);
    std::vector<Tensor<float>*> params;
    model.visit([&](const std::string&, Tensor<float>& t) { params.push_back(&t); });
    std::size_t param_elems = 0;
    for (const Tensor<float>* p : params) param_elems += p->numel();
    AdamOptimizer opt(cfg.optim, param_elems);

    std::size_t start_step = 0;
    if (!resume_from.empty()) {
        // a checkpoint with optimizer state continues its run bit-exactly; a
        // model-only checkpoint warm-starts a fresh run from its weights
        const bool continue_run = checkpoint_has_training_state(resume_from);
        TrainingState ts;
        Model<float> loaded = load_checkpoint(resume_from, continue_run ? &ts : nullptr);
        if (nlohmann::json(loaded.spec) != nlohmann::json(cfg.model))
            throw ConfigError("checkpoint " + resume_from + " was trained with a different model");
        model = std::move(loaded);
        params.clear();
        model.visit([&](const std::string&, Tensor<float>& t) { params.push_back(&t); });
        if (continue_run) {
            start_step = static_cast<std::size_t>(ts.step);
            if (start_step > cfg.optim.total_steps)
                throw ConfigError("checkpoint is at step " + std::to_string(start_step) +
                                  ", beyond total_steps " + std::to_string(cfg.optim.total_steps));
            run_rng.set_state(ts.data_rng_state);
            opt.restore(ts.adam_m, ts.adam_v);
        }
    }

    write_text_file(cfg.out_dir + "/config.txt", resolved_config_text(cfg));
    result.metrics_path = cfg.out_dir + "/metrics.csv";
    std::ofstream metrics(result.metrics_path, std::ios::binary);
    if (!metrics) throw IoError("cannot open " + result.metrics_path + " for writing");
    metrics << "step,loss,lr,exact_match,vqa_soft,grad_norm\n";

    ForwardOptions<float> fopts;
    fopts.dropout = static_cast<float>(cfg.optim.dropout);
    fopts.rng = &run_rng;

    const EvalOptions eval_opts{cfg.zero_vision};
    result.steps_run = start_step;
    bool stopped_early = false;

    for (std::size_t step = start_step + 1; step <= cfg.optim.total_steps && !stopped_early;
         ++step) {
        // when the batch covers the whole set, take it in order; otherwise
        // sample slots with replacement so every step costs the same
        std::vector<const QAExample*> batch;
        if (cfg.optim.batch_size >= train_ds.examples.size()) {
            for (const QAExample& e : train_ds.examples) batch.push_back(&e);
        } else {
            for (std::size_t b = 0; b < cfg.optim.batch_size; ++b) {
                const int pick =
                    run_rng.uniform_int(0, static_cast<int>(train_ds.examples.size()));
                batch.push_back(&train_ds.examples[static_cast<std::size_t>(pick)]);
            }
        }

        Tape<float> tape;
        Var total{};
        bool first = true;
        for (const QAExample* ex : batch) {
            Tensor<float> feats = ex->features(cfg.task);
            if (cfg.zero_vision) std::fill(feats.values.begin(), feats.values.end(), 0.0f);
            Var loss;
            if (cfg.model.head == HeadKind::Decoder) {
                loss = model.forward_generative(tape, feats, ex->question_ids, ex->answer_ids,
                                                fopts);
            } else {
                Var logits = model.forward_classify(tape, feats, ex->question_ids, fopts);
                loss = tape.cross_entropy_rows(logits, {ex->answer_class});
            }
            total = first ? loss : tape.add(total, loss);
            first = false;
        }
        const Var mean_loss = tape.scale(total, 1.0f / static_cast<float>(batch.size()));
        const double loss_value = static_cast<double>(tape.value(mean_loss).values[0]);
        if (!std::isfinite(loss_value))
            throw NumericError("non-finite loss at step " + std::to_string(step));

        for (Tensor<float>* p : params) {
            p->ensure_grad();
            p->zero_grad();
        }
        tape.backward(mean_loss);

        const double grad_norm = clip_global_norm(params, cfg.optim.grad_clip_norm);
        if (!std::isfinite(grad_norm))
            throw NumericError("non-finite gradient at step " + std::to_string(step));
        if (grad_norm > cfg.optim.grad_clip_norm) {
            // measured after f32 re-quantization, hence the loose ceiling
            const double after = clip_global_norm(params, cfg.optim.grad_clip_norm * 2.0);
            if (after > cfg.optim.grad_clip_norm * (1.0 + 1e-6))
                throw NumericError("gradient clipping left norm " + std::to_string(after) +
                                   " at step " + std::to_string(step));
        }

        const double lr = lr_schedule(step, cfg.optim);
        opt.step(params, lr, step);

        RunRecord rec;
        rec.step = step;
        rec.loss = loss_value;
        rec.lr = lr;
        rec.grad_norm = grad_norm;
        if (step % cfg.eval_interval == 0 || step == cfg.optim.total_steps) {
            const EvalResult ev = evaluate(model, eval_ds, eval_opts);
            rec.has_eval = true;
            rec.exact_match = ev.exact_match_accuracy;
            rec.vqa_soft = ev.vqa_soft_accuracy;
            result.final_eval = ev;
            if (cfg.early_stop_exact_match > 0.0 &&
                rec.exact_match >= cfg.early_stop_exact_match)
                stopped_early = true;
        }
        result.records.push_back(rec);
        metrics << csv_row(rec);
        result.steps_run = step;

        if (!stopped_early && cfg.checkpoint_interval > 0 &&
            step % cfg.checkpoint_interval == 0 && step < cfg.optim.total_steps) {
            TrainingState ts;
            ts.step = static_cast<std::int64_t>(step);
            ts.data_rng_state = run_rng.state();
            ts.adam_m = opt.first_moments();
            ts.adam_v = opt.second_moments();
            save_checkpoint(cfg.out_dir + "/step_" + std::to_string(step) + ".ckpt", model, &ts);
        }
    }
    metrics.close();
    if (!metrics) throw IoError("failed writing " + result.metrics_path);

    if (result.records.empty() || !result.records.back().has_eval)
        result.final_eval = evaluate(model, eval_ds, eval_opts);

    TrainingState ts;
    ts.step = static_cast<std::int64_t>(result.steps_run);
    ts.data_rng_state = run_rng.state();
    ts.adam_m = opt.first_moments();
    ts.adam_v = opt.second_moments();
    result.checkpoint_path = cfg.out_dir + "/final.ckpt";
    save_checkpoint(result.checkpoint_path, model, &ts);

    result.train_fingerprint_after = dataset_fingerprint(train_ds);
    result.model = std::move(model);
    return result;
}

namespace {

std::string accuracy_cell(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return buf;
}

}  // namespace

std::string ComparisonTable::to_csv() const {
    std::ostringstream out;
    out << "variant,params,flops,exact_match,vqa_soft\n";
    for (const ComparisonRow& r : rows)
        out << r.variant << "," << r.params << "," << r.flops << ","
            << accuracy_cell(r.exact_match) << "," << accuracy_cell(r.vqa_soft) << "\n";
    return out.str();
}

std::string ComparisonTable::to_text() const {
    std::ostringstream out;
    char line[160];
    std::snprintf(line, sizeof line, "%-28s %14s %16s %12s %10s\n", "variant", "params", "flops",
                  "exact_match", "vqa_soft");
    out << line;
    for (const ComparisonRow& r : rows) {
        std::snprintf(line, sizeof line, "%-28s %14lld %16lld %12.4f %10.4f\n", r.variant.c_str(),
                      static_cast<long long>(r.params), static_cast<long long>(r.flops),
                      r.exact_match, r.vqa_soft);
        out << line;
    }
    if (!notes.empty()) out << "\n" << notes;
    return out.str();
}

ComparisonTable compare_fusions(const ExperimentConfig& base,
                                const std::vector<FusionSpec>& variants, bool include_text_only) {
    if (variants.size() < 2)
        throw ConfigError("fusion comparison needs at least two variants, got " +
                          std::to_string(variants.size()));
    std::filesystem::create_directories(base.out_dir);

    ComparisonTable table;
    double merged_em = -1.0;
    double compound_em = -1.0;
    std::vector<std::string> used_labels;

    auto run_one = [&](FusionSpec fspec, bool text_only, std::string label) {
        while (std::find(used_labels.begin(), used_labels.end(), label) != used_labels.end())
            label += "_" + combine_op_name(fspec.combine_op);
        used_labels.push_back(label);

        ExperimentConfig cfg = base;
        cfg.model.fusion = fspec;
        cfg.model.fusion.model_dim = cfg.model.model_dim;
        cfg.zero_vision = text_only;
        cfg.out_dir = base.out_dir + "/" + label;
        cfg.finalize();

        const cost::CostReport report = cost::count_model(cfg.model);
        const TrainResult run = train(cfg);

        ComparisonRow row;
        row.variant = label;
        row.params = report.total_params();
        row.flops = report.total_flops();
        row.exact_match = run.final_eval.exact_match_accuracy;
        row.vqa_soft = run.final_eval.vqa_soft_accuracy;
        table.rows.push_back(row);

        if (!text_only && fspec.variant == FusionVariant::MergedAttention)
            merged_em = row.exact_match;
        if (!text_only && fspec.variant == FusionVariant::CompoundTokens)
            compound_em = row.exact_match;
    };

    for (const FusionSpec& v : variants) run_one(v, false, fusion_variant_name(v.variant));
    if (include_text_only) {
        FusionSpec blank = base.model.fusion;
        blank.variant = FusionVariant::MergedAttention;
        run_one(blank, true, "text_only");
    }

    std::stable_sort(table.rows.begin(), table.rows.end(),
                     [](const ComparisonRow& a, const ComparisonRow& b) {
                         return a.exact_match > b.exact_match;
                     });

    std::ostringstream notes;
    notes << "all rows share seed " << base.seed << ", the same generated datasets, and "
          << base.optim.total_steps << " optimizer steps\n";
    if (merged_em >= 0.0 && compound_em >= 0.0) {
        char buf[96];
        std::snprintf(buf, sizeof buf,
                      "compound_tokens vs merged_attention exact-match delta: %+.4f\n",
                      compound_em - merged_em);
        notes << buf;
    }
    table.notes = notes.str();

    write_text_file(base.out_dir + "/comparison.csv", table.to_csv());
    write_text_file(base.out_dir + "/comparison.txt", table.to_text());
    return table;
}

}  // namespace fusionlab
