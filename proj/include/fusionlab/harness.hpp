#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "fusionlab/costmodel.hpp"
#include "fusionlab/serialize.hpp"
#include "fusionlab/tasks.hpp"

namespace fusionlab {

/// Adam with decoupled weight decay, linear warmup into a single cosine
/// decay cycle, and global-norm gradient clipping. A full-scale recipe
/// (warmup 8000, cycle 100000) stays available through config; the desk
/// default shortens warmup so it fits inside the default 5000-step run.
struct OptimizerConfig {
    double base_lr = 1e-3;
    std::size_t warmup_steps = 500;
    std::size_t cosine_cycle_steps = 100000;
    double weight_decay = 0.0;
    double dropout = 0.0;
    double grad_clip_norm = 1.0;
    std::size_t batch_size = 32;
    std::size_t total_steps = 5000;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
};

struct ExperimentConfig {
    ModelSpec model;
    TaskConfig task;
    OptimizerConfig optim;
    std::uint64_t seed = 0;
    std::string out_dir = "runs/out";
    bool deterministic = false;
    std::size_t eval_interval = 250;
    std::size_t train_size = 2048;
    std::size_t eval_size = 256;
    bool eval_on_train = false;
    double early_stop_exact_match = 0.0;  // <= 0 disables early stopping
    bool zero_vision = false;             // text-only ablation
    std::size_t checkpoint_interval = 0;  // 0: only the final checkpoint

    ExperimentConfig() {
        model.model_dim = 64;
        model.fusion.model_dim = 64;
        model.encoder_blocks = 2;
        model.decoder_blocks = 2;
    }

    /// Fill the fields the task dictates (vocab, grid, feature width,
    /// classifier size) and check every invariant.
    void finalize();
};

/// Flat key=value lines with dotted paths; '#' starts a comment. Unknown
/// keys and malformed values are rejected.
ExperimentConfig parse_config_text(const std::string& text);
ExperimentConfig load_config_file(const std::string& path);
void apply_override(ExperimentConfig& cfg, const std::string& key, const std::string& value);
/// Every key in sorted order; parsing the echo reproduces the config.
std::string resolved_config_text(const ExperimentConfig& cfg);

/// 0 at step 0, linear to base_lr at warmup_steps exactly, cosine to 0 over
/// the following cycle, 0 afterwards.
double lr_schedule(std::size_t step, const OptimizerConfig& cfg);

/// Scale gradients so the global norm is at most max_norm; returns the
/// pre-clip norm. The scale factor is exact in double; storing into T
/// re-quantizes, so the stored norm lands within T's precision of the
/// ceiling (about 1e-7 relative for f32).
template <typename T>
double clip_global_norm(const std::vector<Tensor<T>*>& params, double max_norm) {
    double sum_sq = 0.0;
    for (const Tensor<T>* p : params) {
        if (!p->grad) continue;
        for (T g : *p->grad) sum_sq += static_cast<double>(g) * static_cast<double>(g);
    }
    const double norm = std::sqrt(sum_sq);
    if (norm > max_norm && norm > 0.0) {
        const double s = max_norm / norm;
        for (Tensor<T>* p : params) {
            if (!p->grad) continue;
            for (T& g : *p->grad) g = static_cast<T>(static_cast<double>(g) * s);
        }
    }
    return norm;
}

/// Adam moment buffers over a fixed parameter walk, serializable into a
/// checkpoint.
class AdamOptimizer {
public:
    AdamOptimizer(const OptimizerConfig& cfg, std::size_t param_count)
        : cfg_(cfg), m_(param_count, 0.0f), v_(param_count, 0.0f) {}

    /// One decoupled-weight-decay Adam update from the gradients stored on
    /// the parameters. step_index is 1-based.
    void step(const std::vector<Tensor<float>*>& params, double lr, std::size_t step_index);

    const std::vector<float>& first_moments() const { return m_; }
    const std::vector<float>& second_moments() const { return v_; }
    void restore(std::vector<float> m, std::vector<float> v);

private:
    OptimizerConfig cfg_;
    std::vector<float> m_;
    std::vector<float> v_;
};

struct RunRecord {
    std::size_t step = 0;
    double loss = 0.0;
    double lr = 0.0;
    double grad_norm = 0.0;  // pre-clip
    bool has_eval = false;
    double exact_match = 0.0;
    double vqa_soft = 0.0;
};

struct TrainResult {
    std::vector<RunRecord> records;
    Model<float> model;
    EvalResult final_eval;
    std::string checkpoint_path;
    std::string metrics_path;
    std::uint64_t train_fingerprint_before = 0;
    std::uint64_t train_fingerprint_after = 0;
    std::size_t steps_run = 0;
};

/// Seeded end-to-end run: generate data, train with the configured recipe,
/// evaluate on the configured interval, write metrics.csv, the resolved
/// config, and the final checkpoint into out_dir. A non-finite loss aborts
/// with a diagnostic naming the step. Pass resume_from to continue a run
/// from a mid-run checkpoint bit-exactly.
TrainResult train(const ExperimentConfig& cfg, const std::string& resume_from = "");

struct ComparisonRow {
    std::string variant;
    std::int64_t params = 0;
    std::int64_t flops = 0;
    double exact_match = 0.0;
    double vqa_soft = 0.0;
};

struct ComparisonTable {
    std::vector<ComparisonRow> rows;  // ranked by exact match, best first
    std::string notes;
    std::string to_csv() const;
    std::string to_text() const;
};

/// Train every variant under the same seed, data, and step budget; rank by
/// exact match. include_text_only adds a vision-blanked merged-attention
/// baseline row. Writes comparison.csv/.txt plus per-variant metrics under
/// cfg.out_dir.
ComparisonTable compare_fusions(const ExperimentConfig& cfg,
                                const std::vector<FusionSpec>& variants,
                                bool include_text_only = false);

/// Loss curves, one per metrics CSV: writes <out_base>.svg and <out_base>.txt.
/// Pure functions of the input files, so re-emission is byte-identical.
void emit_loss_plot(const std::vector<std::string>& metrics_csvs, const std::string& out_base);
/// Accuracy-versus-flops scatter from a comparison CSV, one point per row.
void emit_scatter_plot(const std::string& comparison_csv, const std::string& out_base);

}  // namespace fusionlab
