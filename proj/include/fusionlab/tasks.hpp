#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include "fusionlab/model.hpp"

namespace fusionlab {

enum class TaskKind { Attribute, SpatialRelation, Entailment3Way, Counting };

std::string task_kind_name(TaskKind kind);
TaskKind task_kind_from_name(const std::string& name);

/// Geometry and alphabet sizes for the synthetic QA generators. The word
/// alphabets cap at 8 entries each; answers are always single words so exact
/// match and classification agree.
struct TaskConfig {
    TaskKind kind = TaskKind::SpatialRelation;
    std::size_t grid_h = 3, grid_w = 3;
    std::size_t num_shapes = 4, num_colors = 4;
    double feature_noise = 0.05;
    std::size_t max_count = 5;  // counting answers range over 0..max_count

    std::size_t cells() const { return grid_h * grid_w; }
    // one-hot shape, one-hot color, occupied flag
    std::size_t feature_dim() const { return num_shapes + num_colors + 1; }
    std::size_t answer_class_count() const;
    void validate() const;
};

/// Deterministic word list shared by all tasks under one config: markers,
/// the fixed question grammar, then colors, shapes, count words, and the
/// entailment labels. Desk-scale stand-in for an open vocabulary.
struct Vocab {
    std::vector<std::string> words;
    std::unordered_map<std::string, int> index;

    static Vocab build(const TaskConfig& config);
    std::size_t size() const { return words.size(); }
    int id(const std::string& word) const;
    const std::string& word(int id) const;
    std::string decode(const std::vector<int>& ids) const;  // stops at the end marker
};

struct Cell {
    bool occupied = false;
    int shape = -1;
    int color = -1;
};

/// Grid of optional objects; rendering to per-cell feature vectors happens
/// separately so the symbolic form stays the source of truth.
struct SyntheticImage {
    std::size_t h = 0, w = 0;
    std::vector<Cell> cells;  // row-major

    SyntheticImage() = default;
    SyntheticImage(std::size_t h_, std::size_t w_) : h(h_), w(w_), cells(h_ * w_) {}
    Cell& at(std::size_t r, std::size_t c) { return cells[r * w + c]; }
    const Cell& at(std::size_t r, std::size_t c) const { return cells[r * w + c]; }
};

/// One-hot cell encodings plus Gaussian feature noise, deterministic under
/// the seed.
Tensor<float> render_features(const SyntheticImage& image, const TaskConfig& config,
                              std::uint64_t feature_seed);

struct QAExample {
    SyntheticImage image;
    std::vector<int> question_ids;
    std::vector<int> answer_ids;  // single answer word, no end marker
    int answer_class = -1;
    TaskKind kind = TaskKind::Attribute;
    std::uint64_t feature_seed = 0;

    Tensor<float> features(const TaskConfig& config) const {
        return render_features(image, config, feature_seed);
    }
};

struct Dataset {
    TaskConfig config;
    std::uint64_t seed = 0;
    std::vector<QAExample> examples;
};

/// Deterministic under seed; every stored answer is re-derivable from the
/// image grid and the question alone (see derive_answer).
Dataset generate_dataset(std::uint64_t seed, std::size_t size, const TaskConfig& config);

/// Independent answer oracle: parses the question words and reads the grid,
/// sharing no state with the generator's choices.
std::vector<int> derive_answer(const Vocab& vocab, const TaskConfig& config,
                               const SyntheticImage& image,
                               const std::vector<int>& question_ids);

/// 1 iff the sequences are identical after truncating each at the first end
/// marker.
int exact_match(const std::vector<int>& predicted, const std::vector<int>& gold,
                int eos_id = 1);

/// min(matches/3, 1) over exactly ten reference answers.
double vqa_accuracy(const std::string& predicted, const std::vector<std::string>& gold_answers);

struct EvalResult {
    double exact_match_accuracy = 0.0;
    double vqa_soft_accuracy = 0.0;
    struct TaskSlice {
        std::size_t count = 0;
        double exact_match_accuracy = 0.0;
        double vqa_soft_accuracy = 0.0;
    };
    std::map<std::string, TaskSlice> per_task;
};

struct EvalOptions {
    bool zero_vision = false;  // text-only ablation: blank the image features
};

/// Greedy generation (decoder head) or argmax classification (classifier
/// head) per example, aggregated over the dataset.
EvalResult evaluate(Model<float>& model, const Dataset& dataset, const EvalOptions& opts = {});

/// Line-delimited records behind a versioned header; the loader rejects
/// unknown versions.
void save_dataset(const std::string& path, const Dataset& dataset);
Dataset load_dataset(const std::string& path);

std::uint64_t dataset_fingerprint(const Dataset& dataset);

}  // namespace fusionlab
