#include "fusionlab/tasks.hpp"

#include <algorithm>
#include <fstream>

#include <json.hpp>

#include "fusionlab/rng.hpp"

namespace fusionlab {

namespace {

const std::vector<std::string> kGrammar = {"what", "color", "shape", "is",    "the",
                                           "object", "right", "left",  "of",    "above",
                                           "below",  "how",   "many"};
const std::vector<std::string> kColors = {"red",    "green",  "blue",  "yellow",
                                          "purple", "orange", "white", "black"};
const std::vector<std::string> kShapes = {"circle",  "square",  "triangle", "star",
                                          "hexagon", "diamond", "cross",    "ring"};
const std::vector<std::string> kCounts = {"zero", "one", "two",   "three", "four",
                                          "five", "six", "seven", "eight", "nine"};
const std::vector<std::string> kLabels = {"entails", "neutral", "contradicts"};

}  // namespace

std::string task_kind_name(TaskKind kind) {
    switch (kind) {
        case TaskKind::Attribute: return "attribute";
        case TaskKind::SpatialRelation: return "spatial_relation";
        case TaskKind::Entailment3Way: return "entailment3way";
        case TaskKind::Counting: return "counting";
    }
    return "attribute";
}

TaskKind task_kind_from_name(const std::string& name) {
    if (name == "attribute") return TaskKind::Attribute;
    if (name == "spatial_relation") return TaskKind::SpatialRelation;
    if (name == "entailment3way") return TaskKind::Entailment3Way;
    if (name == "counting") return TaskKind::Counting;
    throw ConfigError("unknown task kind: " + name);
}

std::size_t TaskConfig::answer_class_count() const {
    switch (kind) {
        case TaskKind::Attribute: return num_colors + num_shapes;
        case TaskKind::SpatialRelation: return num_colors;
        case TaskKind::Entailment3Way: return 3;
        case TaskKind::Counting: return max_count + 1;
    }
    return 0;
}

void TaskConfig::validate() const {
    if (grid_h == 0 || grid_w == 0) throw ConfigError("grid extents must be positive");
    if (num_shapes < 2 || num_colors < 2)
        throw ConfigError("alphabet too small: tasks need at least 2 shapes and 2 colors");
    if (num_shapes > kShapes.size() || num_colors > kColors.size())
        throw ConfigError("alphabet exceeds the built-in word lists");
    if (feature_noise < 0.0) throw ConfigError("feature noise must be nonnegative");
    if (kind == TaskKind::SpatialRelation && (grid_h < 2 || grid_w < 2))
        throw ConfigError("spatial relations need a grid of at least 2x2");
    if (kind == TaskKind::Counting) {
        if (max_count == 0 || max_count > 9)
            throw ConfigError("counting needs max_count in 1..9");
        if (max_count > cells())
            throw ConfigError("max_count cannot exceed the number of grid cells");
    }
}

Vocab Vocab::build(const TaskConfig& config) {
    config.validate();
    Vocab v;
    v.words = {"<bos>", "<eos>"};
    v.words.insert(v.words.end(), kGrammar.begin(), kGrammar.end());
    v.words.insert(v.words.end(), kColors.begin(), kColors.begin() + config.num_colors);
    v.words.insert(v.words.end(), kShapes.begin(), kShapes.begin() + config.num_shapes);
    v.words.insert(v.words.end(), kCounts.begin(), kCounts.end());
    v.words.insert(v.words.end(), kLabels.begin(), kLabels.end());
    for (std::size_t i = 0; i < v.words.size(); ++i) v.index[v.words[i]] = static_cast<int>(i);
    return v;
}

int Vocab::id(const std::string& word) const {
    auto it = index.find(word);
    if (it == index.end()) throw ConfigError("word not in vocabulary: " + word);
    return it->second;
}

const std::string& Vocab::word(int id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= words.size())
        throw ConfigError("token id out of vocabulary: " + std::to_string(id));
    return words[static_cast<std::size_t>(id)];
}

std::string Vocab::decode(const std::vector<int>& ids) const {
    std::string out;
    for (int id : ids) {
        if (id == 1) break;  // end marker
        if (!out.empty()) out += ' ';
        out += word(id);
    }
    return out;
}

Tensor<float> render_features(const SyntheticImage& image, const TaskConfig& config,
                              std::uint64_t feature_seed) {
    const std::size_t f = config.feature_dim();
    Tensor<float> out = zeros<float>({image.h * image.w, f});
    for (std::size_t i = 0; i < image.cells.size(); ++i) {
        const Cell& cell = image.cells[i];
        if (!cell.occupied) continue;
        out.values[i * f + static_cast<std::size_t>(cell.shape)] = 1.0f;
        out.values[i * f + config.num_shapes + static_cast<std::size_t>(cell.color)] = 1.0f;
        out.values[i * f + config.num_shapes + config.num_colors] = 1.0f;
    }
    RandomSource rng(feature_seed);
    for (auto& v : out.values)
        v += static_cast<float>(rng.normal(0.0, config.feature_noise));
    return out;
}

namespace {

struct Words {
    const Vocab& vocab;
    std::vector<int> ids(std::initializer_list<std::string> ws) const {
        std::vector<int> out;
        for (const auto& w : ws) out.push_back(vocab.id(w));
        return out;
    }
};

int pick_other(RandomSource& rng, int count, int avoid) {
    int v = rng.uniform_int(0, count - 1);
    if (v >= avoid) ++v;
    return v;
}

void scatter_distractors(SyntheticImage& img, RandomSource& rng, const TaskConfig& cfg,
                         double density, int avoid_shape, int avoid_color = -1) {
    for (auto& cell : img.cells) {
        if (cell.occupied || rng.uniform() >= density) continue;
        cell.occupied = true;
        cell.shape = avoid_shape >= 0
                         ? pick_other(rng, static_cast<int>(cfg.num_shapes), avoid_shape)
                         : rng.uniform_int(0, static_cast<int>(cfg.num_shapes));
        cell.color = avoid_color >= 0
                         ? pick_other(rng, static_cast<int>(cfg.num_colors), avoid_color)
                         : rng.uniform_int(0, static_cast<int>(cfg.num_colors));
    }
}

QAExample make_attribute(RandomSource& rng, const TaskConfig& cfg, const Vocab& vocab) {
    Words w{vocab};
    QAExample ex;
    ex.kind = TaskKind::Attribute;
    ex.image = SyntheticImage(cfg.grid_h, cfg.grid_w);
    const bool color_question = rng.uniform() < 0.5;
    const int shape = rng.uniform_int(0, static_cast<int>(cfg.num_shapes));
    const int color = rng.uniform_int(0, static_cast<int>(cfg.num_colors));
    const std::size_t at = static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(cfg.cells())));
    ex.image.cells[at] = {true, shape, color};
    if (color_question) {
        // other objects may repeat the color but never the asked-about shape
        scatter_distractors(ex.image, rng, cfg, 0.4, shape);
        ex.question_ids = w.ids({"what", "color", "is", "the", kShapes[shape]});
        ex.answer_ids = {vocab.id(kColors[color])};
        ex.answer_class = color;
    } else {
        scatter_distractors(ex.image, rng, cfg, 0.4, -1, color);
        ex.question_ids = w.ids({"what", "shape", "is", "the", kColors[color], "object"});
        ex.answer_ids = {vocab.id(kShapes[shape])};
        ex.answer_class = static_cast<int>(cfg.num_colors) + shape;
    }
    return ex;
}

QAExample make_spatial(RandomSource& rng, const TaskConfig& cfg, const Vocab& vocab) {
    Words w{vocab};
    QAExample ex;
    ex.kind = TaskKind::SpatialRelation;
    ex.image = SyntheticImage(cfg.grid_h, cfg.grid_w);
    const int dir = rng.uniform_int(0, 4);  // right, left, above, below
    const int anchor_shape = rng.uniform_int(0, static_cast<int>(cfg.num_shapes));
    const std::size_t h = cfg.grid_h, wd = cfg.grid_w;
    const std::size_t r = static_cast<std::size_t>(
        rng.uniform_int(dir == 2 ? 1 : 0, static_cast<int>(dir == 3 ? h - 1 : h)));
    const std::size_t c = static_cast<std::size_t>(
        rng.uniform_int(dir == 1 ? 1 : 0, static_cast<int>(dir == 0 ? wd - 1 : wd)));
    std::size_t tr = r, tc = c;
    if (dir == 0) tc = c + 1;
    if (dir == 1) tc = c - 1;
    if (dir == 2) tr = r - 1;
    if (dir == 3) tr = r + 1;

    ex.image.at(r, c) = {true, anchor_shape,
                         rng.uniform_int(0, static_cast<int>(cfg.num_colors))};
    const int answer_color = rng.uniform_int(0, static_cast<int>(cfg.num_colors));
    ex.image.at(tr, tc) = {true, pick_other(rng, static_cast<int>(cfg.num_shapes), anchor_shape),
                           answer_color};
    scatter_distractors(ex.image, rng, cfg, 0.4, anchor_shape);

    ex.question_ids = w.ids({"what", "color", "is", "the", "object"});
    if (dir == 0) for (int id : w.ids({"right", "of"})) ex.question_ids.push_back(id);
    if (dir == 1) for (int id : w.ids({"left", "of"})) ex.question_ids.push_back(id);
    if (dir == 2) ex.question_ids.push_back(vocab.id("above"));
    if (dir == 3) ex.question_ids.push_back(vocab.id("below"));
    ex.question_ids.push_back(vocab.id("the"));
    ex.question_ids.push_back(vocab.id(kShapes[anchor_shape]));
    ex.answer_ids = {vocab.id(kColors[answer_color])};
    ex.answer_class = answer_color;
    return ex;
}

QAExample make_entailment(RandomSource& rng, const TaskConfig& cfg, const Vocab& vocab,
                          std::size_t idx) {
    Words w{vocab};
    QAExample ex;
    ex.kind = TaskKind::Entailment3Way;
    ex.image = SyntheticImage(cfg.grid_h, cfg.grid_w);
    const int label = static_cast<int>(idx % 3);  // round-robin keeps classes balanced
    const int shape = rng.uniform_int(0, static_cast<int>(cfg.num_shapes));
    const int color = rng.uniform_int(0, static_cast<int>(cfg.num_colors));
    if (label != 1) {  // entails or contradicts: the shape appears exactly once
        const std::size_t at =
            static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(cfg.cells())));
        const int actual =
            label == 0 ? color : pick_other(rng, static_cast<int>(cfg.num_colors), color);
        ex.image.cells[at] = {true, shape, actual};
    }
    scatter_distractors(ex.image, rng, cfg, label == 1 ? 0.5 : 0.4, shape);
    ex.question_ids = w.ids({"the", kShapes[shape], "is", kColors[color]});
    ex.answer_ids = {vocab.id(kLabels[static_cast<std::size_t>(label)])};
    ex.answer_class = label;
    return ex;
}

QAExample make_counting(RandomSource& rng, const TaskConfig& cfg, const Vocab& vocab,
                        std::size_t idx) {
    Words w{vocab};
    QAExample ex;
    ex.kind = TaskKind::Counting;
    ex.image = SyntheticImage(cfg.grid_h, cfg.grid_w);
    const std::size_t k = idx % (cfg.max_count + 1);  // round-robin over counts
    const int shape = rng.uniform_int(0, static_cast<int>(cfg.num_shapes));
    std::vector<std::size_t> slots(cfg.cells());
    for (std::size_t i = 0; i < slots.size(); ++i) slots[i] = i;
    for (std::size_t i = slots.size(); i > 1; --i)
        std::swap(slots[i - 1],
                  slots[static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(i)))]);
    for (std::size_t i = 0; i < k; ++i)
        ex.image.cells[slots[i]] = {true, shape,
                                    rng.uniform_int(0, static_cast<int>(cfg.num_colors))};
    scatter_distractors(ex.image, rng, cfg, 0.3, shape);
    ex.question_ids = w.ids({"how", "many", kShapes[shape]});
    ex.answer_ids = {vocab.id(kCounts[k])};
    ex.answer_class = static_cast<int>(k);
    return ex;
}

}  // namespace

Dataset generate_dataset(std::uint64_t seed, std::size_t size, const TaskConfig& config) {
    config.validate();
    if (size == 0) throw ConfigError("dataset size must be at least 1");
    const Vocab vocab = Vocab::build(config);
    Dataset ds;
    ds.config = config;
    ds.seed = seed;
    ds.examples.reserve(size);
    RandomSource root(seed);
    for (std::size_t i = 0; i < size; ++i) {
        RandomSource rng = root.fork(i);
        QAExample ex;
        switch (config.kind) {
            case TaskKind::Attribute: ex = make_attribute(rng, config, vocab); break;
            case TaskKind::SpatialRelation: ex = make_spatial(rng, config, vocab); break;
            case TaskKind::Entailment3Way: ex = make_entailment(rng, config, vocab, i); break;
            case TaskKind::Counting: ex = make_counting(rng, config, vocab, i); break;
        }
        ex.feature_seed = rng.next_u64();
        ds.examples.push_back(std::move(ex));
    }
    return ds;
}

std::vector<int> derive_answer(const Vocab& vocab, const TaskConfig& config,
                               const SyntheticImage& image,
                               const std::vector<int>& question_ids) {
    std::vector<std::string> w;
    for (int id : question_ids) w.push_back(vocab.word(id));
    if (w.empty()) throw ConfigError("empty question");

    const auto shape_index = [&](const std::string& word) {
        for (std::size_t s = 0; s < config.num_shapes; ++s)
            if (kShapes[s] == word) return static_cast<int>(s);
        throw ConfigError("not a shape word: " + word);
    };
    const auto color_index = [&](const std::string& word) {
        for (std::size_t c = 0; c < config.num_colors; ++c)
            if (kColors[c] == word) return static_cast<int>(c);
        throw ConfigError("not a color word: " + word);
    };
    const auto unique_cell_with_shape = [&](int shape) {
        const Cell* found = nullptr;
        std::size_t where = 0;
        for (std::size_t i = 0; i < image.cells.size(); ++i) {
            if (image.cells[i].occupied && image.cells[i].shape == shape) {
                if (found) throw ConfigError("referent shape is not unique");
                found = &image.cells[i];
                where = i;
            }
        }
        if (!found) throw ConfigError("referent shape not present");
        return where;
    };

    if (w[0] == "what" && w[1] == "color" && w.size() == 5) {
        const std::size_t at = unique_cell_with_shape(shape_index(w[4]));
        return {vocab.id(kColors[static_cast<std::size_t>(image.cells[at].color)])};
    }
    if (w[0] == "what" && w[1] == "shape") {
        const int color = color_index(w[4]);
        const Cell* found = nullptr;
        for (const auto& cell : image.cells) {
            if (cell.occupied && cell.color == color) {
                if (found) throw ConfigError("referent color is not unique");
                found = &cell;
            }
        }
        if (!found) throw ConfigError("referent color not present");
        return {vocab.id(kShapes[static_cast<std::size_t>(found->shape)])};
    }
    if (w[0] == "what" && w[1] == "color" && w[4] == "object") {
        std::size_t at = 5;
        long dr = 0, dc = 0;
        if (w[at] == "right") { dc = 1; at += 2; }
        else if (w[at] == "left") { dc = -1; at += 2; }
        else if (w[at] == "above") { dr = -1; at += 1; }
        else if (w[at] == "below") { dr = 1; at += 1; }
        else throw ConfigError("unknown relation word: " + w[at]);
        const std::size_t anchor = unique_cell_with_shape(shape_index(w[at + 1]));
        const long r = static_cast<long>(anchor / image.w) + dr;
        const long c = static_cast<long>(anchor % image.w) + dc;
        if (r < 0 || c < 0 || r >= static_cast<long>(image.h) || c >= static_cast<long>(image.w))
            throw ConfigError("relation points off the grid");
        const Cell& target = image.at(static_cast<std::size_t>(r), static_cast<std::size_t>(c));
        if (!target.occupied) throw ConfigError("no object at the related cell");
        return {vocab.id(kColors[static_cast<std::size_t>(target.color)])};
    }
    if (w[0] == "the" && w.size() == 4) {
        const int shape = shape_index(w[1]);
        const int claimed = color_index(w[3]);
        const Cell* found = nullptr;
        for (const auto& cell : image.cells) {
            if (cell.occupied && cell.shape == shape) {
                if (found) throw ConfigError("referent shape is not unique");
                found = &cell;
            }
        }
        if (!found) return {vocab.id("neutral")};
        return {vocab.id(found->color == claimed ? "entails" : "contradicts")};
    }
    if (w[0] == "how" && w[1] == "many") {
        const int shape = shape_index(w[2]);
        std::size_t k = 0;
        for (const auto& cell : image.cells)
            if (cell.occupied && cell.shape == shape) ++k;
        if (k >= kCounts.size()) throw ConfigError("count exceeds the count vocabulary");
        return {vocab.id(kCounts[k])};
    }
    throw ConfigError("unrecognized question form");
}

int exact_match(const std::vector<int>& predicted, const std::vector<int>& gold, int eos_id) {
    const auto truncate = [eos_id](const std::vector<int>& ids) {
        std::vector<int> out;
        for (int id : ids) {
            if (id == eos_id) break;
            out.push_back(id);
        }
        return out;
    };
    return truncate(predicted) == truncate(gold) ? 1 : 0;
}

double vqa_accuracy(const std::string& predicted, const std::vector<std::string>& gold_answers) {
    if (gold_answers.size() != 10)
        throw ConfigError("vqa accuracy needs exactly 10 reference answers, got " +
                          std::to_string(gold_answers.size()));
    std::size_t matches = 0;
    for (const auto& gold : gold_answers)
        if (gold == predicted) ++matches;
    return std::min(static_cast<double>(matches) / 3.0, 1.0);
}

EvalResult evaluate(Model<float>& model, const Dataset& dataset, const EvalOptions& opts) {
    if (dataset.examples.empty()) throw ConfigError("evaluate needs a nonempty dataset");
    const Vocab vocab = Vocab::build(dataset.config);
    EvalResult result;
    for (const QAExample& ex : dataset.examples) {
        Tensor<float> feats = ex.features(dataset.config);
        if (opts.zero_vision)
            for (auto& v : feats.values) v = 0.0f;
        double em = 0.0, soft = 0.0;
        if (model.spec.head == HeadKind::Decoder) {
            std::vector<int> pred =
                model.generate(feats, ex.question_ids, model.spec.max_answer_len);
            em = exact_match(pred, ex.answer_ids, model.spec.eos_id);
            // single-answer synthetic data: the ten references coincide
            soft = vqa_accuracy(vocab.decode(pred),
                                std::vector<std::string>(10, vocab.decode(ex.answer_ids)));
        } else {
            if (ex.answer_class < 0) throw ConfigError("example carries no class label");
            Tape<float> t;
            const Tensor<float>& logits = t.value(model.forward_classify(t, feats, ex.question_ids));
            std::size_t best = 0;
            for (std::size_t j = 1; j < logits.cols(); ++j)
                if (logits.at(0, j) > logits.at(0, best)) best = j;
            em = best == static_cast<std::size_t>(ex.answer_class) ? 1.0 : 0.0;
            soft = em;
        }
        result.exact_match_accuracy += em;
        result.vqa_soft_accuracy += soft;
        auto& slice = result.per_task[task_kind_name(ex.kind)];
        slice.count += 1;
        slice.exact_match_accuracy += em;
        slice.vqa_soft_accuracy += soft;
    }
    const double n = static_cast<double>(dataset.examples.size());
    result.exact_match_accuracy /= n;
    result.vqa_soft_accuracy /= n;
    for (auto& [name, slice] : result.per_task) {
        slice.exact_match_accuracy /= static_cast<double>(slice.count);
        slice.vqa_soft_accuracy /= static_cast<double>(slice.count);
    }
    return result;
}

namespace {

nlohmann::json cell_json(const Cell& cell) {
    if (!cell.occupied) return nullptr;
    return nlohmann::json::array({cell.shape, cell.color});
}

}  // namespace

void save_dataset(const std::string& path, const Dataset& dataset) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot open dataset for writing: " + path);
    nlohmann::json header = {{"format", "fusionlab-dataset"},
                             {"version", 1},
                             {"task", task_kind_name(dataset.config.kind)},
                             {"seed", dataset.seed},
                             {"size", dataset.examples.size()},
                             {"grid_h", dataset.config.grid_h},
                             {"grid_w", dataset.config.grid_w},
                             {"num_shapes", dataset.config.num_shapes},
                             {"num_colors", dataset.config.num_colors},
                             {"feature_noise", dataset.config.feature_noise},
                             {"max_count", dataset.config.max_count}};
    out << header.dump() << '\n';
    for (const QAExample& ex : dataset.examples) {
        nlohmann::json cells = nlohmann::json::array();
        for (const Cell& cell : ex.image.cells) cells.push_back(cell_json(cell));
        nlohmann::json line = {{"cells", cells},
                               {"question", ex.question_ids},
                               {"answer", ex.answer_ids},
                               {"class", ex.answer_class},
                               {"feature_seed", ex.feature_seed}};
        out << line.dump() << '\n';
    }
    if (!out) throw IoError("failed writing dataset: " + path);
}

Dataset load_dataset(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open dataset: " + path);
    std::string line;
    if (!std::getline(in, line)) throw IoError("dataset is empty: " + path);
    nlohmann::json header;
    try {
        header = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
        throw IoError(std::string("bad dataset header: ") + e.what());
    }
    if (header.value("format", "") != "fusionlab-dataset")
        throw IoError("not a dataset file: " + path);
    if (header.at("version").get<int>() != 1)
        throw IoError("unsupported dataset version " + header.at("version").dump());

    Dataset ds;
    ds.seed = header.at("seed").get<std::uint64_t>();
    ds.config.kind = task_kind_from_name(header.at("task").get<std::string>());
    ds.config.grid_h = header.at("grid_h").get<std::size_t>();
    ds.config.grid_w = header.at("grid_w").get<std::size_t>();
    ds.config.num_shapes = header.at("num_shapes").get<std::size_t>();
    ds.config.num_colors = header.at("num_colors").get<std::size_t>();
    ds.config.feature_noise = header.at("feature_noise").get<double>();
    ds.config.max_count = header.at("max_count").get<std::size_t>();
    ds.config.validate();

    const std::size_t size = header.at("size").get<std::size_t>();
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        nlohmann::json rec;
        try {
            rec = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw IoError(std::string("bad dataset record: ") + e.what());
        }
        QAExample ex;
        ex.kind = ds.config.kind;
        ex.image = SyntheticImage(ds.config.grid_h, ds.config.grid_w);
        const auto& cells = rec.at("cells");
        if (cells.size() != ex.image.cells.size())
            throw IoError("dataset record does not match the header grid");
        for (std::size_t i = 0; i < ex.image.cells.size(); ++i) {
            if (cells[i].is_null()) continue;
            ex.image.cells[i] = {true, cells[i][0].get<int>(), cells[i][1].get<int>()};
        }
        ex.question_ids = rec.at("question").get<std::vector<int>>();
        ex.answer_ids = rec.at("answer").get<std::vector<int>>();
        ex.answer_class = rec.at("class").get<int>();
        ex.feature_seed = rec.at("feature_seed").get<std::uint64_t>();
        ds.examples.push_back(std::move(ex));
    }
    if (ds.examples.size() != size)
        throw IoError("dataset record count does not match the header");
    return ds;
}

std::uint64_t dataset_fingerprint(const Dataset& dataset) {
    std::string buf;
    const auto put = [&buf](long long v) {
        buf += std::to_string(v);
        buf += '|';
    };
    put(static_cast<long long>(dataset.seed));
    put(static_cast<long long>(dataset.config.kind));
    put(static_cast<long long>(dataset.config.grid_h));
    put(static_cast<long long>(dataset.config.grid_w));
    put(static_cast<long long>(dataset.config.num_shapes));
    put(static_cast<long long>(dataset.config.num_colors));
    buf += std::to_string(dataset.config.feature_noise);
    buf += '|';
    put(static_cast<long long>(dataset.config.max_count));
    for (const QAExample& ex : dataset.examples) {
        for (const Cell& cell : ex.image.cells) {
            put(cell.occupied ? 1 : 0);
            put(cell.shape);
            put(cell.color);
        }
        for (int id : ex.question_ids) put(id);
        buf += '/';
        for (int id : ex.answer_ids) put(id);
        put(ex.answer_class);
        put(static_cast<long long>(ex.feature_seed));
    }
    return fnv1a64(buf.data(), buf.size());
}

}  // namespace fusionlab
