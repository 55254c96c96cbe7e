#include <cstdio>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "fusionlab/costmodel.hpp"
#include "fusionlab/harness.hpp"
#include "fusionlab/simd/kernels.hpp"

using namespace fusionlab;

namespace {

struct CommonOpts {
    std::string config_path;
    std::vector<std::string> sets;
    std::string out;
    std::uint64_t seed = 0;
    bool deterministic = false;
};

void add_common(CLI::App* cmd, CommonOpts& c) {
    cmd->add_option("--config", c.config_path, "configuration file of key=value lines");
    cmd->add_option("--set", c.sets, "override one config key, e.g. --set model.dim=48");
    cmd->add_option("--seed", c.seed, "random seed (overrides the config file)");
    cmd->add_option("--out", c.out, "output location (overrides the config file)");
    cmd->add_flag("--deterministic", c.deterministic,
                  "pin the scalar kernel backend for bit-reproducible runs");
}

ExperimentConfig build_config(const CLI::App* cmd, const CommonOpts& c) {
    ExperimentConfig cfg =
        c.config_path.empty() ? ExperimentConfig{} : load_config_file(c.config_path);
    for (const std::string& kv : c.sets) {
        const std::size_t eq = kv.find('=');
        if (eq == std::string::npos)
            throw ConfigError("--set expects key=value, got '" + kv + "'");
        apply_override(cfg, kv.substr(0, eq), kv.substr(eq + 1));
    }
    if (cmd->count("--seed") > 0) cfg.seed = c.seed;
    if (cmd->count("--out") > 0) cfg.out_dir = c.out;
    if (c.deterministic) cfg.deterministic = true;
    return cfg;
}

void apply_backend(const ExperimentConfig& cfg) {
    if (cfg.deterministic)
        simd::select_backend(simd::Backend::Scalar);
    else
        simd::select_best();
}

void print_eval(const EvalResult& ev) {
    std::printf("exact_match %.4f  vqa_soft %.4f\n", ev.exact_match_accuracy,
                ev.vqa_soft_accuracy);
    for (const auto& [name, slice] : ev.per_task)
        std::printf("  %-18s n=%-5zu exact_match %.4f  vqa_soft %.4f\n", name.c_str(),
                    slice.count, slice.exact_match_accuracy, slice.vqa_soft_accuracy);
}

int run_guarded(const std::function<void()>& body) {
    try {
        body();
        return 0;
    } catch (const NumericError& e) {
        std::fprintf(stderr, "numeric error: %s\n", e.what());
        return 2;
    } catch (const IoError& e) {
        std::fprintf(stderr, "i/o error: %s\n", e.what());
        return 3;
    } catch (const Error& e) {  // ConfigError, ShapeError
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 1;
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"desk-scale multimodal fusion laboratory"};
    app.require_subcommand(1);
    CommonOpts common;

    CLI::App* cmd_train = app.add_subcommand("train", "train one model and write metrics");
    add_common(cmd_train, common);
    std::string resume_path;
    cmd_train->add_option("--resume", resume_path,
                          "checkpoint to start from: one with optimizer state continues "
                          "bit-exactly, a weights-only one warm-starts a fresh run");

    CLI::App* cmd_eval = app.add_subcommand("eval", "evaluate a checkpoint");
    add_common(cmd_eval, common);
    std::string ckpt_path;
    std::string data_path;
    cmd_eval->add_option("--checkpoint", ckpt_path, "checkpoint to evaluate")->required();
    cmd_eval->add_option("--data", data_path,
                         "saved dataset file; omitted, a fresh evaluation set is generated");

    CLI::App* cmd_compare = app.add_subcommand(
        "compare", "train several fusion variants under one seed and rank them");
    add_common(cmd_compare, common);
    std::vector<std::string> variant_names{"merged_attention", "compound_tokens",
                                           "compound_tokens_taq"};
    bool text_only_baseline = false;
    cmd_compare->add_option("--variants", variant_names, "fusion variants to train")
        ->delimiter(',');
    cmd_compare->add_flag("--text-only-baseline", text_only_baseline,
                          "add a vision-blanked baseline row");

    CLI::App* cmd_cost = app.add_subcommand("cost", "print the analytic flop and parameter table");
    add_common(cmd_cost, common);

    CLI::App* cmd_gen = app.add_subcommand("gen-data", "generate and save a synthetic dataset");
    add_common(cmd_gen, common);
    std::size_t gen_size = 0;
    cmd_gen->add_option("--size", gen_size, "number of examples (default run.train_size)");

    CLI::App* cmd_plot = app.add_subcommand("plot", "render metrics and comparison files");
    add_common(cmd_plot, common);
    std::vector<std::string> metrics_files;
    std::string comparison_file;
    cmd_plot->add_option("--metrics", metrics_files, "metrics CSV files, one loss curve each");
    cmd_plot->add_option("--comparison", comparison_file,
                         "comparison CSV for the accuracy-versus-flops scatter");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;  // bad usage is a config error
    }

    if (app.got_subcommand(cmd_train)) {
        return run_guarded([&] {
            ExperimentConfig cfg = build_config(cmd_train, common);
            apply_backend(cfg);
            const TrainResult r = train(cfg, resume_path);
            std::printf("ran %zu steps, final loss %.6f\n", r.steps_run,
                        r.records.empty() ? 0.0 : r.records.back().loss);
            print_eval(r.final_eval);
            std::printf("metrics: %s\ncheckpoint: %s\n", r.metrics_path.c_str(),
                        r.checkpoint_path.c_str());
        });
    }
    if (app.got_subcommand(cmd_eval)) {
        return run_guarded([&] {
            ExperimentConfig cfg = build_config(cmd_eval, common);
            apply_backend(cfg);
            Model<float> model = load_checkpoint(ckpt_path);
            const Dataset ds = data_path.empty()
                                   ? generate_dataset(cfg.seed + 1, cfg.eval_size, cfg.task)
                                   : load_dataset(data_path);
            print_eval(evaluate(model, ds, EvalOptions{cfg.zero_vision}));
        });
    }
    if (app.got_subcommand(cmd_compare)) {
        return run_guarded([&] {
            ExperimentConfig cfg = build_config(cmd_compare, common);
            apply_backend(cfg);
            std::vector<FusionSpec> variants;
            for (const std::string& name : variant_names) {
                FusionSpec f = cfg.model.fusion;
                f.variant = fusion_variant_from_name(name);
                variants.push_back(f);
            }
            const ComparisonTable table = compare_fusions(cfg, variants, text_only_baseline);
            std::fputs(table.to_text().c_str(), stdout);
            std::printf("\nwritten to %s/comparison.{csv,txt}\n", cfg.out_dir.c_str());
        });
    }
    if (app.got_subcommand(cmd_cost)) {
        return run_guarded([&] {
            ExperimentConfig cfg = build_config(cmd_cost, common);
            cfg.finalize();
            const cost::CostReport report = cost::count_model(cfg.model);
            std::fputs(report.table().c_str(), stdout);
        });
    }
    if (app.got_subcommand(cmd_gen)) {
        return run_guarded([&] {
            ExperimentConfig cfg = build_config(cmd_gen, common);
            if (cmd_gen->count("--out") == 0)
                throw ConfigError("gen-data needs --out <file> for the dataset");
            const std::size_t size = gen_size > 0 ? gen_size : cfg.train_size;
            const Dataset ds = generate_dataset(cfg.seed, size, cfg.task);
            save_dataset(cfg.out_dir, ds);
            std::printf("wrote %zu examples to %s (fingerprint %016llx)\n", ds.examples.size(),
                        cfg.out_dir.c_str(),
                        static_cast<unsigned long long>(dataset_fingerprint(ds)));
        });
    }
    if (app.got_subcommand(cmd_plot)) {
        return run_guarded([&] {
            ExperimentConfig cfg = build_config(cmd_plot, common);
            if (metrics_files.empty() && comparison_file.empty())
                throw ConfigError("plot needs --metrics and/or --comparison");
            std::filesystem::create_directories(cfg.out_dir);
            if (!metrics_files.empty()) {
                emit_loss_plot(metrics_files, cfg.out_dir + "/loss");
                std::printf("wrote %s/loss.{svg,txt}\n", cfg.out_dir.c_str());
            }
            if (!comparison_file.empty()) {
                emit_scatter_plot(comparison_file, cfg.out_dir + "/accuracy_vs_flops");
                std::printf("wrote %s/accuracy_vs_flops.{svg,txt}\n", cfg.out_dir.c_str());
            }
        });
    }
    return 1;
}
