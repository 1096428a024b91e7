// Command line front end: scene synthesis, training, evaluation, inference,
// ablation and K sweeps, and finite-difference gradient checks.
#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "mcnet/errors.hpp"
#include "mcnet/gradcheck_suite.hpp"
#include "mcnet/harness.hpp"
#include "mcnet/runtime.hpp"

using namespace mcnet;

namespace {

nlohmann::json read_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot read " + path);
    try {
        return nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(path + ": " + e.what());
    }
}

void write_json(const std::string& path, const nlohmann::json& j) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path);
    out << j.dump(2) << '\n';
    if (!out) throw IoError("failed writing " + path);
}

EpochCallback progress(std::size_t every) {
    return [every](std::size_t epoch, double loss) {
        if (every > 0 && epoch % every == 0) std::fprintf(stderr, "epoch %zu loss %.6f\n", epoch, loss);
    };
}

std::vector<std::size_t> parse_ks(const std::string& text) {
    std::vector<std::size_t> ks;
    std::size_t start = 0;
    while (start <= text.size()) {
        const std::size_t end = std::min(text.find(',', start), text.size());
        const std::string item = text.substr(start, end - start);
        try {
            std::size_t used = 0;
            const long v = std::stol(item, &used);
            if (used != item.size() || v <= 0) throw std::invalid_argument(item);
            ks.push_back(static_cast<std::size_t>(v));
        } catch (const std::logic_error&) {
            throw ConfigError("--ks expects comma-separated positive integers, got '" + item + "'");
        }
        start = end + 1;
    }
    return ks;
}

}  // namespace

int main(int argc, char** argv) {
    tune_allocator();
    CLI::App app{"Point cloud semantic segmentation: train, evaluate and ablate"};
    app.require_subcommand(1);

    std::string spec_path, preset, out_path, config_path, data_path, ckpt_path, report_path, eval_path;
    std::string ks_text = "9,16,25,36", module;
    std::size_t log_every = 25, seeds = 10;

    auto* synth = app.add_subcommand("synth", "Generate a labeled synthetic scene as PLY");
    auto* spec_opt = synth->add_option("--spec", spec_path, "Scene spec JSON")->check(CLI::ExistingFile);
    synth->add_option("--preset", preset, "Built-in scene instead of --spec")
        ->check(CLI::IsMember({"benchmark", "imbalanced"}))
        ->excludes(spec_opt);
    synth->add_option("--out", out_path, "Output PLY")->required();

    auto* train_cmd = app.add_subcommand("train", "Train a model and write a checkpoint");
    train_cmd->add_option("--config", config_path, "Model config JSON")->required()->check(CLI::ExistingFile);
    train_cmd->add_option("--data", data_path, "Labeled PLY")->required()->check(CLI::ExistingFile);
    train_cmd->add_option("--out", ckpt_path, "Checkpoint JSON")->required();
    train_cmd->add_option("--report", report_path, "Run report JSON (loss curve and training-scene metrics)");
    train_cmd->add_option("--log-every", log_every, "Print the loss every N epochs (0 = quiet)");

    auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint on a labeled scene");
    eval_cmd->add_option("--ckpt", ckpt_path, "Checkpoint JSON")->required()->check(CLI::ExistingFile);
    eval_cmd->add_option("--data", data_path, "Labeled PLY")->required()->check(CLI::ExistingFile);
    eval_cmd->add_option("--report", report_path, "Metrics report JSON")->required();

    auto* infer_cmd = app.add_subcommand("infer", "Label a scene and write it as PLY with a pred property");
    infer_cmd->add_option("--ckpt", ckpt_path, "Checkpoint JSON")->required()->check(CLI::ExistingFile);
    infer_cmd->add_option("--data", data_path, "Input PLY")->required()->check(CLI::ExistingFile);
    infer_cmd->add_option("--out", out_path, "Output PLY")->required();

    auto* ablate_cmd = app.add_subcommand("ablate", "Train and evaluate ablation models A-E");
    ablate_cmd->add_option("--config", config_path, "Base config JSON")->required()->check(CLI::ExistingFile);
    ablate_cmd->add_option("--data", data_path, "Labeled training PLY")->required()->check(CLI::ExistingFile);
    ablate_cmd->add_option("--eval-data", eval_path, "Labeled evaluation PLY (default: training data)")
        ->check(CLI::ExistingFile);
    ablate_cmd->add_option("--out", out_path, "Table JSON")->required();

    auto* ksweep_cmd = app.add_subcommand("ksweep", "Train and evaluate one model per neighborhood size");
    ksweep_cmd->add_option("--config", config_path, "Base config JSON")->required()->check(CLI::ExistingFile);
    ksweep_cmd->add_option("--data", data_path, "Labeled training PLY")->required()->check(CLI::ExistingFile);
    ksweep_cmd->add_option("--eval-data", eval_path, "Labeled evaluation PLY (default: training data)")
        ->check(CLI::ExistingFile);
    ksweep_cmd->add_option("--ks", ks_text, "Comma-separated K values")->capture_default_str();
    ksweep_cmd->add_option("--out", out_path, "Table JSON")->required();

    auto* grad_cmd = app.add_subcommand("gradcheck", "Finite-difference gradient checks");
    grad_cmd->add_option("--module", module, "Restrict to one module")
        ->check(CLI::IsMember(gradcheck_modules()));
    grad_cmd->add_option("--seeds", seeds, "Random draws per check")->capture_default_str();

    CLI11_PARSE(app, argc, argv);

    try {
        if (*synth) {
            if (spec_path.empty() && preset.empty()) throw ConfigError("synth needs --spec or --preset");
            const SceneSpec spec = !spec_path.empty()      ? SceneSpec::from_json(read_json(spec_path))
                                   : preset == "benchmark" ? benchmark_scene_spec()
                                                           : imbalanced_scene_spec();
            const PointCloud cloud = synth_scene(spec);
            save_ply(cloud, out_path);
            std::fprintf(stderr, "wrote %zu points in %zu classes to %s\n", cloud.size(), cloud.num_classes,
                         out_path.c_str());
        } else if (*train_cmd) {
            const ModelConfig cfg = ModelConfig::from_json(read_json(config_path));
            const PointCloud data = load_ply(data_path);
            Model model = build_model(cfg);
            std::fprintf(stderr, "config %s, %zu trainable parameters\n", cfg.hash().c_str(), model.parameter_count());
            RunReport report = train(model, data, progress(log_every));
            save_checkpoint(model, ckpt_path);
            if (!report_path.empty()) {
                report.metrics = evaluate(model, data).report;
                write_json(report_path, report.to_json());
            }
            std::fprintf(stderr, "trained %zu epochs in %.1f s, final loss %.6f\n", report.epoch_loss.size(),
                         report.wall_clock_seconds, report.epoch_loss.empty() ? 0.0 : report.epoch_loss.back());
        } else if (*eval_cmd) {
            Model model = load_checkpoint(ckpt_path);
            const Evaluation e = evaluate(model, load_ply(data_path));
            write_json(report_path, e.report.to_json());
            std::printf("OA %.4f  mIoU %.4f\n", e.report.oa, e.report.miou);
        } else if (*infer_cmd) {
            Model model = load_checkpoint(ckpt_path);
            const PointCloud cloud = load_ply(data_path);
            const std::vector<int> pred = predict(model, cloud);
            save_ply(cloud, out_path, pred);
        } else if (*ablate_cmd) {
            const ModelConfig cfg = ModelConfig::from_json(read_json(config_path));
            const PointCloud data = load_ply(data_path);
            const PointCloud eval_data = eval_path.empty() ? PointCloud{} : load_ply(eval_path);
            const auto rows = ablate(data, cfg, eval_path.empty() ? nullptr : &eval_data, [](const AblationRow& r) {
                std::fprintf(stderr, "model %s: OA %.4f mIoU %.4f (%.1f s)\n", r.model.c_str(), r.report.metrics->oa,
                             r.report.metrics->miou, r.report.wall_clock_seconds);
            });
            write_json(out_path, ablation_table_json(rows));
        } else if (*ksweep_cmd) {
            const ModelConfig cfg = ModelConfig::from_json(read_json(config_path));
            const PointCloud data = load_ply(data_path);
            const PointCloud eval_data = eval_path.empty() ? PointCloud{} : load_ply(eval_path);
            const auto rows = ksweep(data, cfg, parse_ks(ks_text), eval_path.empty() ? nullptr : &eval_data,
                                     [](const KSweepRow& r) {
                std::fprintf(stderr, "K=%zu: OA %.4f mIoU %.4f (%.1f s)\n", r.k, r.report.metrics->oa,
                             r.report.metrics->miou, r.report.wall_clock_seconds);
            });
            write_json(out_path, ksweep_table_json(rows));
        } else if (*grad_cmd) {
            bool ok = true;
            for (const auto& c : run_gradcheck_suite(module, seeds)) {
                std::printf("%-4s %-13s %-28s seeds=%-3zu entries=%-5zu max_rel=%.3e (tol %.0e)\n",
                            c.passed() ? "ok" : "FAIL", c.module.c_str(), c.name.c_str(), c.seeds, c.entries,
                            c.max_rel_error, c.tolerance);
                ok = ok && c.passed();
            }
            return ok ? 0 : 1;
        }
    } catch (const Error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "unexpected error: %s\n", e.what());
        return 3;
    }
    return 0;
}
