#include <CLI11.hpp>

#include <algorithm>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "celd/config.hpp"
#include "celd/datahub.hpp"
#include "celd/evaluator.hpp"
#include "celd/nnmodel.hpp"
#include "celd/perturb.hpp"
#include "celd/synthgen.hpp"
#include "celd/trainer.hpp"

namespace fs = std::filesystem;
using namespace celd;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitMissingPrereq = 3;
constexpr int kExitRuntime = 4;

struct CliError {
    int code;
    std::string message;
};

struct Ctx {
    config::ExperimentConfig cfg;
    fs::path out;
    bool force = false;
    bool deterministic = false;  // execution is always serial; flag kept for interface stability
    std::optional<std::string> perturb_arg;
};

void require_absent(const fs::path& p, bool force) {
    if (!force && fs::exists(p))
        throw CliError{kExitRuntime, "refusing to overwrite " + p.string() + " (use --force)"};
}

void require_present(const fs::path& p, const std::string& producer) {
    if (!fs::exists(p))
        throw CliError{kExitMissingPrereq,
                       "missing " + p.string() + ": run `celd " + producer + "` first"};
}

fs::path data_dir(const Ctx& c) { return c.out / "data"; }
fs::path ckpt_dir(const Ctx& c) { return c.out / "checkpoints"; }
fs::path reports_dir(const Ctx& c) { return c.out / "reports"; }
fs::path logs_dir(const Ctx& c) { return c.out / "logs"; }

void cmd_synth(const Ctx& c) {
    if (!c.cfg.synth)
        throw CliError{kExitConfig, "config has no data.synth section; nothing to synthesize"};
    require_absent(data_dir(c) / "manifest.csv", c.force);
    fs::create_directories(data_dir(c));
    auto ds = synthgen::generate(*c.cfg.synth, data_dir(c));
    std::cout << "synth: wrote " << ds.records.size() << " images under "
              << (data_dir(c) / "images").string() << "\n";
}

void cmd_pool(const Ctx& c) {
    require_absent(data_dir(c) / "pooled.csv", c.force);
    std::vector<datahub::PooledDataset> parts;
    if (c.cfg.synth) {
        require_present(data_dir(c) / "manifest.csv", "synth");
        parts.push_back(datahub::load_manifest(data_dir(c) / "manifest.csv"));
    }
    for (const auto& m : c.cfg.manifests) {
        if (!fs::exists(m))
            throw CliError{kExitConfig, "manifest listed in config not found: " + m.string()};
        parts.push_back(datahub::load_manifest(m));
    }
    auto pooled = datahub::pool(parts);
    fs::create_directories(data_dir(c));
    datahub::save_manifest(pooled, data_dir(c) / "pooled.csv");
    std::cout << "pool: " << pooled.records.size() << " records from " << parts.size()
              << " dataset(s)\n";
}

void cmd_split(const Ctx& c) {
    require_present(data_dir(c) / "pooled.csv", "pool");
    require_absent(data_dir(c) / "split_target.json", c.force);
    auto pooled = datahub::load_manifest(data_dir(c) / "pooled.csv");
    auto split = datahub::stratified_split(pooled, c.cfg.ratios, c.cfg.split_seed);
    datahub::save_split(split, data_dir(c) / "split_target.json");
    auto source = datahub::restrict_to_source(split, LabelSpace::source());
    datahub::save_split(source, data_dir(c) / "split_source.json");
    std::cout << "split: train/val/test = " << split.train.size() << "/" << split.val.size() << "/"
              << split.test.size() << "\n";
}

void cmd_train_source(const Ctx& c) {
    require_present(data_dir(c) / "split_source.json", "split");
    require_absent(ckpt_dir(c) / "source.ckpt", c.force);
    auto split = datahub::load_split(data_dir(c) / "split_source.json");
    nnmodel::ClassifierConfig arch = c.cfg.model;
    arch.num_classes = static_cast<int>(LabelSpace::source().size());
    nnmodel::Classifier model(arch, LabelSpace::source());
    auto result = trainer::train(std::move(model), split.train, split.val, c.cfg.train_source);
    fs::create_directories(ckpt_dir(c));
    fs::create_directories(logs_dir(c));
    nnmodel::save_checkpoint(result.checkpoint, ckpt_dir(c) / "source.ckpt");
    trainer::save_history_csv(result.history, logs_dir(c) / "history_source.csv");
    std::cout << "train-source: best epoch " << result.history.best_epoch << ", best val loss "
              << result.checkpoint.meta.best_val_loss << "\n";
}

void cmd_extend(const Ctx& c) {
    require_present(ckpt_dir(c) / "source.ckpt", "train-source");
    require_present(data_dir(c) / "split_target.json", "split");
    require_absent(ckpt_dir(c) / "target.ckpt", c.force);
    auto src = nnmodel::load_checkpoint(ckpt_dir(c) / "source.ckpt");
    auto split = datahub::load_split(data_dir(c) / "split_target.json");
    auto model = nnmodel::extend_head(src, LabelSpace::target(), c.cfg.train_target.seed);

    const std::vector<ImageRecord> stage2_train = trainer::subsample_source_classes(
        split.train, LabelSpace::source(), c.cfg.train_target.source_subsample,
        c.cfg.train_target.seed);
    auto result = trainer::train(std::move(model), stage2_train, split.val, c.cfg.train_target);
    fs::create_directories(ckpt_dir(c));
    fs::create_directories(logs_dir(c));
    nnmodel::save_checkpoint(result.checkpoint, ckpt_dir(c) / "target.ckpt");
    trainer::save_history_csv(result.history, logs_dir(c) / "history_target.csv");
    std::cout << "extend: best epoch " << result.history.best_epoch << ", best val loss "
              << result.checkpoint.meta.best_val_loss << "\n";
}

std::vector<perturb::PerturbationSpec> eval_specs(const Ctx& c) {
    std::vector<perturb::PerturbationSpec> specs;
    if (c.perturb_arg) {
        try {
            specs.push_back(perturb::parse_spec(*c.perturb_arg));
        } catch (const std::invalid_argument& e) {
            throw CliError{kExitConfig, std::string("bad --perturb: ") + e.what()};
        }
        return specs;
    }
    specs.push_back(perturb::PerturbationSpec{});  // NONE first
    for (const auto& p : c.cfg.perturbations) specs.push_back(p);
    return specs;
}

void cmd_eval(const Ctx& c) {
    require_present(ckpt_dir(c) / "target.ckpt", "extend");
    require_present(data_dir(c) / "split_target.json", "split");
    auto ckpt = nnmodel::load_checkpoint(ckpt_dir(c) / "target.ckpt");
    auto model = nnmodel::restore(ckpt);
    auto split = datahub::load_split(data_dir(c) / "split_target.json");
    fs::create_directories(reports_dir(c));
    for (const auto& spec : eval_specs(c)) {
        const fs::path file = reports_dir(c) / ("eval_" + perturb::kind_name(spec.kind) + ".json");
        require_absent(file, c.force);
        auto report = evaluator::evaluate(evaluator::make_predictor(model), split.test, spec,
                                          c.cfg.image_side, model.labelspace());
        evaluator::save_report_json(report, file);
        std::cout << "eval " << perturb::kind_name(spec.kind) << ": accuracy " << report.accuracy
                  << "\n";
    }
}

void cmd_report(const Ctx& c) {
    static const char* kOrder[] = {"NONE", "RG", "RGR", "RC", "GN", "ES", "ODC"};
    std::vector<evaluator::EvalReport> reports;
    for (const char* kind : kOrder) {
        const fs::path file = reports_dir(c) / (std::string("eval_") + kind + ".json");
        if (fs::exists(file)) reports.push_back(evaluator::load_report_json(file));
    }
    if (reports.empty())
        throw CliError{kExitMissingPrereq,
                       "no evaluation reports under " + reports_dir(c).string() +
                           ": run `celd eval` first"};
    require_absent(reports_dir(c) / "metrics.csv", c.force);
    auto files = evaluator::comparison_report(reports, reports_dir(c));
    std::cout << "report: wrote " << files.size() << " file(s) under " << reports_dir(c).string()
              << "\n";
}

void cmd_run_all(const Ctx& c) {
    if (c.cfg.synth) cmd_synth(c);
    cmd_pool(c);
    cmd_split(c);
    cmd_train_source(c);
    cmd_extend(c);
    cmd_eval(c);
    cmd_report(c);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"CELD: incremental class-extension training and perturbation analysis for "
                 "fundus image classifiers"};
    app.require_subcommand(1);
    app.fallthrough();  // global options may follow the subcommand

    std::string config_path;
    std::string out_dir = "run";
    std::optional<std::uint64_t> seed;
    std::optional<std::string> perturb_arg;
    bool force = false, deterministic = false;

    app.add_option("--config", config_path, "experiment config (JSON)")->required();
    app.add_option("--out", out_dir, "run directory for artifacts");
    app.add_option("--seed", seed, "master seed overriding the per-stage seeds in the config");
    app.add_flag("--force", force, "overwrite existing artifacts");
    app.add_flag("--deterministic", deterministic, "force serial batch order (always on here)");

    auto* synth = app.add_subcommand("synth", "generate the synthetic corpus");
    auto* pool = app.add_subcommand("pool", "pool source manifests into one corpus");
    auto* split = app.add_subcommand("split", "stratified train/val/test split");
    auto* train_source = app.add_subcommand("train-source", "stage 1: train the two-class model");
    auto* extend = app.add_subcommand("extend", "stage 2: transplant weights and fine-tune");
    auto* eval = app.add_subcommand("eval", "evaluate the target model on the test partition");
    eval->add_option("--perturb", perturb_arg, "KIND[:param=value,...] (default: NONE + config list)");
    auto* report = app.add_subcommand("report", "metrics.csv + confusion panels + bar chart");
    auto* run_all = app.add_subcommand("run-all", "all stages in order");

    CLI11_PARSE(app, argc, argv);

    Ctx ctx;
    ctx.out = out_dir;
    ctx.force = force;
    ctx.deterministic = deterministic;
    ctx.perturb_arg = perturb_arg;
    try {
        ctx.cfg = config::load_experiment(config_path);
        if (seed) config::override_seeds(ctx.cfg, *seed);
    } catch (const std::exception& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    }

    try {
        if (synth->parsed()) cmd_synth(ctx);
        else if (pool->parsed()) cmd_pool(ctx);
        else if (split->parsed()) cmd_split(ctx);
        else if (train_source->parsed()) cmd_train_source(ctx);
        else if (extend->parsed()) cmd_extend(ctx);
        else if (eval->parsed()) cmd_eval(ctx);
        else if (report->parsed()) cmd_report(ctx);
        else if (run_all->parsed()) cmd_run_all(ctx);
        return kExitOk;
    } catch (const CliError& e) {
        std::cerr << "error: " << e.message << "\n";
        return e.code;
    } catch (const std::invalid_argument& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitRuntime;
    }
}
