#include "celd/config.hpp"

#include <json.hpp>

#include <fstream>

namespace celd::config {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

trainer::TrainConfig train_from_json(const json& j) {
    trainer::TrainConfig c;
    if (j.contains("learning_rate")) c.learning_rate = j.at("learning_rate").get<double>();
    if (j.contains("batch_size")) c.batch_size = j.at("batch_size").get<int>();
    if (j.contains("max_epochs")) c.max_epochs = j.at("max_epochs").get<int>();
    if (j.contains("early_stop_patience"))
        c.early_stop_patience = j.at("early_stop_patience").get<int>();
    if (j.contains("weight_decay")) c.weight_decay = j.at("weight_decay").get<double>();
    if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("class_weights"))
        c.class_weights = j.at("class_weights").get<std::vector<double>>();
    if (j.contains("source_subsample")) c.source_subsample = j.at("source_subsample").get<double>();
    trainer::validate(c);
    return c;
}

perturb::PerturbationSpec perturb_from_json(const json& j) {
    perturb::PerturbationSpec spec;
    spec.kind = perturb::kind_from_name(j.at("kind").get<std::string>());
    if (j.contains("params")) spec.params = j.at("params").get<std::map<std::string, double>>();
    if (j.contains("seed")) spec.seed = j.at("seed").get<std::uint64_t>();
    return spec;
}

}  // namespace

ExperimentConfig load_experiment(const fs::path& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("config not found: " + path.string());
    const fs::path base = path.has_parent_path() ? path.parent_path() : fs::path(".");
    json j;
    try {
        f >> j;
    } catch (const json::exception& e) {
        throw std::runtime_error("config " + path.string() + " is not valid JSON: " + e.what());
    }
    try {
        ExperimentConfig cfg;
        const json& data = j.at("data");
        if (data.contains("synth")) {
            const json& s = data.at("synth");
            synthgen::SynthConfig sc;
            if (s.contains("side")) sc.side = s.at("side").get<int>();
            if (s.contains("n_healthy")) sc.n_healthy = s.at("n_healthy").get<int>();
            if (s.contains("n_dr")) sc.n_dr = s.at("n_dr").get<int>();
            if (s.contains("n_glaucoma")) sc.n_glaucoma = s.at("n_glaucoma").get<int>();
            if (s.contains("seed")) sc.seed = s.at("seed").get<std::uint64_t>();
            if (s.contains("mode")) {
                const std::string m = s.at("mode").get<std::string>();
                if (m == "balanced")
                    sc.mode = synthgen::SynthConfig::Mode::Balanced;
                else if (m == "paper_ratio")
                    sc.mode = synthgen::SynthConfig::Mode::PaperRatio;
                else
                    throw std::runtime_error("data.synth.mode must be 'balanced' or 'paper_ratio'");
            }
            cfg.synth = sc;
        }
        if (data.contains("manifests")) {
            for (const auto& m : data.at("manifests")) {
                fs::path p(m.get<std::string>());
                cfg.manifests.push_back(p.is_absolute() ? p : (base / p).lexically_normal());
            }
        }
        if (!cfg.synth && cfg.manifests.empty())
            throw std::runtime_error("data section needs 'synth' and/or 'manifests'");
        if (data.contains("ratios")) {
            const auto& r = data.at("ratios");
            cfg.ratios = {r.at(0).get<double>(), r.at(1).get<double>(), r.at(2).get<double>()};
        }
        if (data.contains("split_seed")) cfg.split_seed = data.at("split_seed").get<std::uint64_t>();
        if (data.contains("image_side")) cfg.image_side = data.at("image_side").get<int>();

        const json& model = j.at("model");
        if (model.contains("input_side")) cfg.model.input_side = model.at("input_side").get<int>();
        else cfg.model.input_side = cfg.image_side;
        if (model.contains("growth_rate")) cfg.model.growth_rate = model.at("growth_rate").get<int>();
        if (model.contains("block_layout"))
            cfg.model.block_layout = model.at("block_layout").get<std::vector<int>>();
        if (model.contains("init_seed")) cfg.model.init_seed = model.at("init_seed").get<std::uint64_t>();
        if (cfg.model.input_side != cfg.image_side)
            throw std::runtime_error("model.input_side must equal data.image_side");

        const json& train = j.at("train");
        cfg.train_source = train_from_json(train.at("source"));
        cfg.train_target = train_from_json(train.at("target"));

        if (j.contains("perturb")) {
            for (const auto& p : j.at("perturb")) cfg.perturbations.push_back(perturb_from_json(p));
        }
        return cfg;
    } catch (const json::exception& e) {
        throw std::runtime_error("config " + path.string() + ": " + e.what());
    }
}

void override_seeds(ExperimentConfig& cfg, std::uint64_t master_seed) {
    if (cfg.synth) cfg.synth->seed = master_seed;
    cfg.split_seed = master_seed + 1;
    cfg.model.init_seed = master_seed + 2;
    cfg.train_source.seed = master_seed + 3;
    cfg.train_target.seed = master_seed + 4;
    for (std::size_t i = 0; i < cfg.perturbations.size(); ++i)
        cfg.perturbations[i].seed = master_seed + 5 + i;
}

}  // namespace celd::config
