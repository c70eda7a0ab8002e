#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "celd/nnmodel.hpp"
#include "celd/perturb.hpp"
#include "celd/synthgen.hpp"
#include "celd/trainer.hpp"

namespace celd::config {

/// Whole-experiment description, read from a JSON document with sections
/// data / model / train / perturb.
struct ExperimentConfig {
    // data
    std::optional<synthgen::SynthConfig> synth;
    std::vector<std::filesystem::path> manifests;  // resolved against the config file
    std::array<double, 3> ratios{0.8, 0.1, 0.1};
    std::uint64_t split_seed = 0;
    int image_side = 256;

    // model
    nnmodel::ClassifierConfig model;

    // train (per stage)
    trainer::TrainConfig train_source;
    trainer::TrainConfig train_target;

    // perturbations to evaluate (NONE is always evaluated first)
    std::vector<perturb::PerturbationSpec> perturbations;
};

ExperimentConfig load_experiment(const std::filesystem::path& path);

/// Derives per-stage seeds from one master seed (CLI --seed override).
void override_seeds(ExperimentConfig& cfg, std::uint64_t master_seed);

}  // namespace celd::config
