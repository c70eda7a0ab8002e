#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "celd/datahub.hpp"
#include "celd/types.hpp"

namespace celd::synthgen {

/// Deterministic synthetic fundus-like corpus. Classes differ by exactly the
/// cues the perturbation probes target: DR adds green-channel lesion blobs,
/// Glaucoma enlarges the bright inner cup relative to the disc.
struct SynthConfig {
    int side = 128;
    int n_healthy = 50;
    int n_dr = 50;
    int n_glaucoma = 50;
    std::uint64_t seed = 0;
    enum class Mode { Balanced, PaperRatio } mode = Mode::Balanced;
};

/// Class counts after applying the imbalance mode. In PaperRatio mode
/// n_healthy is the base and DR/Glaucoma are scaled as 2185:727:199.
std::array<int, 3> resolved_counts(const SynthConfig& cfg);

struct Lesion {
    double cx = 0, cy = 0, r = 0, green = 0;
};

/// Everything needed to render one sample; drawn deterministically from
/// (seed, class, index).
struct SampleParams {
    double field_r = 0;
    std::array<double, 3> field_color{};
    double disc_cx = 0, disc_cy = 0, disc_r = 0;
    std::array<double, 3> disc_color{};
    double cup_cx = 0, cup_cy = 0, cup_ratio = 0;
    std::array<double, 3> cup_color{};
    std::vector<Lesion> lesions;  // DR only
    std::uint64_t noise_seed = 0;
};

SampleParams sample_params(const SynthConfig& cfg, const std::string& klass, int index);

/// Renders the sample; with_lesions=false draws the same image minus the
/// lesion pass (the healthy-template counterpart of a DR sample).
ImageTensor render(const SampleParams& p, int side, bool with_lesions = true);

/// Writes PNGs under out_dir/images plus out_dir/manifest.csv (disc centers
/// included) and returns the corresponding pooled dataset.
datahub::PooledDataset generate(const SynthConfig& cfg, const std::filesystem::path& out_dir);

}  // namespace celd::synthgen
