#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>

#include "celd/types.hpp"

namespace celd::perturb {

enum class Kind { NONE, RG, RGR, RC, GN, ES, ODC };

std::string kind_name(Kind k);
Kind kind_from_name(const std::string& name);

/// One perturbation operator plus its parameters. Parameters left unset fall
/// back to defaults; the geometric ones (RGR patch_side, ODC radius, the disc
/// locator blur) are anchored at a 256-pixel side and scale with the image.
struct PerturbationSpec {
    Kind kind = Kind::NONE;
    std::map<std::string, double> params;
    std::uint64_t seed = 0;  // consumed by RGR and GN only

    double param_or(const std::string& name, double fallback) const {
        auto it = params.find(name);
        return it == params.end() ? fallback : it->second;
    }
};

/// Parses "KIND" or "KIND:param=value,param=value[,seed=N]".
PerturbationSpec parse_spec(const std::string& text);
std::string to_string(const PerturbationSpec& spec);

/// Green channel scaled by alpha; red and blue untouched.
ImageTensor reduce_green(const ImageTensor& img, double alpha);

/// Zeroes the green channel inside n_patches random axis-aligned squares
/// (patches may overlap); red and blue untouched.
ImageTensor random_green_removal(const ImageTensor& img, int patch_side, int n_patches,
                                 std::uint64_t seed);

/// Pulls every channel toward its own mean: out = m + beta * (in - m).
ImageTensor reduce_contrast(const ImageTensor& img, double beta);

/// Adds i.i.d. zero-mean Gaussian noise of standard deviation sigma, clamped.
ImageTensor add_gaussian_noise(const ImageTensor& img, double sigma, std::uint64_t seed);

/// Unsharp mask: out = in + lam * (in - blur(in)), clamped.
ImageTensor sharpen_edges(const ImageTensor& img, double lam, double blur_sigma);

/// Separable Gaussian blur per channel, replicate border, kernel radius 3*sigma.
ImageTensor gaussian_blur(const ImageTensor& img, double sigma);

/// Brightest smooth region of the image: argmax of a heavily blurred grayscale
/// map (first hit in row-major order on ties). Metadata, when present, wins.
Point2 locate_optic_disc(const ImageTensor& img, std::optional<Point2> metadata = std::nullopt);

/// Zeroes all channels within Euclidean distance `radius` of `center`
/// (boundary inclusive).
ImageTensor occlude_optic_disc(const ImageTensor& img, Point2 center, double radius);

/// Dispatches to the operator for spec.kind; NONE is the identity. For ODC
/// without explicit cx/cy params the disc is located first (using
/// `disc_metadata` when available). Never mutates its input.
ImageTensor apply(const PerturbationSpec& spec, const ImageTensor& img,
                  std::optional<Point2> disc_metadata = std::nullopt);

}  // namespace celd::perturb
