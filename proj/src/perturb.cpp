#include "celd/perturb.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>
#include <stdexcept>
#include <vector>

namespace celd::perturb {

namespace {

void check_image(const ImageTensor& img) {
    if (img.side <= 0 || img.data.size() != 3 * img.plane())
        throw std::invalid_argument("perturb: malformed ImageTensor");
}

float clamp01(double v) { return static_cast<float>(std::min(1.0, std::max(0.0, v))); }

std::vector<double> gaussian_kernel(double sigma) {
    const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
    std::vector<double> k(2 * radius + 1);
    double sum = 0.0;
    for (int i = -radius; i <= radius; ++i) {
        k[i + radius] = std::exp(-0.5 * (i * i) / (sigma * sigma));
        sum += k[i + radius];
    }
    for (double& v : k) v /= sum;
    return k;
}

}  // namespace

std::string kind_name(Kind k) {
    switch (k) {
        case Kind::NONE: return "NONE";
        case Kind::RG: return "RG";
        case Kind::RGR: return "RGR";
        case Kind::RC: return "RC";
        case Kind::GN: return "GN";
        case Kind::ES: return "ES";
        case Kind::ODC: return "ODC";
    }
    throw std::logic_error("kind_name: bad kind");
}

Kind kind_from_name(const std::string& name) {
    if (name == "NONE") return Kind::NONE;
    if (name == "RG") return Kind::RG;
    if (name == "RGR") return Kind::RGR;
    if (name == "RC") return Kind::RC;
    if (name == "GN") return Kind::GN;
    if (name == "ES") return Kind::ES;
    if (name == "ODC") return Kind::ODC;
    throw std::invalid_argument("unknown perturbation kind '" + name + "'");
}

PerturbationSpec parse_spec(const std::string& text) {
    PerturbationSpec spec;
    const auto colon = text.find(':');
    spec.kind = kind_from_name(text.substr(0, colon));
    if (colon == std::string::npos) return spec;
    std::stringstream ss(text.substr(colon + 1));
    std::string item;
    while (std::getline(ss, item, ',')) {
        const auto eq = item.find('=');
        if (eq == std::string::npos)
            throw std::invalid_argument("bad perturbation parameter '" + item + "' (want k=v)");
        const std::string key = item.substr(0, eq);
        const std::string val = item.substr(eq + 1);
        try {
            if (key == "seed")
                spec.seed = std::stoull(val);
            else
                spec.params[key] = std::stod(val);
        } catch (const std::exception&) {
            throw std::invalid_argument("bad value for perturbation parameter '" + key + "'");
        }
    }
    if (spec.kind == Kind::NONE && !spec.params.empty())
        throw std::invalid_argument("NONE takes no parameters");
    return spec;
}

std::string to_string(const PerturbationSpec& spec) {
    std::string out = kind_name(spec.kind);
    char buf[64];
    std::string sep = ":";
    for (const auto& [k, v] : spec.params) {
        std::snprintf(buf, sizeof(buf), "%s%s=%g", sep.c_str(), k.c_str(), v);
        out += buf;
        sep = ",";
    }
    return out;
}

ImageTensor reduce_green(const ImageTensor& img, double alpha) {
    check_image(img);
    if (alpha < 0.0 || alpha > 1.0)
        throw std::invalid_argument("reduce_green: alpha must lie in [0,1]");
    ImageTensor out = img;
    float* g = out.data.data() + out.plane();
    for (std::size_t i = 0; i < out.plane(); ++i) g[i] = static_cast<float>(g[i] * alpha);
    return out;
}

ImageTensor random_green_removal(const ImageTensor& img, int patch_side, int n_patches,
                                 std::uint64_t seed) {
    check_image(img);
    if (patch_side < 1 || patch_side > img.side)
        throw std::invalid_argument("random_green_removal: patch_side must lie in [1, side]");
    if (n_patches < 0) throw std::invalid_argument("random_green_removal: n_patches must be >= 0");
    ImageTensor out = img;
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<int> corner(0, img.side - patch_side);
    for (int p = 0; p < n_patches; ++p) {
        const int x0 = corner(rng);
        const int y0 = corner(rng);
        for (int y = y0; y < y0 + patch_side; ++y) {
            float* row = out.data.data() + out.plane() + static_cast<std::size_t>(y) * out.side;
            std::fill(row + x0, row + x0 + patch_side, 0.0f);
        }
    }
    return out;
}

ImageTensor reduce_contrast(const ImageTensor& img, double beta) {
    check_image(img);
    if (beta < 0.0 || beta > 1.0)
        throw std::invalid_argument("reduce_contrast: beta must lie in [0,1]");
    if (beta == 1.0) return img;  // keep the identity case bitwise
    ImageTensor out(img.side);
    for (int c = 0; c < 3; ++c) {
        const float* in = img.data.data() + c * img.plane();
        float* o = out.data.data() + c * out.plane();
        double mean = 0.0;
        for (std::size_t i = 0; i < img.plane(); ++i) mean += in[i];
        mean /= static_cast<double>(img.plane());
        for (std::size_t i = 0; i < img.plane(); ++i) o[i] = clamp01(mean + beta * (in[i] - mean));
    }
    return out;
}

ImageTensor add_gaussian_noise(const ImageTensor& img, double sigma, std::uint64_t seed) {
    check_image(img);
    if (sigma < 0.0) throw std::invalid_argument("add_gaussian_noise: sigma must be >= 0");
    if (sigma == 0.0) return img;
    ImageTensor out = img;
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> noise(0.0, sigma);
    for (float& v : out.data) v = clamp01(v + noise(rng));
    return out;
}

ImageTensor gaussian_blur(const ImageTensor& img, double sigma) {
    check_image(img);
    if (sigma <= 0.0) throw std::invalid_argument("gaussian_blur: sigma must be > 0");
    const auto k = gaussian_kernel(sigma);
    const int radius = static_cast<int>(k.size() / 2);
    const int s = img.side;
    ImageTensor tmp(s), out(s);
    for (int c = 0; c < 3; ++c) {
        // horizontal
        for (int y = 0; y < s; ++y) {
            for (int x = 0; x < s; ++x) {
                double acc = 0.0;
                for (int i = -radius; i <= radius; ++i) {
                    const int xx = std::clamp(x + i, 0, s - 1);
                    acc += k[i + radius] * img.at(c, y, xx);
                }
                tmp.at(c, y, x) = static_cast<float>(acc);
            }
        }
        // vertical
        for (int y = 0; y < s; ++y) {
            for (int x = 0; x < s; ++x) {
                double acc = 0.0;
                for (int i = -radius; i <= radius; ++i) {
                    const int yy = std::clamp(y + i, 0, s - 1);
                    acc += k[i + radius] * tmp.at(c, yy, x);
                }
                out.at(c, y, x) = static_cast<float>(acc);
            }
        }
    }
    return out;
}

ImageTensor sharpen_edges(const ImageTensor& img, double lam, double blur_sigma) {
    check_image(img);
    if (lam < 0.0) throw std::invalid_argument("sharpen_edges: lam must be >= 0");
    if (blur_sigma <= 0.0) throw std::invalid_argument("sharpen_edges: blur_sigma must be > 0");
    if (lam == 0.0) return img;
    ImageTensor blurred = gaussian_blur(img, blur_sigma);
    ImageTensor out(img.side);
    for (std::size_t i = 0; i < img.data.size(); ++i)
        out.data[i] = clamp01(img.data[i] + lam * (static_cast<double>(img.data[i]) - blurred.data[i]));
    return out;
}

Point2 locate_optic_disc(const ImageTensor& img, std::optional<Point2> metadata) {
    check_image(img);
    if (metadata) return *metadata;
    const double sigma = 15.0 * img.side / 256.0;
    // Grayscale mean of channels, then a heavy blur; the disc is the
    // brightest smooth region.
    ImageTensor gray(img.side);
    for (std::size_t i = 0; i < img.plane(); ++i) {
        const float v =
            (img.data[i] + img.data[i + img.plane()] + img.data[i + 2 * img.plane()]) / 3.0f;
        gray.data[i] = v;
        gray.data[i + gray.plane()] = v;
        gray.data[i + 2 * gray.plane()] = v;
    }
    ImageTensor smooth = gaussian_blur(gray, sigma);
    std::size_t best = 0;
    for (std::size_t i = 1; i < smooth.plane(); ++i)
        if (smooth.data[i] > smooth.data[best]) best = i;
    return Point2{static_cast<double>(best % img.side), static_cast<double>(best / img.side)};
}

ImageTensor occlude_optic_disc(const ImageTensor& img, Point2 center, double radius) {
    check_image(img);
    if (radius <= 0.0) throw std::invalid_argument("occlude_optic_disc: radius must be > 0");
    if (center.x < 0 || center.y < 0 || center.x >= img.side || center.y >= img.side)
        throw std::invalid_argument("occlude_optic_disc: center out of bounds");
    ImageTensor out = img;
    const double r2 = radius * radius;
    for (int y = 0; y < img.side; ++y) {
        for (int x = 0; x < img.side; ++x) {
            const double dx = x - center.x, dy = y - center.y;
            if (dx * dx + dy * dy <= r2) {
                for (int c = 0; c < 3; ++c) out.at(c, y, x) = 0.0f;
            }
        }
    }
    return out;
}

ImageTensor apply(const PerturbationSpec& spec, const ImageTensor& img,
                  std::optional<Point2> disc_metadata) {
    check_image(img);
    const double scale = img.side / 256.0;
    switch (spec.kind) {
        case Kind::NONE:
            return img;
        case Kind::RG:
            return reduce_green(img, spec.param_or("alpha", 0.2));
        case Kind::RGR: {
            const int patch = static_cast<int>(
                spec.param_or("patch_side", std::max(1.0, std::round(32.0 * scale))));
            const int n = static_cast<int>(spec.param_or("n_patches", 12));
            return random_green_removal(img, patch, n, spec.seed);
        }
        case Kind::RC:
            return reduce_contrast(img, spec.param_or("beta", 0.3));
        case Kind::GN:
            return add_gaussian_noise(img, spec.param_or("sigma", 0.05), spec.seed);
        case Kind::ES:
            return sharpen_edges(img, spec.param_or("lam", 1.5), spec.param_or("blur_sigma", 2.0));
        case Kind::ODC: {
            Point2 center;
            if (spec.params.count("cx") && spec.params.count("cy"))
                center = Point2{spec.params.at("cx"), spec.params.at("cy")};
            else
                center = locate_optic_disc(img, disc_metadata);
            return occlude_optic_disc(img, center, spec.param_or("radius", 30.0 * scale));
        }
    }
    throw std::logic_error("apply: bad kind");
}

}  // namespace celd::perturb
