#include "celd/synthgen.hpp"

#include <opencv2/imgcodecs.hpp>

#include <algorithm>
#include <cmath>
#include <random>

namespace celd::synthgen {

namespace fs = std::filesystem;

namespace {

std::uint64_t mix64(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ull;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

std::uint64_t stream_seed(std::uint64_t seed, int class_id, int index) {
    return mix64(mix64(mix64(seed) + class_id) + static_cast<std::uint64_t>(index));
}

double uni(std::mt19937_64& rng, double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(rng);
}

/// Soft-edged disc coverage in [0,1], ~1.5 px feather.
double coverage(double dist, double radius) {
    return std::clamp((radius - dist) / 1.5 + 0.5, 0.0, 1.0);
}

void blend(ImageTensor& img, int y, int x, const std::array<double, 3>& color, double alpha) {
    if (alpha <= 0.0) return;
    for (int c = 0; c < 3; ++c) {
        const double v = img.at(c, y, x);
        img.at(c, y, x) = static_cast<float>(v + alpha * (color[c] - v));
    }
}

int class_id(const std::string& klass) {
    const int id = LabelSpace::target().index_of(klass);
    if (id < 0) throw std::invalid_argument("synthgen: unknown class '" + klass + "'");
    return id;
}

}  // namespace

std::array<int, 3> resolved_counts(const SynthConfig& cfg) {
    std::array<int, 3> n{cfg.n_healthy, cfg.n_dr, cfg.n_glaucoma};
    if (cfg.mode == SynthConfig::Mode::PaperRatio) {
        n[1] = static_cast<int>(std::lround(cfg.n_healthy * 727.0 / 2185.0));
        n[2] = static_cast<int>(std::lround(cfg.n_healthy * 199.0 / 2185.0));
    }
    for (int v : n)
        if (v < 1) throw std::invalid_argument("synthgen: class counts must be >= 1");
    if (cfg.side < 64) throw std::invalid_argument("synthgen: side must be >= 64");
    return n;
}

SampleParams sample_params(const SynthConfig& cfg, const std::string& klass, int index) {
    const int id = class_id(klass);
    std::mt19937_64 rng(stream_seed(cfg.seed, id, index));
    const double S = cfg.side;

    SampleParams p;
    p.field_r = 0.47 * S;
    p.field_color = {0.52 + uni(rng, -0.05, 0.05), 0.33 + uni(rng, -0.04, 0.04),
                     0.16 + uni(rng, -0.03, 0.03)};

    const double ang = uni(rng, 0.0, 2.0 * M_PI);
    const double rad = uni(rng, 0.0, 0.22 * S);
    p.disc_cx = S / 2.0 + rad * std::cos(ang);
    p.disc_cy = S / 2.0 + rad * std::sin(ang);
    p.disc_r = (0.085 + uni(rng, 0.0, 0.02)) * S;
    p.disc_color = {0.93 + uni(rng, 0.0, 0.05), 0.78 + uni(rng, 0.0, 0.06),
                    0.45 + uni(rng, 0.0, 0.05)};

    const double cup_ang = uni(rng, 0.0, 2.0 * M_PI);
    const double cup_off = uni(rng, 0.0, 0.08 * p.disc_r);
    p.cup_cx = p.disc_cx + cup_off * std::cos(cup_ang);
    p.cup_cy = p.disc_cy + cup_off * std::sin(cup_ang);
    p.cup_ratio = (id == 2) ? uni(rng, 0.72, 0.85) : uni(rng, 0.25, 0.40);
    p.cup_color = {0.99, 0.94 + uni(rng, 0.0, 0.03), 0.88 + uni(rng, 0.0, 0.04)};

    if (id == 1) {
        const int n_lesions = std::uniform_int_distribution<int>(3, 8)(rng);
        for (int l = 0; l < n_lesions; ++l) {
            Lesion les;
            for (int attempt = 0; attempt < 200; ++attempt) {
                const double a = uni(rng, 0.0, 2.0 * M_PI);
                const double d = uni(rng, 0.0, 0.80 * p.field_r);
                les.cx = S / 2.0 + d * std::cos(a);
                les.cy = S / 2.0 + d * std::sin(a);
                const double ddx = les.cx - p.disc_cx, ddy = les.cy - p.disc_cy;
                if (std::sqrt(ddx * ddx + ddy * ddy) >= 2.2 * p.disc_r) break;
            }
            les.r = (0.018 + uni(rng, 0.0, 0.022)) * S;
            les.green = 0.40 + uni(rng, 0.0, 0.10);
            p.lesions.push_back(les);
        }
    }
    p.noise_seed = rng();
    return p;
}

ImageTensor render(const SampleParams& p, int side, bool with_lesions) {
    ImageTensor img(side);
    const double cx = side / 2.0, cy = side / 2.0;
    for (int y = 0; y < side; ++y) {
        for (int x = 0; x < side; ++x) {
            const double dx = x - cx, dy = y - cy;
            const double d = std::sqrt(dx * dx + dy * dy);
            for (int c = 0; c < 3; ++c) img.at(c, y, x) = 0.02f;
            const double alpha = coverage(d, p.field_r);
            if (alpha > 0.0) {
                const double shade = 1.0 - 0.45 * std::min(1.0, (d / p.field_r) * (d / p.field_r));
                blend(img, y, x,
                      {p.field_color[0] * shade, p.field_color[1] * shade, p.field_color[2] * shade},
                      alpha);
            }
            const double dd = std::hypot(x - p.disc_cx, y - p.disc_cy);
            blend(img, y, x, p.disc_color, coverage(dd, p.disc_r));
            const double dc = std::hypot(x - p.cup_cx, y - p.cup_cy);
            blend(img, y, x, p.cup_color, coverage(dc, p.cup_ratio * p.disc_r));
        }
    }
    if (with_lesions) {
        for (const auto& les : p.lesions) {
            const int x0 = std::max(0, static_cast<int>(les.cx - les.r - 2));
            const int x1 = std::min(side - 1, static_cast<int>(les.cx + les.r + 2));
            const int y0 = std::max(0, static_cast<int>(les.cy - les.r - 2));
            const int y1 = std::min(side - 1, static_cast<int>(les.cy + les.r + 2));
            for (int y = y0; y <= y1; ++y) {
                for (int x = x0; x <= x1; ++x) {
                    const double d = std::hypot(x - les.cx, y - les.cy);
                    const double a = coverage(d, les.r);
                    if (a > 0.0) {
                        const float g = img.at(1, y, x);
                        img.at(1, y, x) = std::min(1.0f, static_cast<float>(g + a * les.green));
                    }
                }
            }
        }
    }
    // Mild capture noise, same stream with or without lesions.
    std::mt19937_64 nrng(p.noise_seed);
    std::uniform_real_distribution<double> noise(-0.01, 0.01);
    for (float& v : img.data) v = static_cast<float>(std::clamp(v + noise(nrng), 0.0, 1.0));
    return img;
}

datahub::PooledDataset generate(const SynthConfig& cfg, const fs::path& out_dir) {
    const auto counts = resolved_counts(cfg);
    const LabelSpace space = LabelSpace::target();
    std::error_code ec;
    fs::create_directories(out_dir / "images", ec);
    if (ec || !fs::is_directory(out_dir / "images"))
        throw std::runtime_error("synthgen: cannot create output directory " + out_dir.string());

    datahub::PooledDataset ds;
    ds.labelspace = space;
    for (int id = 0; id < 3; ++id) {
        const std::string& klass = space.name(id);
        for (int i = 0; i < counts[id]; ++i) {
            const SampleParams p = sample_params(cfg, klass, i);
            const ImageTensor img = render(p, cfg.side);
            cv::Mat bgr(cfg.side, cfg.side, CV_8UC3);
            for (int y = 0; y < cfg.side; ++y) {
                cv::Vec3b* row = bgr.ptr<cv::Vec3b>(y);
                for (int x = 0; x < cfg.side; ++x) {
                    row[x][0] = static_cast<uchar>(std::lround(img.at(2, y, x) * 255.0f));
                    row[x][1] = static_cast<uchar>(std::lround(img.at(1, y, x) * 255.0f));
                    row[x][2] = static_cast<uchar>(std::lround(img.at(0, y, x) * 255.0f));
                }
            }
            char name[64];
            std::snprintf(name, sizeof(name), "%s_%04d.png", klass.c_str(), i);
            const fs::path file = out_dir / "images" / name;
            if (!cv::imwrite(file.string(), bgr))
                throw std::runtime_error("synthgen: cannot write " + file.string());

            ImageRecord rec;
            rec.image_path = file.lexically_normal().string();
            rec.label = klass;
            rec.source = "synth";
            rec.disc_center = Point2{p.disc_cx, p.disc_cy};
            ds.per_source_counts[{rec.source, rec.label}]++;
            ds.records.push_back(std::move(rec));
        }
    }
    datahub::save_manifest(ds, out_dir / "manifest.csv");
    return ds;
}

}  // namespace celd::synthgen
