#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <set>
#include <vector>

#include "celd/perturb.hpp"

using namespace celd;
using namespace celd::perturb;

namespace {

ImageTensor random_image(int side, std::uint64_t seed) {
    ImageTensor img(side);
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<float> u(0.0f, 1.0f);
    for (float& v : img.data) v = u(rng);
    return img;
}

ImageTensor constant_image(int side, float r, float g, float b) {
    ImageTensor img(side);
    for (std::size_t i = 0; i < img.plane(); ++i) {
        img.data[i] = r;
        img.data[i + img.plane()] = g;
        img.data[i + 2 * img.plane()] = b;
    }
    return img;
}

bool channel_equal(const ImageTensor& a, const ImageTensor& b, int c) {
    return std::equal(a.data.begin() + c * a.plane(), a.data.begin() + (c + 1) * a.plane(),
                      b.data.begin() + c * b.plane());
}

bool in_range(const ImageTensor& img) {
    return std::all_of(img.data.begin(), img.data.end(),
                       [](float v) { return v >= 0.0f && v <= 1.0f; });
}

}  // namespace

TEST_CASE("reduce_green scales only the green channel") {
    const ImageTensor img = random_image(32, 1);

    SUBCASE("alpha 1 is the bitwise identity") { CHECK(reduce_green(img, 1.0) == img); }
    SUBCASE("alpha 0 zeroes green and leaves red/blue untouched") {
        const ImageTensor out = reduce_green(img, 0.0);
        CHECK(channel_equal(out, img, 0));
        CHECK(channel_equal(out, img, 2));
        for (std::size_t i = 0; i < out.plane(); ++i) CHECK(out.data[out.plane() + i] == 0.0f);
    }
    SUBCASE("pointwise multiplication") {
        const ImageTensor half = constant_image(8, 0.5f, 0.5f, 0.5f);
        const ImageTensor out = reduce_green(half, 0.2);
        for (std::size_t i = 0; i < out.plane(); ++i) {
            CHECK(out.data[i] == 0.5f);
            CHECK(out.data[out.plane() + i] == doctest::Approx(0.1).epsilon(1e-7));
            CHECK(out.data[2 * out.plane() + i] == 0.5f);
        }
    }
    SUBCASE("alpha outside [0,1] is rejected") {
        CHECK_THROWS_AS(reduce_green(img, -0.1), std::invalid_argument);
        CHECK_THROWS_AS(reduce_green(img, 1.1), std::invalid_argument);
    }
}

TEST_CASE("random_green_removal zeroes exactly the drawn patch union") {
    const int side = 256, patch = 32, n = 12;
    ImageTensor img = constant_image(side, 0.7f, 0.6f, 0.4f);

    SUBCASE("zero patches is the identity") {
        CHECK(random_green_removal(img, patch, 0, 5) == img);
    }
    SUBCASE("deterministic per seed, different across seeds") {
        const ImageTensor a = random_green_removal(img, patch, n, 9);
        const ImageTensor b = random_green_removal(img, patch, n, 9);
        const ImageTensor c = random_green_removal(img, patch, n, 10);
        CHECK(a == b);
        CHECK(!(a == c));
    }
    SUBCASE("zeroed area matches an independent mask-union oracle") {
        const std::uint64_t seed = 21;
        const ImageTensor out = random_green_removal(img, patch, n, seed);
        // Reproduce the documented draw: mt19937_64(seed), x then y per patch,
        // uniform over valid top-left corners.
        std::vector<std::vector<bool>> mask(side, std::vector<bool>(side, false));
        std::mt19937_64 rng(seed);
        std::uniform_int_distribution<int> corner(0, side - patch);
        for (int p = 0; p < n; ++p) {
            const int x0 = corner(rng);
            const int y0 = corner(rng);
            for (int y = y0; y < y0 + patch; ++y)
                for (int x = x0; x < x0 + patch; ++x) mask[y][x] = true;
        }
        std::size_t union_area = 0, zeroed = 0;
        for (int y = 0; y < side; ++y) {
            for (int x = 0; x < side; ++x) {
                if (mask[y][x]) ++union_area;
                const bool is_zero = out.at(1, y, x) == 0.0f;
                CHECK(is_zero == mask[y][x]);
                if (is_zero) ++zeroed;
            }
        }
        CHECK(zeroed == union_area);
        CHECK(zeroed <= static_cast<std::size_t>(n) * patch * patch);
        CHECK(channel_equal(out, img, 0));
        CHECK(channel_equal(out, img, 2));
    }
    SUBCASE("patch larger than the image is rejected") {
        CHECK_THROWS_AS(random_green_removal(img, side + 1, 1, 0), std::invalid_argument);
        CHECK_THROWS_AS(random_green_removal(img, patch, -1, 0), std::invalid_argument);
    }
}

TEST_CASE("reduce_contrast pulls channels toward their means") {
    const ImageTensor img = random_image(32, 2);

    SUBCASE("beta 1 is the bitwise identity") { CHECK(reduce_contrast(img, 1.0) == img); }
    SUBCASE("beta 0 collapses each channel to its mean") {
        const ImageTensor out = reduce_contrast(img, 0.0);
        for (int c = 0; c < 3; ++c) {
            double mean = 0.0;
            for (std::size_t i = 0; i < img.plane(); ++i) mean += img.data[c * img.plane() + i];
            mean /= static_cast<double>(img.plane());
            for (std::size_t i = 0; i < out.plane(); ++i)
                CHECK(out.data[c * out.plane() + i] == doctest::Approx(mean).epsilon(1e-6));
        }
    }
    SUBCASE("linear pull: values 0.2/0.8 at beta 0.5 become 0.35/0.65") {
        ImageTensor two(2);  // four pixels: two at 0.2, two at 0.8 per channel
        for (int c = 0; c < 3; ++c) {
            two.at(c, 0, 0) = 0.2f;
            two.at(c, 0, 1) = 0.8f;
            two.at(c, 1, 0) = 0.2f;
            two.at(c, 1, 1) = 0.8f;
        }
        const ImageTensor out = reduce_contrast(two, 0.5);
        CHECK(out.at(0, 0, 0) == doctest::Approx(0.35).epsilon(1e-6));
        CHECK(out.at(0, 0, 1) == doctest::Approx(0.65).epsilon(1e-6));
    }
}

TEST_CASE("gaussian noise statistics and determinism") {
    SUBCASE("sigma 0 is the bitwise identity") {
        const ImageTensor img = random_image(16, 3);
        CHECK(add_gaussian_noise(img, 0.0, 1) == img);
    }
    SUBCASE("sample standard deviation tracks sigma") {
        const ImageTensor img = constant_image(256, 0.5f, 0.5f, 0.5f);  // 196608 values
        const ImageTensor out = add_gaussian_noise(img, 0.05, 77);
        double mean = 0.0;
        for (float v : out.data) mean += v;
        mean /= static_cast<double>(out.data.size());
        double var = 0.0;
        for (float v : out.data) var += (v - mean) * (v - mean);
        var /= static_cast<double>(out.data.size() - 1);
        CHECK(std::abs(std::sqrt(var) - 0.05) <= 0.005);
        CHECK(in_range(out));
    }
    SUBCASE("same seed reproduces, different seed differs") {
        const ImageTensor img = random_image(32, 4);
        CHECK(add_gaussian_noise(img, 0.05, 5) == add_gaussian_noise(img, 0.05, 5));
        CHECK(!(add_gaussian_noise(img, 0.05, 5) == add_gaussian_noise(img, 0.05, 6)));
    }
    SUBCASE("negative sigma is rejected") {
        CHECK_THROWS_AS(add_gaussian_noise(random_image(8, 1), -0.01, 0), std::invalid_argument);
    }
}

TEST_CASE("edge sharpening is an unsharp mask") {
    SUBCASE("lam 0 is the bitwise identity") {
        const ImageTensor img = random_image(16, 5);
        CHECK(sharpen_edges(img, 0.0, 2.0) == img);
    }
    SUBCASE("constant images are a fixed point") {
        const ImageTensor img = constant_image(32, 0.3f, 0.6f, 0.9f);
        const ImageTensor out = sharpen_edges(img, 1.5, 2.0);
        for (std::size_t i = 0; i < img.data.size(); ++i)
            CHECK(out.data[i] == doctest::Approx(img.data[i]).epsilon(1e-6));
    }
    SUBCASE("step edge matches a brute-force 1-D convolution oracle and clamps") {
        const int side = 32;
        ImageTensor img(side);
        for (int y = 0; y < side; ++y)
            for (int x = 0; x < side; ++x)
                for (int c = 0; c < 3; ++c) img.at(c, y, x) = x < side / 2 ? 0.0f : 1.0f;
        const double lam = 1.5, sigma = 2.0;
        const ImageTensor out = sharpen_edges(img, lam, sigma);

        // 1-D oracle: the image is constant vertically, so the 2-D blur equals
        // a horizontal kernel pass (replicate border, radius 3*sigma).
        const int radius = static_cast<int>(std::ceil(3.0 * sigma));
        std::vector<double> k(2 * radius + 1);
        double ksum = 0.0;
        for (int i = -radius; i <= radius; ++i) {
            k[i + radius] = std::exp(-0.5 * i * i / (sigma * sigma));
            ksum += k[i + radius];
        }
        for (double& v : k) v /= ksum;
        std::vector<double> row(side), blurred(side);
        for (int x = 0; x < side; ++x) row[x] = x < side / 2 ? 0.0 : 1.0;
        for (int x = 0; x < side; ++x) {
            double acc = 0.0;
            for (int i = -radius; i <= radius; ++i)
                acc += k[i + radius] * row[std::clamp(x + i, 0, side - 1)];
            blurred[x] = acc;
        }
        for (int x = 0; x < side; ++x) {
            const double expect = std::clamp(row[x] + lam * (row[x] - blurred[x]), 0.0, 1.0);
            for (int y = 0; y < side; ++y)
                CHECK(out.at(0, y, x) == doctest::Approx(expect).epsilon(1e-5));
        }
        // Overshoot on both sides of the edge is clamped to the valid range.
        CHECK(out.at(0, 16, side / 2 - 1) == 0.0f);
        CHECK(out.at(0, 16, side / 2) == 1.0f);
        CHECK(in_range(out));
    }
}

TEST_CASE("optic disc localization") {
    SUBCASE("finds a bright blob within 5 px") {
        const int side = 256;
        ImageTensor img(side);
        const double bx = 64, by = 192;
        for (int y = 0; y < side; ++y)
            for (int x = 0; x < side; ++x) {
                const double d2 = (x - bx) * (x - bx) + (y - by) * (y - by);
                const float v = static_cast<float>(0.05 + 0.9 * std::exp(-d2 / (2 * 12.0 * 12.0)));
                for (int c = 0; c < 3; ++c) img.at(c, y, x) = v;
            }
        const Point2 p = locate_optic_disc(img);
        CHECK(std::hypot(p.x - bx, p.y - by) <= 5.0);
    }
    SUBCASE("metadata wins verbatim") {
        const ImageTensor img = random_image(64, 6);
        const Point2 p = locate_optic_disc(img, Point2{10.5, 20.25});
        CHECK(p.x == 10.5);
        CHECK(p.y == 20.25);
    }
    SUBCASE("uniform image returns the first row-major argmax") {
        const ImageTensor img = constant_image(64, 0.4f, 0.4f, 0.4f);
        const Point2 p = locate_optic_disc(img);
        CHECK(p.x == 0.0);
        CHECK(p.y == 0.0);
    }
}

TEST_CASE("optic disc occlusion zeroes a closed disc") {
    SUBCASE("radius covering the whole image blanks it") {
        const ImageTensor img = random_image(64, 7);
        const ImageTensor out = occlude_optic_disc(img, {32, 32}, 100.0);
        for (float v : out.data) CHECK(v == 0.0f);
    }
    SUBCASE("zeroed pixel count equals the lattice-point oracle") {
        const int side = 256;
        ImageTensor img = constant_image(side, 0.5f, 0.5f, 0.5f);
        const double r = 30.0;
        const ImageTensor out = occlude_optic_disc(img, {128, 128}, r);
        std::size_t zeroed = 0;
        for (int y = 0; y < side; ++y)
            for (int x = 0; x < side; ++x)
                if (out.at(0, y, x) == 0.0f) ++zeroed;
        // Independent count of integer lattice points inside the disc.
        std::size_t lattice = 0;
        for (int y = -31; y <= 31; ++y)
            for (int x = -31; x <= 31; ++x)
                if (x * x + y * y <= 900) ++lattice;
        CHECK(zeroed == lattice);
        CHECK(lattice == 2821);
    }
    SUBCASE("boundary pixels at exactly the radius are zeroed") {
        ImageTensor img = constant_image(32, 0.5f, 0.5f, 0.5f);
        const ImageTensor out = occlude_optic_disc(img, {10, 10}, 5.0);
        CHECK(out.at(0, 14, 13) == 0.0f);  // 3-4-5 triangle: distance exactly 5
        CHECK(out.at(0, 10, 16) == doctest::Approx(0.5));
    }
    SUBCASE("bad center or radius rejected") {
        const ImageTensor img = random_image(16, 8);
        CHECK_THROWS_AS(occlude_optic_disc(img, {-1, 4}, 3.0), std::invalid_argument);
        CHECK_THROWS_AS(occlude_optic_disc(img, {4, 4}, 0.0), std::invalid_argument);
    }
}

TEST_CASE("apply dispatches by kind") {
    const ImageTensor img = random_image(128, 9);

    SUBCASE("NONE is the identity") {
        PerturbationSpec none;
        CHECK(apply(none, img) == img);
    }
    SUBCASE("RG spec with defaults equals reduce_green(img, 0.2)") {
        PerturbationSpec rg;
        rg.kind = Kind::RG;
        CHECK(apply(rg, img) == reduce_green(img, 0.2));
    }
    SUBCASE("ODC without explicit center consults the locator") {
        ImageTensor scene(128);
        for (int y = 0; y < 128; ++y)
            for (int x = 0; x < 128; ++x) {
                const double d2 = (x - 90.0) * (x - 90.0) + (y - 40.0) * (y - 40.0);
                const float v = static_cast<float>(0.1 + 0.8 * std::exp(-d2 / (2 * 8.0 * 8.0)));
                for (int c = 0; c < 3; ++c) scene.at(c, y, x) = v;
            }
        PerturbationSpec odc;
        odc.kind = Kind::ODC;
        const ImageTensor out = apply(odc, scene);
        CHECK(out.at(0, 40, 90) == 0.0f);  // the blob is gone
        const ImageTensor with_meta = apply(odc, scene, Point2{20, 20});
        CHECK(with_meta.at(0, 20, 20) == 0.0f);
        CHECK(with_meta.at(0, 40, 90) > 0.0f);
    }
    SUBCASE("explicit cx/cy params beat the locator") {
        PerturbationSpec odc;
        odc.kind = Kind::ODC;
        odc.params = {{"cx", 10.0}, {"cy", 12.0}, {"radius", 4.0}};
        const ImageTensor out = apply(odc, img);
        CHECK(out.at(1, 12, 10) == 0.0f);
    }
    SUBCASE("operators preserve range and shape; application is pure") {
        const std::vector<std::string> specs = {"NONE", "RG", "RGR", "RC", "GN:seed=11", "ES", "ODC"};
        for (const auto& s : specs) {
            const PerturbationSpec spec = parse_spec(s);
            const ImageTensor copy = img;
            const ImageTensor out1 = apply(spec, copy);
            const ImageTensor out2 = apply(spec, copy);
            CHECK(copy == img);  // input untouched
            CHECK(out1 == out2);
            CHECK(out1.side == img.side);
            CHECK(in_range(out1));
        }
    }
}

TEST_CASE("spec parsing") {
    const PerturbationSpec rg = parse_spec("RG:alpha=0.35");
    CHECK(rg.kind == Kind::RG);
    CHECK(rg.params.at("alpha") == 0.35);

    const PerturbationSpec gn = parse_spec("GN:sigma=0.1,seed=42");
    CHECK(gn.kind == Kind::GN);
    CHECK(gn.params.at("sigma") == 0.1);
    CHECK(gn.seed == 42);

    CHECK(parse_spec("NONE").kind == Kind::NONE);
    CHECK_THROWS_AS(parse_spec("XYZ"), std::invalid_argument);
    CHECK_THROWS_AS(parse_spec("RG:alpha"), std::invalid_argument);
    CHECK_THROWS_AS(parse_spec("RG:alpha=abc"), std::invalid_argument);
    CHECK(to_string(rg) == "RG:alpha=0.35");
}
