#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <string>

#include "mvanet/data.hpp"
#include "mvanet/errors.hpp"
#include "test_oracles.hpp"

using namespace mvanet;

namespace {

double max_abs_diff(const Tensor& a, const Tensor& b) {
    REQUIRE(a.same_shape(b));
    double m = 0.0;
    for (Index i = 0; i < a.numel(); ++i) m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
    return m;
}

// Narrowest fg run any foreground pixel sits in, row- or column-wise. An
// independent ruler for stroke thickness.
Index min_stroke_width(const Tensor& mask) {
    const Index h = mask.dim(2), w = mask.dim(3);
    auto at = [&](Index y, Index x) { return mask.data()[y * w + x] != 0.0; };
    Index best = std::numeric_limits<Index>::max();
    for (Index y = 0; y < h; ++y)
        for (Index x = 0; x < w; ++x) {
            if (!at(y, x)) continue;
            Index l = x;
            while (l > 0 && at(y, l - 1)) --l;
            Index r = x;
            while (r + 1 < w && at(y, r + 1)) ++r;
            Index u = y;
            while (u > 0 && at(u - 1, x)) --u;
            Index d = y;
            while (d + 1 < h && at(d + 1, x)) ++d;
            best = std::min(best, std::min(r - l + 1, d - u + 1));
        }
    return best;
}

std::array<double, 2> centroid(const Tensor& plane, Index c) {
    const Index h = plane.dim(2), w = plane.dim(3);
    double mx = 0.0, my = 0.0, mass = 0.0;
    for (Index y = 0; y < h; ++y)
        for (Index x = 0; x < w; ++x) {
            const double v = plane.at4(0, c, y, x);
            mx += v * static_cast<double>(x);
            my += v * static_cast<double>(y);
            mass += v;
        }
    REQUIRE(mass > 0.0);
    return {mx / mass, my / mass};
}

} // namespace

TEST_SUITE("data") {

TEST_CASE("generation is deterministic and validated") {
    std::vector<Sample> a = generate_synthetic(7, 5, 64);
    std::vector<Sample> b = generate_synthetic(7, 5, 64);
    REQUIRE(a.size() == 5);
    REQUIRE(b.size() == 5);
    for (int i = 0; i < 5; ++i) {
        CHECK(a[i].id == b[i].id);
        CHECK(max_abs_diff(a[i].image, b[i].image) == 0.0);
        CHECK(max_abs_diff(a[i].mask, b[i].mask) == 0.0);
    }
    CHECK(a[0].id == "synth0000");
    CHECK(a[4].id == "synth0004");
    std::vector<Sample> c = generate_synthetic(8, 1, 64);
    CHECK(max_abs_diff(a[0].image, c[0].image) > 0.0);

    CHECK_THROWS_AS(generate_synthetic(1, 1, 60), ConfigError);
    CHECK_THROWS_AS(generate_synthetic(1, 1, 0), ConfigError);
    CHECK_THROWS_AS(generate_synthetic(1, 0, 64), ConfigError);
}

TEST_CASE("masks are binary and scenes stay in range") {
    std::vector<Sample> samples = generate_synthetic(21, 5, 64);
    for (const auto& s : samples) {
        REQUIRE(s.image.dim(1) == 3);
        REQUIRE(s.mask.dim(1) == 1);
        REQUIRE(s.image.dim(2) == 64);
        REQUIRE(s.mask.dim(3) == 64);
        double fg = 0.0;
        for (Index i = 0; i < s.mask.numel(); ++i) {
            const double v = s.mask.data()[i];
            CHECK((v == 0.0 || v == 1.0));
            fg += v;
        }
        CHECK(fg > 0.0);
        CHECK(fg < static_cast<double>(s.mask.numel()));
        for (Index i = 0; i < s.image.numel(); ++i) {
            CHECK(s.image.data()[i] >= 0.0);
            CHECK(s.image.data()[i] <= 1.0);
        }
    }
}

TEST_CASE("a healthy share of the scenes is genuinely thin") {
    std::vector<Sample> samples = generate_synthetic(42, 10, 256);
    int thin = 0;
    for (const auto& s : samples) {
        const Index w = min_stroke_width(s.mask);
        CHECK(w >= 1);
        CHECK(w <= 3);
        if (w < 256 / 128) ++thin;
    }
    CHECK(thin >= 3);  // width cycle puts 1-px strokes in 2 of every 5 scenes
}

TEST_CASE("horizontal flip mirrors columns and undoes itself") {
    Sample s = generate_synthetic(5, 1, 64)[0];
    Sample f = hflip(s);
    const Index W = 64;
    for (Index y = 0; y < 8; ++y)
        for (Index x = 0; x < W; ++x)
            CHECK(f.mask.at4(0, 0, y, x) == s.mask.at4(0, 0, y, W - 1 - x));
    Sample ff = hflip(f);
    CHECK(max_abs_diff(ff.image, s.image) == 0.0);
    CHECK(max_abs_diff(ff.mask, s.mask) == 0.0);
}

TEST_CASE("augmentation is seeded, bounded and self-consistent") {
    Sample s = generate_synthetic(3, 1, 64)[0];
    AugmentResult r1 = augment(s, 12345);
    AugmentResult r2 = augment(s, 12345);
    CHECK(max_abs_diff(r1.sample.image, r2.sample.image) == 0.0);
    CHECK(max_abs_diff(r1.sample.mask, r2.sample.mask) == 0.0);
    CHECK(r1.flipped == r2.flipped);
    CHECK(r1.crop_area == r2.crop_area);
    CHECK(r1.angle_deg == r2.angle_deg);

    AugmentResult r3 = augment(s, 54321);
    CHECK(max_abs_diff(r1.sample.image, r3.sample.image) > 0.0);

    for (std::uint64_t seed : {11ULL, 12ULL, 13ULL, 14ULL}) {
        AugmentResult r = augment(s, seed);
        CHECK(r.sample.image.same_shape(s.image));
        CHECK(r.sample.mask.same_shape(s.mask));
        CHECK(r.sample.id == s.id);
        CHECK(r.crop_area >= 0.75);
        CHECK(r.crop_area <= 1.0);
        CHECK(std::abs(r.angle_deg) <= 15.0);
        for (Index i = 0; i < r.sample.mask.numel(); ++i) {
            const double v = r.sample.mask.data()[i];
            CHECK((v == 0.0 || v == 1.0));
        }
        for (Index i = 0; i < r.sample.image.numel(); ++i) {
            CHECK(r.sample.image.data()[i] >= 0.0);
            CHECK(r.sample.image.data()[i] <= 1.0);
        }
        // round trips: forward then inverse lands back on the source pixel
        for (double x : {0.0, 17.0, 63.0})
            for (double y : {0.0, 40.0, 63.0}) {
                const auto fw = apply_affine(r.forward, x, y);
                const auto bk = apply_affine(r.inverse, fw[0], fw[1]);
                CHECK(std::abs(bk[0] - x) < 1e-9);
                CHECK(std::abs(bk[1] - y) < 1e-9);
            }
    }
}

TEST_CASE("image and mask ride the same transform") {
    Sample s;
    s.id = "marker";
    s.image = Tensor::zeros({1, 3, 64, 64});
    s.mask = Tensor::zeros({1, 1, 64, 64});
    for (Index y = 29; y <= 33; ++y)
        for (Index x = 29; x <= 33; ++x) {
            s.mask.at4(0, 0, y, x) = 1.0;
            for (Index c = 0; c < 3; ++c) s.image.at4(0, c, y, x) = 1.0;
        }

    for (std::uint64_t seed : {101ULL, 102ULL, 103ULL, 104ULL, 105ULL}) {
        AugmentResult r = augment(s, seed);
        const auto expect = apply_affine(r.forward, 31.0, 31.0);
        const auto mc = centroid(r.sample.mask, 0);
        const auto ic = centroid(r.sample.image, 0);
        CAPTURE(seed);
        CHECK(std::abs(mc[0] - expect[0]) < 1.5);
        CHECK(std::abs(mc[1] - expect[1]) < 1.5);
        CHECK(std::abs(ic[0] - mc[0]) < 1.0);
        CHECK(std::abs(ic[1] - mc[1]) < 1.0);
    }
}

TEST_CASE("datasets survive the disk") {
    namespace fs = std::filesystem;
    const std::string root = "/tmp/mvanet_test_dataset";
    fs::remove_all(root);
    std::vector<Sample> samples = generate_synthetic(5, 2, 64);
    save_dataset(samples, root);

    std::ifstream manifest(root + "/manifest.txt");
    REQUIRE(manifest.good());
    std::string line;
    REQUIRE(std::getline(manifest, line));
    CHECK(line == "synth0000\timages/synth0000.ppm\tmasks/synth0000.pgm");

    std::vector<Sample> loaded = load_dataset(root);
    REQUIRE(loaded.size() == 2);
    for (int i = 0; i < 2; ++i) {
        CHECK(loaded[i].id == samples[i].id);
        CHECK(max_abs_diff(loaded[i].mask, samples[i].mask) == 0.0);
        REQUIRE(loaded[i].image.same_shape(samples[i].image));
        for (Index j = 0; j < samples[i].image.numel(); ++j) {
            const double q = std::floor(samples[i].image.data()[j] * 255.0 + 0.5) / 255.0;
            CHECK(loaded[i].image.data()[j] == doctest::Approx(q).epsilon(1e-12));
        }
    }
    CHECK_THROWS_AS(load_dataset("/tmp/mvanet_no_such_dataset"), IoError);
}

}  // TEST_SUITE
