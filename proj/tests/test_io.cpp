#include <doctest.h>

#include <cmath>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>

#include "mvanet/checkpoint.hpp"
#include "mvanet/config.hpp"
#include "mvanet/errors.hpp"
#include "mvanet/image_io.hpp"
#include "test_oracles.hpp"

using namespace mvanet;
using oracle::random_tensor;

namespace {

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in.good());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void spit(const std::string& path, const std::string& bytes) {
    std::ofstream out(path, std::ios::binary);
    REQUIRE(out.good());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

double quantized(double v) {
    double q = std::floor(v * 255.0 + 0.5);
    q = std::min(255.0, std::max(0.0, q));
    return q / 255.0;
}

const char* kConfigText = R"(# desk-scale run
[model]
image_size = 128
patch_rows = 2
patch_cols = 2
widths = 8, 8, 16, 16, 16
decoder_width = 8
heads = 2
windows = 4, 8, 16
mclm = true
mcrm = false
vrm = true
views = multi

[loss]
lambda_g = 0.25
lambda_a = 0.35
weighted_iou = false

[train]
lr = 0.0001
beta1 = 0.9
beta2 = 0.999
adam_eps = 1e-8
epochs = 3
seed = 9
checkpoint_every = 2
augment = false

[paths]
data = /tmp/ds
out = /tmp/out
)";

} // namespace

TEST_SUITE("io") {

TEST_CASE("pixmaps round-trip to their quantized values") {
    Tensor image = random_tensor({1, 3, 6, 5}, 1, -0.1, 1.1);  // rim values exercise clamping
    const std::string ppm = "/tmp/mvanet_test.ppm";
    write_ppm(ppm, image);
    Tensor back = read_ppm(ppm);
    REQUIRE(back.same_shape(image));
    for (Index i = 0; i < image.numel(); ++i)
        CHECK(back.data()[i] == doctest::Approx(quantized(image.data()[i])).epsilon(1e-12));

    Tensor map = random_tensor({1, 1, 4, 7}, 2, 0.0, 1.0);
    const std::string pgm = "/tmp/mvanet_test.pgm";
    write_pgm(pgm, map);
    Tensor mback = read_pgm(pgm);
    REQUIRE(mback.same_shape(map));
    for (Index i = 0; i < map.numel(); ++i)
        CHECK(mback.data()[i] == doctest::Approx(quantized(map.data()[i])).epsilon(1e-12));

    write_ppm(ppm, image);
    Tensor again = read_ppm(ppm);
    for (Index i = 0; i < image.numel(); ++i) CHECK(again.data()[i] == back.data()[i]);
}

TEST_CASE("malformed image files are rejected") {
    CHECK_THROWS_AS(read_ppm("/tmp/mvanet_absent.ppm"), IoError);
    spit("/tmp/mvanet_bad1.ppm", "P5\n2 2\n255\n\0\0\0\0");
    CHECK_THROWS_AS(read_ppm("/tmp/mvanet_bad1.ppm"), IoError);
    spit("/tmp/mvanet_bad2.ppm", "P6\n2 2\n127\n");
    CHECK_THROWS_AS(read_ppm("/tmp/mvanet_bad2.ppm"), IoError);
    spit("/tmp/mvanet_bad3.ppm", "P6\n2 2\n255\nxyz");
    CHECK_THROWS_AS(read_ppm("/tmp/mvanet_bad3.ppm"), IoError);
    spit("/tmp/mvanet_bad4.pgm", "P5\n0 2\n255\n");
    CHECK_THROWS_AS(read_pgm("/tmp/mvanet_bad4.pgm"), IoError);
    CHECK_THROWS_AS(write_ppm("/tmp/mvanet_bad5.ppm", random_tensor({1, 1, 2, 2}, 3)), IoError);
    CHECK_THROWS_AS(write_pgm("/tmp/mvanet_bad6.pgm", random_tensor({1, 3, 2, 2}, 4)), IoError);
}

TEST_CASE("config text parses, serializes and parses again unchanged") {
    RunConfig cfg = parse_config_text(kConfigText);
    CHECK(cfg.model.image_size == 128);
    CHECK(cfg.model.grid.rows == 2);
    CHECK(cfg.model.grid.cols == 2);
    CHECK(cfg.model.widths == std::vector<Index>{8, 8, 16, 16, 16});
    CHECK(cfg.model.decoder_width == 8);
    CHECK(cfg.model.heads == 2);
    CHECK(cfg.model.windows == std::vector<int>{4, 8, 16});
    CHECK(cfg.model.use_mclm);
    CHECK(!cfg.model.use_mcrm);
    CHECK(cfg.model.use_vrm);
    CHECK(cfg.model.views == ViewMode::multi);
    CHECK(cfg.loss.lambda_g == doctest::Approx(0.25));
    CHECK(cfg.loss.lambda_a == doctest::Approx(0.35));
    CHECK(!cfg.loss.weighted_iou);
    CHECK(cfg.lr == doctest::Approx(1e-4));
    CHECK(cfg.epochs == 3);
    CHECK(cfg.seed == 9);
    CHECK(cfg.checkpoint_every == 2);
    CHECK(!cfg.augment);
    CHECK(cfg.data_dir == "/tmp/ds");
    CHECK(cfg.out_dir == "/tmp/out");

    const std::string canon = config_to_text(cfg);
    RunConfig cfg2 = parse_config_text(canon);
    CHECK(config_to_text(cfg2) == canon);
    CHECK(cfg2.model.image_size == cfg.model.image_size);
    CHECK(cfg2.lr == cfg.lr);
    CHECK(cfg2.seed == cfg.seed);

    RunConfig defaults;
    CHECK(config_to_text(parse_config_text(config_to_text(defaults))) ==
          config_to_text(defaults));
}

TEST_CASE("config violations are called out by name") {
    auto msg_of = [](const std::string& text) {
        try {
            parse_config_text(text);
            return std::string("<no throw>");
        } catch (const ConfigError& e) {
            return std::string(e.what());
        }
    };
    CHECK(msg_of("[optimizer]\nlr = 1\n").find("optimizer") != std::string::npos);
    CHECK(msg_of("[model]\nfancy = 1\n").find("model.fancy") != std::string::npos);
    CHECK(msg_of("[train]\nlr = pony\n") != "<no throw>");
    CHECK(msg_of("[model]\nimage_size = 100\n") != "<no throw>");
    CHECK(msg_of("[model]\npatch_rows = 5\npatch_cols = 5\n") != "<no throw>");
    CHECK(msg_of("[model]\nstrides = 4, 8, 16, 32, 64\n") != "<no throw>");
    CHECK(msg_of("[train]\nlr = -1\n") != "<no throw>");
    CHECK(msg_of("[train]\nbeta1 = 1.0\n") != "<no throw>");
    CHECK(msg_of("[train]\nepochs = 0\n") != "<no throw>");
    CHECK(msg_of("[model]\nwidths = 16, 32, 64, 130, 130\n") != "<no throw>");
    CHECK(msg_of("[model]\nviews = sideways\n") != "<no throw>");
    CHECK_THROWS_AS(load_config("/tmp/mvanet_no_such_config.ini"), IoError);
}

TEST_CASE("checkpoints are byte-stable across read and write") {
    ParamRegistry reg(5);
    reg.uniform("enc.w", {3, 4}, 12);
    reg.constant("bn.gamma", {4}, 1.0);
    reg.buffer("bn.mean", {4}, 0.0);
    reg.set_value("enc.w", random_tensor({3, 4}, 77));

    RunConfig cfg;
    CheckpointData snap = snapshot(reg, cfg, 17);
    CHECK(snap.step == 17);
    CHECK(snap.config_text == config_to_text(cfg));
    REQUIRE(snap.arrays.size() == 3);
    CHECK(snap.arrays[0].first == "enc.w");

    const std::string p1 = "/tmp/mvanet_test1.ckpt";
    const std::string p2 = "/tmp/mvanet_test2.ckpt";
    write_checkpoint(p1, snap);
    CheckpointData back = read_checkpoint(p1);
    CHECK(back.step == snap.step);
    CHECK(back.config_text == snap.config_text);
    REQUIRE(back.arrays.size() == snap.arrays.size());
    for (size_t i = 0; i < snap.arrays.size(); ++i) {
        CHECK(back.arrays[i].first == snap.arrays[i].first);
        REQUIRE(back.arrays[i].second.same_shape(snap.arrays[i].second));
        for (Index j = 0; j < snap.arrays[i].second.numel(); ++j)
            CHECK(back.arrays[i].second.data()[j] == snap.arrays[i].second.data()[j]);
    }
    write_checkpoint(p2, back);
    CHECK(slurp(p1) == slurp(p2));
}

TEST_CASE("restore rebuilds the saved state wherever it lands") {
    ParamRegistry a(5);
    a.uniform("enc.w", {3, 4}, 12);
    a.constant("bn.gamma", {4}, 1.0);
    a.buffer("bn.mean", {4}, 0.5);
    RunConfig cfg;
    CheckpointData snap = snapshot(a, cfg, 3);

    ParamRegistry b(99);  // different init; same structure
    b.uniform("enc.w", {3, 4}, 12);
    b.constant("bn.gamma", {4}, 1.0);
    b.buffer("bn.mean", {4}, 0.0);
    restore(b, snap);
    for (const auto& [name, value] : snap.arrays) {
        Tensor got = b.value_of(name);
        REQUIRE(got.same_shape(value));
        for (Index j = 0; j < value.numel(); ++j) CHECK(got.data()[j] == value.data()[j]);
    }

    CheckpointData ghost = snap;
    ghost.arrays.emplace_back("ghost.w", Tensor::zeros({2}));
    try {
        restore(b, ghost);
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        CHECK(std::string(e.what()).find("ghost.w") != std::string::npos);
    }
}

TEST_CASE("damaged checkpoint files are rejected") {
    ParamRegistry reg(5);
    reg.uniform("enc.w", {2, 2}, 4);
    RunConfig cfg;
    const std::string path = "/tmp/mvanet_test3.ckpt";
    write_checkpoint(path, snapshot(reg, cfg, 1));
    std::string bytes = slurp(path);

    std::string bad_magic = bytes;
    bad_magic[0] = 'X';
    spit("/tmp/mvanet_badmagic.ckpt", bad_magic);
    CHECK_THROWS_AS(read_checkpoint("/tmp/mvanet_badmagic.ckpt"), IoError);

    std::string bad_version = bytes;
    bad_version[8] = 9;  // u32 version right after the magic
    spit("/tmp/mvanet_badver.ckpt", bad_version);
    CHECK_THROWS_AS(read_checkpoint("/tmp/mvanet_badver.ckpt"), IoError);

    spit("/tmp/mvanet_short.ckpt", bytes.substr(0, 10));
    CHECK_THROWS_AS(read_checkpoint("/tmp/mvanet_short.ckpt"), IoError);

    spit("/tmp/mvanet_trunc.ckpt", bytes.substr(0, bytes.size() - 3));
    CHECK_THROWS_AS(read_checkpoint("/tmp/mvanet_trunc.ckpt"), IoError);

    CHECK_THROWS_AS(read_checkpoint("/tmp/mvanet_absent.ckpt"), IoError);
}

}  // TEST_SUITE
