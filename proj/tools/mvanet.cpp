#include <cstdint>
#include <string>

#include <CLI11.hpp>

#include "mvanet/commands.hpp"

int main(int argc, char** argv) {
    CLI::App app{"multi-view segmentation pipeline"};
    app.require_subcommand(1);

    std::uint64_t seed = 0;
    int count = 4;
    mvanet::Index size = 256;
    std::string out, config, checkpoint, data, image;

    auto* gen = app.add_subcommand("gen-data", "write a synthetic dataset");
    gen->add_option("--seed", seed, "generator seed")->capture_default_str();
    gen->add_option("--count", count, "number of samples")->capture_default_str();
    gen->add_option("--size", size, "square image side")->capture_default_str();
    gen->add_option("--out", out, "dataset directory")->required();

    auto* train = app.add_subcommand("train", "train from a config file");
    train->add_option("--config", config, "config file")->envname("MVANET_CONFIG");

    auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on a dataset");
    eval->add_option("--checkpoint", checkpoint, "checkpoint file")->required();
    eval->add_option("--data", data, "dataset directory")->required();
    eval->add_option("--out", out, "report directory")->capture_default_str()
        ->default_val(".");

    auto* infer = app.add_subcommand("infer", "predict one image");
    infer->add_option("--checkpoint", checkpoint, "checkpoint file")->required();
    infer->add_option("--image", image, "input image (binary PPM)")->required();
    infer->add_option("--out", out, "output prediction (binary PGM)")->required();

    auto* bench = app.add_subcommand("bench", "attention cost and throughput");
    bench->add_option("--config", config, "config file")->envname("MVANET_CONFIG");

    CLI11_PARSE(app, argc, argv);

    if (gen->parsed()) return mvanet::cmd_gen_data(seed, count, size, out);
    if (train->parsed()) return mvanet::cmd_train(config);
    if (eval->parsed()) return mvanet::cmd_eval(checkpoint, data, out);
    if (infer->parsed()) return mvanet::cmd_infer(checkpoint, image, out);
    if (bench->parsed()) return mvanet::cmd_bench(config);
    return 1;
}
