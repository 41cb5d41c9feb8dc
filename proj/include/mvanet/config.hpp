#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mvanet/losses.hpp"
#include "mvanet/model.hpp"

namespace mvanet {

struct RunConfig {
    ModelConfig model;
    std::vector<int> strides{4, 8, 16, 32, 32};  // documented ladder, validated fixed
    LossOptions loss;

    double lr = 1e-5;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    int epochs = 80;
    std::uint64_t seed = 0;
    int checkpoint_every = 50;
    bool augment = true;

    std::string data_dir;
    std::string out_dir = ".";
};

// Plain-text "key = value" under [model]/[loss]/[train]/[paths]; '#' comments.
// Unknown sections or keys are named violations.
RunConfig parse_config_text(const std::string& text);
RunConfig load_config(const std::string& path);
std::string config_to_text(const RunConfig& cfg);  // canonical, parse-stable

void validate_run_config(const RunConfig& cfg);

// $MVANET_CONFIG, or empty when unset.
std::string default_config_path();

} // namespace mvanet
