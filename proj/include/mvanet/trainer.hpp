#ifndef MVANET_TRAINER_HPP
#define MVANET_TRAINER_HPP

#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

#include "mvanet/config.hpp"
#include "mvanet/data.hpp"
#include "mvanet/model.hpp"

namespace mvanet {

struct TrainResult {
    std::vector<double> totals;  // per-step total loss
    std::string final_checkpoint;
    std::uint64_t steps = 0;
};

/*
 * One step per epoch: every image is forwarded on its own (expanded to its
 * view batch), gradients accumulate over the whole dataset, then a single
 * Adam update at constant learning rate is applied on the summed loss.
 * Everything (init, sample order, augmentation draws) is a pure function of
 * the config seed.
 */
class Trainer {
public:
    explicit Trainer(const RunConfig& cfg);

    TrainResult run(const std::vector<Sample>& dataset, std::ostream& log);

    ParamRegistry& registry() { return reg_; }
    const MvaNet& model() const { return model_; }
    const RunConfig& config() const { return cfg_; }

private:
    RunConfig cfg_;
    ParamRegistry reg_;
    MvaNet model_;
};

// Loads the dataset named by cfg paths and trains in out_dir.
TrainResult train_from_config(const RunConfig& cfg, std::ostream& log);

} // namespace mvanet

#endif
