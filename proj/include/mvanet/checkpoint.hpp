#ifndef MVANET_CHECKPOINT_HPP
#define MVANET_CHECKPOINT_HPP

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "mvanet/params.hpp"
#include "mvanet/tensor.hpp"

namespace mvanet {

struct RunConfig;

/*
 * On-disk model state. Arrays keep registry creation order so a re-written
 * file is byte-identical to the one it was read from.
 */
struct CheckpointData {
    std::uint64_t step = 0;
    std::string config_text;
    std::vector<std::pair<std::string, Tensor>> arrays;
};

// Binary layout, little-endian throughout:
//   "MVANETCK"  u32 version  u64 step
//   u32 config_len, config bytes
//   u32 array_count, then per array:
//     u32 name_len, name bytes, u32 rank, u32 dims[rank], f32 data[numel]
void write_checkpoint(const std::string& path, const CheckpointData& data);
CheckpointData read_checkpoint(const std::string& path);

CheckpointData snapshot(const ParamRegistry& reg, const RunConfig& cfg, std::uint64_t step);
void restore(ParamRegistry& reg, const CheckpointData& data);

} // namespace mvanet

#endif
