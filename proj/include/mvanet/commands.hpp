#ifndef MVANET_COMMANDS_HPP
#define MVANET_COMMANDS_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "mvanet/config.hpp"

namespace mvanet {

// Localization-attention cost, pooled K/V source vs every-pixel K/V source at
// identical query/channel shapes. Multiply counts cover the K/V projection
// and the two attention matrix products.
struct AttentionBench {
    Index q_tokens = 0;
    Index full_tokens = 0;
    Index pooled_tokens = 0;
    double full_multiplies = 0.0;
    double pooled_multiplies = 0.0;
    double reduction_percent = 0.0;  // informational, measured from the counts
    double full_ms = 0.0;
    double pooled_ms = 0.0;
};

AttentionBench bench_attention(Index channels, int heads, Index q_side, Index kv_side,
                               const std::vector<int>& windows);

struct BenchReport {
    AttentionBench attention;
    double forward_ms = 0.0;
    double images_per_second = 0.0;
};

BenchReport run_bench(const RunConfig& cfg);

// CLI entry points; each prints progress to stdout and returns a process exit
// code, mapping any failure to a named error on stderr.
int cmd_gen_data(std::uint64_t seed, int count, Index size, const std::string& out_dir);
int cmd_train(const std::string& config_path);
int cmd_eval(const std::string& checkpoint_path, const std::string& data_dir,
             const std::string& out_dir);
int cmd_infer(const std::string& checkpoint_path, const std::string& image_path,
              const std::string& out_path);
int cmd_bench(const std::string& config_path);

} // namespace mvanet

#endif
