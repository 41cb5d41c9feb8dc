#pragma once

#include <string>
#include <vector>

#include "mvanet/attention.hpp"
#include "mvanet/geometry.hpp"
#include "mvanet/params.hpp"

namespace mvanet {

struct RefinementOutput {
    ad::Var refined;        // (M+1,C,h,w), batch order [local_1..local_M, global]
    ad::Var attention_map;  // (1,1,rows*h,cols*w), sigmoid output at assembled size
};

// Pooled tokens of the per-patch regions of a global feature, concatenated
// along the batch axis so column m holds region m's tokens. Exposed so the
// query/region correspondence can be probed directly.
ad::Var region_pooled_tokens(const ad::Var& global, const PatchGrid& grid,
                             const std::vector<int>& base_windows);

// Refinement exchange at one decoder level: a one-channel sigmoid map gates
// the assembled locals, gated local tokens attend over pooled tokens of their
// own global region, and the refined locals are folded back into the global.
struct Mcrm {
    ad::Var conv_w, conv_b;  // 1x1 conv C->1 producing the gate logits
    ad::Var wq;              // local-query projection (C,C)
    KvProjection kv;
    Mhca attn;
    LayerNorm ln1, ln2;
    Ffn ffn;
    std::vector<int> base_windows;

    Mcrm(ParamRegistry& reg, const std::string& prefix, Index channels, int heads,
         std::vector<int> base_windows);

    // batch: (M+1,C,h,w) laid out [local_1..local_M, global].
    RefinementOutput refine(const ad::Var& batch, const PatchGrid& grid) const;
};

} // namespace mvanet
