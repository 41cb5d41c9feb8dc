#pragma once

#include <string>
#include <utility>
#include <vector>

#include "mvanet/attention.hpp"
#include "mvanet/geometry.hpp"
#include "mvanet/params.hpp"

namespace mvanet {

// Localization exchange at the deepest level: global tokens attend over
// multi-granularity pooled tokens of the assembled locals, then each local
// attends over its slice of the updated global tokens.
struct Mclm {
    ad::Var wq;   // global-query projection (C,C)
    KvProjection kv;
    Mhca attn_global;
    LayerNorm ln1, ln2;
    Ffn ffn;
    ad::Var wqm;  // local-query projection, shared across patches (C,C)
    Mhca attn_local;
    std::vector<int> windows;

    Mclm(ParamRegistry& reg, const std::string& prefix, Index channels, int heads,
         std::vector<int> windows);

    // global (B,C,s,s), locals = M maps of the same shape in row-major patch
    // order. Returns the updated global and the M updated locals.
    std::pair<ad::Var, std::vector<ad::Var>> localize(const ad::Var& global,
                                                      const std::vector<ad::Var>& locals,
                                                      const PatchGrid& grid) const;
};

} // namespace mvanet
