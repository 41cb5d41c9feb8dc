#pragma once

#include <memory>
#include <string>
#include <vector>

#include "mvanet/encoder.hpp"
#include "mvanet/mclm.hpp"
#include "mvanet/mcrm.hpp"

namespace mvanet {

// Deep-supervision bundle: per level an assembled-local map, a global map and
// the refinement gate, plus the final full-resolution prediction. Gate maps
// are absent when refinement is switched off; final_pred is filled by the
// prediction head.
struct SupervisionSet {
    struct Level {
        ad::Var local_side, global_side, attn_side;
    };
    std::vector<Level> levels;  // index 0 = level 1 .. 4 = level 5
    ad::Var final_pred;

    Index map_count() const {
        Index n = final_pred ? 1 : 0;
        for (const auto& l : levels) n += (l.local_side ? 1 : 0) + (l.global_side ? 1 : 0) +
                                          (l.attn_side ? 1 : 0);
        return n;
    }
};

// Top-down path: localization exchange once at the deepest level, refinement
// at every stage, lateral skips absorbed FPN-style (1x1 projection, addition,
// 3x3 smoothing). Works on the stacked single-image form, batch = M+1.
class Decoder {
public:
    Decoder(ParamRegistry& reg, const std::string& prefix,
            const std::vector<Index>& enc_channels, Index width, int heads,
            std::vector<int> windows, bool use_mclm, bool use_mcrm);

    struct Result {
        ad::Var d1;  // (M+1,width,h1,w1), order [local_1..local_M, global]
        SupervisionSet supervision;  // final_pred left empty
    };
    Result decode(const PyramidFeatures& pyramid, const PatchGrid& grid) const;

    Index width() const { return width_; }

private:
    Index width_;
    bool use_mclm_, use_mcrm_;
    std::unique_ptr<Mclm> mclm_;
    std::vector<Mcrm> mcrms_;  // index 0 = level 1 .. 4 = level 5
    ad::Var entry_w, entry_b;
    std::vector<ad::Var> lat_w, lat_b;        // laterals for E1..E4
    std::vector<ad::Var> smooth_w, smooth_b;  // post-fusion 3x3, levels 4..1
    std::vector<ad::Var> side_local_w, side_local_b;
    std::vector<ad::Var> side_global_w, side_global_b;
};

} // namespace mvanet
