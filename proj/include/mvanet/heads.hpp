#pragma once

#include <string>

#include "mvanet/geometry.hpp"
#include "mvanet/params.hpp"

namespace mvanet {

// Final prediction head: assembled locals pass through a 3-layer seam-smoothing
// convolution stack (3x3 conv, batch norm, rectified-linear), the upsampled
// global stream and a shallow full-resolution stem are added, and a 1x1
// convolution plus sigmoid emits the full-size map.
class VrmHead {
public:
    VrmHead(ParamRegistry& reg, const std::string& prefix, Index width);

    // (B,3,H,W) image -> (B,width,H/4,W/4) low-level cues.
    ad::Var shallow_features(const ad::Var& image) const;

    // d1: (M+1,width,h,w) stacked [locals..., global]. Returns logits at
    // (1,1,out_h,out_w); use_seam_head=false bypasses the 3-layer stack
    // (direct assemble + add).
    ad::Var pre_sigmoid(const ad::Var& d1, const ad::Var& shallow, const PatchGrid& grid,
                        Index out_h, Index out_w, bool training, bool use_seam_head) const;

    ad::Var predict(const ad::Var& d1, const ad::Var& shallow, const PatchGrid& grid,
                    Index out_h, Index out_w, bool training, bool use_seam_head) const;

private:
    struct ConvBn {
        ad::Var w, b, gamma, beta;
        Tensor* running_mean;
        Tensor* running_var;
    };
    ConvBn make_conv_bn(ParamRegistry& reg, const std::string& prefix, Index width);
    ad::Var apply(const ConvBn& layer, const ad::Var& x, bool training) const;

    ConvBn h1_, h2_, h3_;
    ad::Var stem1_w, stem1_b, stem2_w, stem2_b;
    ad::Var out_w_, out_b_;
};

} // namespace mvanet
