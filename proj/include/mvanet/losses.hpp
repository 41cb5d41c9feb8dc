#pragma once

#include <vector>

#include "mvanet/decoder.hpp"
#include "mvanet/tensor.hpp"

namespace mvanet {

struct LossOptions {
    double lambda_g = 0.3;
    double lambda_a = 0.3;
    bool weighted_iou = true;  // boundary-emphasis weights; false = plain IoU
};

struct LossBreakdown {
    ad::Var l_f;
    std::vector<ad::Var> l_l, l_g, l_a;  // one entry per level, index 0 = level 1
    ad::Var total;
    double lambda_g = 0.3;
    double lambda_a = 0.3;

    // total = l_f + sum_i (l_l + lambda_g*l_g + lambda_a*l_a), by construction.
    static ad::Var combine(const ad::Var& l_f, const std::vector<ad::Var>& l_l,
                           const std::vector<ad::Var>& l_g, const std::vector<ad::Var>& l_a,
                           double lambda_g, double lambda_a);
};

// 31x31 box mean of the ground truth, zero padded with a constant divisor.
Tensor boundary_weights(const Tensor& gt);

// BCE + weighted IoU on probability maps; shapes must match.
ad::Var pixel_loss(const ad::Var& pred, const Tensor& gt, const LossOptions& opt = {});

// Deep-supervised combination: pixel_loss on the local/global side maps and the
// final map, plain BCE on the gate maps. Maps are bilinearly brought to gt
// resolution first. Throws naming the level and stream when a map is missing;
// gate terms are skipped only when refinement was off for the whole set.
LossBreakdown total_loss(const SupervisionSet& supervision, const Tensor& gt,
                         const LossOptions& opt = {});

} // namespace mvanet
