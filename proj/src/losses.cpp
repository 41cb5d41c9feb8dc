#include "mvanet/losses.hpp"

#include <cmath>
#include <string>

#include "mvanet/errors.hpp"

namespace mvanet {

Tensor boundary_weights(const Tensor& gt) {
    const Index B = gt.dim(0), C = gt.dim(1), H = gt.dim(2), W = gt.dim(3);
    constexpr Index radius = 15;
    constexpr double divisor = 31.0 * 31.0;
    Tensor out(gt.shape());
    std::vector<double> integral((H + 1) * (W + 1));
    for (Index b = 0; b < B; ++b)
        for (Index c = 0; c < C; ++c) {
            const double* plane = gt.data() + ((b * C + c) * H) * W;
            for (Index y = 0; y < H; ++y)
                for (Index x = 0; x < W; ++x)
                    integral[(y + 1) * (W + 1) + (x + 1)] =
                        plane[y * W + x] + integral[y * (W + 1) + (x + 1)] +
                        integral[(y + 1) * (W + 1) + x] - integral[y * (W + 1) + x];
            double* dst = out.data() + ((b * C + c) * H) * W;
            for (Index y = 0; y < H; ++y) {
                const Index y0 = std::max<Index>(0, y - radius);
                const Index y1 = std::min<Index>(H - 1, y + radius);
                for (Index x = 0; x < W; ++x) {
                    const Index x0 = std::max<Index>(0, x - radius);
                    const Index x1 = std::min<Index>(W - 1, x + radius);
                    const double sum = integral[(y1 + 1) * (W + 1) + (x1 + 1)] -
                                       integral[y0 * (W + 1) + (x1 + 1)] -
                                       integral[(y1 + 1) * (W + 1) + x0] +
                                       integral[y0 * (W + 1) + x0];
                    dst[y * W + x] = 1.0 + 5.0 * std::abs(sum / divisor - plane[y * W + x]);
                }
            }
        }
    return out;
}

ad::Var pixel_loss(const ad::Var& pred, const Tensor& gt, const LossOptions& opt) {
    if (!pred->value.same_shape(gt))
        throw GeometryError("prediction " + pred->value.shape_str() +
                            " does not match ground truth " + gt.shape_str());
    ad::Var bce = ad::bce_mean(pred, gt);
    Tensor w = opt.weighted_iou ? boundary_weights(gt) : Tensor::full(gt.shape(), 1.0);
    return ad::add(bce, ad::weighted_iou(pred, gt, w));
}

ad::Var LossBreakdown::combine(const ad::Var& l_f, const std::vector<ad::Var>& l_l,
                               const std::vector<ad::Var>& l_g, const std::vector<ad::Var>& l_a,
                               double lambda_g, double lambda_a) {
    ad::Var t = l_f;
    for (size_t i = 0; i < l_l.size(); ++i) {
        t = ad::add(t, l_l[i]);
        t = ad::add(t, ad::scale(l_g[i], lambda_g));
        if (i < l_a.size()) t = ad::add(t, ad::scale(l_a[i], lambda_a));
    }
    return t;
}

namespace {

ad::Var to_gt_size(const ad::Var& map, const Tensor& gt) {
    if (map->value.dim(2) == gt.dim(2) && map->value.dim(3) == gt.dim(3)) return map;
    return ad::bilinear(map, gt.dim(2), gt.dim(3));
}

} // namespace

LossBreakdown total_loss(const SupervisionSet& supervision, const Tensor& gt,
                         const LossOptions& opt) {
    if (supervision.levels.size() != 5) throw ConfigError("expected 5 supervision levels");
    if (!supervision.final_pred) throw ConfigError("missing final prediction map");

    int gates = 0;
    for (const auto& l : supervision.levels) gates += l.attn_side ? 1 : 0;
    if (gates != 0 && gates != 5)
        throw ConfigError("gate maps present at only " + std::to_string(gates) + " of 5 levels");

    LossBreakdown out;
    out.lambda_g = opt.lambda_g;
    out.lambda_a = opt.lambda_a;
    for (int i = 0; i < 5; ++i) {
        const auto& lvl = supervision.levels[i];
        const std::string where = "level " + std::to_string(i + 1);
        if (!lvl.local_side) throw ConfigError("missing local side map at " + where);
        if (!lvl.global_side) throw ConfigError("missing global side map at " + where);
        out.l_l.push_back(pixel_loss(to_gt_size(lvl.local_side, gt), gt, opt));
        out.l_g.push_back(pixel_loss(to_gt_size(lvl.global_side, gt), gt, opt));
        if (gates == 5) out.l_a.push_back(ad::bce_mean(to_gt_size(lvl.attn_side, gt), gt));
    }
    out.l_f = pixel_loss(to_gt_size(supervision.final_pred, gt), gt, opt);
    out.total = LossBreakdown::combine(out.l_f, out.l_l, out.l_g, out.l_a, opt.lambda_g,
                                       opt.lambda_a);
    return out;
}

} // namespace mvanet
