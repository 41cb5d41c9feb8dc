#include "mvanet/encoder.hpp"

#include <utility>

#include "mvanet/errors.hpp"

namespace mvanet {

ConvResidualBackbone::ConvResidualBackbone(ParamRegistry& reg, const std::string& prefix,
                                           std::vector<Index> widths)
    : widths_(std::move(widths)) {
    if (widths_.size() != 5) throw ConfigError("backbone needs exactly 5 stage widths");
    Index in = 3;
    for (int i = 0; i < 5; ++i) {
        const Index out = widths_[i];
        const Index k = (i == 0) ? 4 : 3;
        const std::string p = prefix + ".stage" + std::to_string(i + 1);
        Stage s{
            reg.uniform(p + ".down.w", {out, in, k, k}, in * k * k),
            reg.uniform(p + ".down.b", {out}, in * k * k),
            reg.uniform(p + ".res1.w", {out, out, 3, 3}, out * 9),
            reg.uniform(p + ".res1.b", {out}, out * 9),
            reg.uniform(p + ".res2.w", {out, out, 3, 3}, out * 9),
            reg.uniform(p + ".res2.b", {out}, out * 9),
        };
        stages_.push_back(std::move(s));
        in = out;
    }
}

PyramidFeatures ConvResidualBackbone::forward(const ad::Var& views) const {
    const Index h = views->value.dim(2);
    const Index w = views->value.dim(3);
    if (views->value.dim(1) != 3)
        throw ConfigError("backbone expects 3 input channels, got " +
                          std::to_string(views->value.dim(1)));
    if (h % 32 != 0 || w % 32 != 0)
        throw ConfigError("view size " + std::to_string(h) + "x" + std::to_string(w) +
                          " not divisible by 32");

    PyramidFeatures out;
    out.strides = {4, 8, 16, 32, 32};
    out.channels = widths_;
    ad::Var x = views;
    for (int i = 0; i < 5; ++i) {
        const Stage& s = stages_[i];
        const int stride = (i == 0) ? 4 : (i == 4) ? 1 : 2;
        const int pad = (i == 0) ? 0 : 1;
        x = ad::conv2d(x, s.down_w, s.down_b, stride, pad);
        ad::Var r = ad::conv2d(ad::gelu(x), s.r1_w, s.r1_b, 1, 1);
        r = ad::conv2d(ad::gelu(r), s.r2_w, s.r2_b, 1, 1);
        x = ad::add(x, r);
        out.levels.push_back(x);
    }
    return out;
}

PyramidFeatures encode(const Backbone& backbone, const ViewBundle& bundle) {
    return backbone.forward(ad::constant(stack_views(bundle)));
}

} // namespace mvanet
