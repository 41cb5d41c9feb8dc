#include "mvanet/heads.hpp"

#include "mvanet/errors.hpp"

namespace mvanet {

VrmHead::ConvBn VrmHead::make_conv_bn(ParamRegistry& reg, const std::string& prefix,
                                      Index width) {
    return ConvBn{
        reg.uniform(prefix + ".w", {width, width, 3, 3}, width * 9),
        reg.uniform(prefix + ".b", {width}, width * 9),
        reg.constant(prefix + ".bn.gamma", {width}, 1.0),
        reg.constant(prefix + ".bn.beta", {width}, 0.0),
        &reg.buffer(prefix + ".bn.running_mean", {width}, 0.0),
        &reg.buffer(prefix + ".bn.running_var", {width}, 1.0),
    };
}

VrmHead::VrmHead(ParamRegistry& reg, const std::string& prefix, Index width)
    : h1_(make_conv_bn(reg, prefix + ".head1", width)),
      h2_(make_conv_bn(reg, prefix + ".head2", width)),
      h3_(make_conv_bn(reg, prefix + ".head3", width)),
      stem1_w(reg.uniform(prefix + ".stem1.w", {width, 3, 3, 3}, 27)),
      stem1_b(reg.uniform(prefix + ".stem1.b", {width}, 27)),
      stem2_w(reg.uniform(prefix + ".stem2.w", {width, width, 3, 3}, width * 9)),
      stem2_b(reg.uniform(prefix + ".stem2.b", {width}, width * 9)),
      out_w_(reg.uniform(prefix + ".out.w", {1, width, 1, 1}, width)),
      out_b_(reg.uniform(prefix + ".out.b", {1}, width)) {}

ad::Var VrmHead::apply(const ConvBn& layer, const ad::Var& x, bool training) const {
    ad::Var y = ad::conv2d(x, layer.w, layer.b, 1, 1);
    y = ad::batch_norm2d(y, layer.gamma, layer.beta, layer.running_mean, layer.running_var,
                         training, 0.1, 1e-5);
    return ad::relu(y);
}

ad::Var VrmHead::shallow_features(const ad::Var& image) const {
    ad::Var x = ad::relu(ad::conv2d(image, stem1_w, stem1_b, 2, 1));
    return ad::conv2d(x, stem2_w, stem2_b, 2, 1);
}

ad::Var VrmHead::pre_sigmoid(const ad::Var& d1, const ad::Var& shallow, const PatchGrid& grid,
                             Index out_h, Index out_w, bool training,
                             bool use_seam_head) const {
    ViewParts parts = split_view_batch(d1, grid);
    ad::Var x = assemble_tiles(parts.locals, grid);
    if (use_seam_head) {
        x = apply(h1_, x, training);
        x = apply(h2_, x, training);
        x = apply(h3_, x, training);
    }
    const Index ah = x->value.dim(2);
    const Index aw = x->value.dim(3);
    x = ad::add(x, ad::bilinear(parts.global, ah, aw));
    if (shallow->value.dim(2) != ah || shallow->value.dim(3) != aw ||
        shallow->value.dim(1) != x->value.dim(1))
        throw GeometryError("shallow features " + shallow->value.shape_str() +
                            " incompatible with assembled locals " + x->value.shape_str());
    x = ad::add(x, shallow);
    x = ad::bilinear(x, out_h, out_w);
    return ad::conv2d(x, out_w_, out_b_, 1, 0);
}

ad::Var VrmHead::predict(const ad::Var& d1, const ad::Var& shallow, const PatchGrid& grid,
                         Index out_h, Index out_w, bool training, bool use_seam_head) const {
    return ad::sigmoid(pre_sigmoid(d1, shallow, grid, out_h, out_w, training, use_seam_head));
}

} // namespace mvanet
