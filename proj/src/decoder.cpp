#include "mvanet/decoder.hpp"

#include <utility>

#include "mvanet/errors.hpp"

namespace mvanet {

Decoder::Decoder(ParamRegistry& reg, const std::string& prefix,
                 const std::vector<Index>& enc_channels, Index width, int heads,
                 std::vector<int> windows, bool use_mclm, bool use_mcrm)
    : width_(width), use_mclm_(use_mclm), use_mcrm_(use_mcrm) {
    if (enc_channels.size() != 5) throw ConfigError("decoder expects a 5-level pyramid");
    mclm_ = std::make_unique<Mclm>(reg, prefix + ".mclm", enc_channels[4], heads, windows);
    for (int i = 1; i <= 5; ++i)
        mcrms_.emplace_back(reg, prefix + ".mcrm" + std::to_string(i), width, heads, windows);
    entry_w = reg.uniform(prefix + ".entry.w", {width, enc_channels[4], 1, 1}, enc_channels[4]);
    entry_b = reg.uniform(prefix + ".entry.b", {width}, enc_channels[4]);
    for (int i = 0; i < 4; ++i) {
        const std::string li = std::to_string(i + 1);
        lat_w.push_back(reg.uniform(prefix + ".lat" + li + ".w", {width, enc_channels[i], 1, 1},
                                    enc_channels[i]));
        lat_b.push_back(reg.uniform(prefix + ".lat" + li + ".b", {width}, enc_channels[i]));
        smooth_w.push_back(
            reg.uniform(prefix + ".smooth" + li + ".w", {width, width, 3, 3}, width * 9));
        smooth_b.push_back(reg.uniform(prefix + ".smooth" + li + ".b", {width}, width * 9));
    }
    for (int i = 1; i <= 5; ++i) {
        const std::string li = std::to_string(i);
        side_local_w.push_back(
            reg.uniform(prefix + ".side_local" + li + ".w", {1, width, 1, 1}, width));
        side_local_b.push_back(reg.uniform(prefix + ".side_local" + li + ".b", {1}, width));
        side_global_w.push_back(
            reg.uniform(prefix + ".side_global" + li + ".w", {1, width, 1, 1}, width));
        side_global_b.push_back(reg.uniform(prefix + ".side_global" + li + ".b", {1}, width));
    }
}

namespace {

// Encoder batches run [global, locals...]; the stacked decoder form runs
// [locals..., global]. One reorder at each boundary crossing.
ad::Var to_locals_first(const ad::Var& batch, Index m) {
    std::vector<ad::Var> parts;
    parts.reserve(m + 1);
    for (Index i = 0; i < m; ++i) parts.push_back(ad::slice(batch, 0, 1 + i, 1));
    parts.push_back(ad::slice(batch, 0, 0, 1));
    return ad::concat(parts, 0);
}

} // namespace

Decoder::Result Decoder::decode(const PyramidFeatures& pyramid, const PatchGrid& grid) const {
    if (pyramid.levels.size() != 5) throw ConfigError("decoder expects a 5-level pyramid");
    const Index M = grid.patches();
    const ad::Var& e5 = pyramid.levels[4];
    if (e5->value.dim(0) != M + 1)
        throw PartitionError("pyramid batch " + std::to_string(e5->value.dim(0)) +
                             " does not hold " + std::to_string(M) + " locals plus a global");

    ad::Var x;
    if (use_mclm_) {
        ad::Var g = ad::slice(e5, 0, 0, 1);
        std::vector<ad::Var> locals;
        for (Index m = 0; m < M; ++m) locals.push_back(ad::slice(e5, 0, 1 + m, 1));
        auto [g2, l2] = mclm_->localize(g, locals, grid);
        l2.push_back(g2);
        x = ad::concat(l2, 0);
    } else {
        x = to_locals_first(e5, M);
    }
    x = ad::conv2d(x, entry_w, entry_b, 1, 0);

    Result res;
    res.supervision.levels.resize(5);
    for (int i = 5; i >= 1; --i) {
        SupervisionSet::Level& lvl = res.supervision.levels[i - 1];
        if (use_mcrm_) {
            RefinementOutput ro = mcrms_[i - 1].refine(x, grid);
            x = ro.refined;
            lvl.attn_side = ro.attention_map;
        }
        ViewParts parts = split_view_batch(x, grid);
        ad::Var assembled = assemble_tiles(parts.locals, grid);
        lvl.local_side =
            ad::sigmoid(ad::conv2d(assembled, side_local_w[i - 1], side_local_b[i - 1], 1, 0));
        lvl.global_side =
            ad::sigmoid(ad::conv2d(parts.global, side_global_w[i - 1], side_global_b[i - 1], 1, 0));

        if (i > 1) {
            const int factor = pyramid.strides[i - 1] / pyramid.strides[i - 2];
            if (factor != 1 && factor != 2)
                throw ConfigError("stride step " + std::to_string(pyramid.strides[i - 1]) + "->" +
                                  std::to_string(pyramid.strides[i - 2]) +
                                  " has no x2 upsampling plan");
            if (factor == 2)
                x = ad::bilinear(x, 2 * x->value.dim(2), 2 * x->value.dim(3));
            ad::Var lateral = ad::conv2d(to_locals_first(pyramid.levels[i - 2], M), lat_w[i - 2],
                                         lat_b[i - 2], 1, 0);
            if (lateral->value.dim(2) != x->value.dim(2) ||
                lateral->value.dim(3) != x->value.dim(3))
                throw ConfigError("skip at level " + std::to_string(i - 1) +
                                  " does not match the upsampling plan");
            x = ad::conv2d(ad::add(x, lateral), smooth_w[i - 2], smooth_b[i - 2], 1, 1);
        }
    }
    res.d1 = x;
    return res;
}

} // namespace mvanet
