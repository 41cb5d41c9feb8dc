#include "mvanet/mcrm.hpp"

#include <utility>

#include "mvanet/errors.hpp"

namespace mvanet {

ad::Var region_pooled_tokens(const ad::Var& global, const PatchGrid& grid,
                             const std::vector<int>& base_windows) {
    std::vector<ad::Var> regions = split_tiles(global, grid);
    const Index rh = regions[0]->value.dim(2);
    const Index rw = regions[0]->value.dim(3);
    std::vector<int> windows = clip_windows(base_windows, rh, rw);
    std::vector<ad::Var> toks;
    toks.reserve(regions.size());
    for (const auto& r : regions) toks.push_back(pooled_tokens(r, windows));
    return ad::concat(toks, 1);  // (n_pooled, M, C)
}

Mcrm::Mcrm(ParamRegistry& reg, const std::string& prefix, Index channels, int heads,
           std::vector<int> base_windows_)
    : conv_w(reg.uniform(prefix + ".gate.w", {1, channels, 1, 1}, channels)),
      conv_b(reg.uniform(prefix + ".gate.b", {1}, channels)),
      wq(reg.uniform(prefix + ".wq", {channels, channels}, channels)),
      kv(reg, prefix + ".kv", channels),
      attn(reg, prefix + ".attn", channels, heads),
      ln1(reg, prefix + ".ln1", channels),
      ln2(reg, prefix + ".ln2", channels),
      ffn(reg, prefix + ".ffn", channels),
      base_windows(std::move(base_windows_)) {}

RefinementOutput Mcrm::refine(const ad::Var& batch, const PatchGrid& grid) const {
    ViewParts parts = split_view_batch(batch, grid);
    const Index M = grid.patches();
    const Index C = parts.global->value.dim(1);
    const Index h = parts.global->value.dim(2);
    const Index w = parts.global->value.dim(3);
    if (h % grid.rows != 0 || w % grid.cols != 0)
        throw GeometryError("global feature " + parts.global->value.shape_str() +
                            " not partitionable by a " + std::to_string(grid.rows) + "x" +
                            std::to_string(grid.cols) + " grid");

    ad::Var gate = ad::sigmoid(ad::conv2d(parts.global, conv_w, conv_b, 1, 0));
    ad::Var a = ad::bilinear(gate, grid.rows * h, grid.cols * w);

    ad::Var filtered = ad::mul_gate(assemble_tiles(parts.locals, grid), a);
    std::vector<ad::Var> tiles = split_tiles(filtered, grid);

    Tensor pe = positional_encoding(C, h, w);
    std::vector<ad::Var> toks;
    toks.reserve(M);
    for (const auto& tile : tiles) toks.push_back(ad::tokenize(ad::add_const(tile, pe)));
    ad::Var q_src = ad::concat(toks, 1);  // (h*w, M, C)
    ad::Var q = ad::linear(q_src, wq, nullptr);

    auto [k, v] = kv(region_pooled_tokens(parts.global, grid, base_windows));

    ad::Var t = ad::add(q_src, ln1(attn(q, k, v)));
    t = ad::add(t, ln2(ffn(t)));

    std::vector<ad::Var> refined;
    refined.reserve(M + 1);
    for (Index m = 0; m < M; ++m)
        refined.push_back(ad::untokenize(ad::slice(t, 1, m, 1), h, w));
    ad::Var folded = ad::bilinear(assemble_tiles(refined, grid), h, w);
    refined.push_back(ad::add(parts.global, folded));
    return {ad::concat(refined, 0), a};
}

} // namespace mvanet
