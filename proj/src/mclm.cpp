#include "mvanet/mclm.hpp"

#include <utility>

#include "mvanet/errors.hpp"

namespace mvanet {

Mclm::Mclm(ParamRegistry& reg, const std::string& prefix, Index channels, int heads,
           std::vector<int> windows_)
    : wq(reg.uniform(prefix + ".wq", {channels, channels}, channels)),
      kv(reg, prefix + ".kv", channels),
      attn_global(reg, prefix + ".attn_global", channels, heads),
      ln1(reg, prefix + ".ln1", channels),
      ln2(reg, prefix + ".ln2", channels),
      ffn(reg, prefix + ".ffn", channels),
      wqm(reg.uniform(prefix + ".wqm", {channels, channels}, channels)),
      attn_local(reg, prefix + ".attn_local", channels, heads),
      windows(std::move(windows_)) {}

std::pair<ad::Var, std::vector<ad::Var>> Mclm::localize(const ad::Var& global,
                                                        const std::vector<ad::Var>& locals,
                                                        const PatchGrid& grid) const {
    const Index M = grid.patches();
    if (static_cast<Index>(locals.size()) != M)
        throw GeometryError("expected " + std::to_string(M) + " local views, got " +
                            std::to_string(locals.size()));
    for (const auto& l : locals)
        if (!l->value.same_shape(global->value))
            throw GeometryError("local view shape " + l->value.shape_str() +
                                " does not match global " + global->value.shape_str());
    const Index B = global->value.dim(0);
    const Index C = global->value.dim(1);
    const Index h = global->value.dim(2);
    const Index w = global->value.dim(3);
    if (h % grid.rows != 0 || w % grid.cols != 0)
        throw GeometryError("global feature " + global->value.shape_str() +
                            " not partitionable by a " + std::to_string(grid.rows) + "x" +
                            std::to_string(grid.cols) + " grid");

    ad::Var assembled = assemble_tiles(locals, grid);
    auto [k, v] = kv(pooled_tokens(assembled, windows));

    ad::Var gtok = ad::tokenize(global);
    ad::Var q = ad::linear(gtok, wq, nullptr);
    ad::Var t = ad::add(gtok, ln1(attn_global(q, k, v)));
    t = ad::add(t, ln2(ffn(t)));
    ad::Var global_out = ad::untokenize(t, h, w);

    // Each local queries the global slice at its own patch position.
    std::vector<ad::Var> slices = split_tiles(global_out, grid);
    Tensor pe = positional_encoding(C, h, w);
    std::vector<ad::Var> q_toks, k_toks;
    q_toks.reserve(M);
    k_toks.reserve(M);
    for (Index m = 0; m < M; ++m) {
        q_toks.push_back(ad::tokenize(ad::add_const(locals[m], pe)));
        k_toks.push_back(ad::tokenize(slices[m]));
    }
    ad::Var q_all = ad::linear(ad::concat(q_toks, 1), wqm, nullptr);  // (h*w, M*B, C)
    ad::Var k_all = ad::concat(k_toks, 1);
    ad::Var out = attn_local(q_all, k_all, k_all);  // no residual on this branch

    std::vector<ad::Var> locals_out;
    locals_out.reserve(M);
    for (Index m = 0; m < M; ++m)
        locals_out.push_back(ad::untokenize(ad::slice(out, 1, m * B, B), h, w));
    return {global_out, locals_out};
}

} // namespace mvanet
