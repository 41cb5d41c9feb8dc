#include "mvanet/geometry.hpp"

#include <string>

namespace mvanet {
namespace {

void copy_tile(const double* src, double* dst, Index B, Index C, Index H, Index W,
               Index h, Index w, Index oy, Index ox, bool from_whole) {
    // Moves one (B,C,h,w) tile between a whole (B,C,H,W) map and tile storage.
    for (Index b = 0; b < B; ++b)
        for (Index c = 0; c < C; ++c)
            for (Index y = 0; y < h; ++y) {
                const Index whole_off = ((b * C + c) * H + oy + y) * W + ox;
                const Index tile_off = ((b * C + c) * h + y) * w;
                if (from_whole)
                    std::copy(src + whole_off, src + whole_off + w, dst + tile_off);
                else
                    std::copy(src + tile_off, src + tile_off + w, dst + whole_off);
            }
}

} // namespace

void validate_grid(const PatchGrid& g, Index H, Index W) {
    if (g.rows <= 0 || g.cols <= 0)
        throw GeometryError("grid must be positive, got " + std::to_string(g.rows) + "x" +
                            std::to_string(g.cols));
    if (H % g.rows != 0)
        throw GeometryError("height " + std::to_string(H) + " not divisible by " +
                            std::to_string(g.rows) + " rows");
    if (W % g.cols != 0)
        throw GeometryError("width " + std::to_string(W) + " not divisible by " +
                            std::to_string(g.cols) + " cols");
}

ViewBundle decompose(const Tensor& image, const PatchGrid& g) {
    if (image.rank() != 4)
        throw GeometryError("decompose wants (B,C,H,W), got " + image.shape_str());
    const Index H = image.dim(2), W = image.dim(3);
    validate_grid(g, H, W);
    const Index h = H / g.rows, w = W / g.cols;

    ViewBundle out;
    out.grid = g;
    out.global_view = resize_bilinear(image, h, w);
    out.local_views = split(image, g);
    return out;
}

std::vector<Tensor> split(const Tensor& map, const PatchGrid& g) {
    if (map.rank() != 4)
        throw GeometryError("split wants (B,C,H,W), got " + map.shape_str());
    const Index B = map.dim(0), C = map.dim(1), H = map.dim(2), W = map.dim(3);
    validate_grid(g, H, W);
    const Index h = H / g.rows, w = W / g.cols;

    std::vector<Tensor> out;
    out.reserve(static_cast<std::size_t>(g.patches()));
    for (Index i = 0; i < g.rows; ++i)
        for (Index j = 0; j < g.cols; ++j) {
            Tensor tile({B, C, h, w});
            copy_tile(map.data(), tile.data(), B, C, H, W, h, w, i * h, j * w, true);
            out.push_back(std::move(tile));
        }
    return out;
}

Tensor assemble(const std::vector<Tensor>& patches, const PatchGrid& g) {
    if (static_cast<int>(patches.size()) != g.patches())
        throw GeometryError("assemble got " + std::to_string(patches.size()) +
                            " patches for a " + std::to_string(g.rows) + "x" +
                            std::to_string(g.cols) + " grid");
    const Tensor& first = patches.front();
    if (first.rank() != 4)
        throw GeometryError("assemble wants (B,C,h,w) patches, got " + first.shape_str());
    for (const Tensor& p : patches)
        if (!p.same_shape(first))
            throw GeometryError("patch shapes differ: " + first.shape_str() + " vs " +
                                p.shape_str());
    const Index B = first.dim(0), C = first.dim(1), h = first.dim(2), w = first.dim(3);
    const Index H = h * g.rows, W = w * g.cols;

    Tensor out({B, C, H, W});
    for (Index i = 0; i < g.rows; ++i)
        for (Index j = 0; j < g.cols; ++j) {
            const Tensor& p = patches[static_cast<std::size_t>(i * g.cols + j)];
            copy_tile(p.data(), out.data(), B, C, H, W, h, w, i * h, j * w, false);
        }
    return out;
}

Tensor resize_bilinear(const Tensor& x, Index out_h, Index out_w) {
    return ad::bilinear(ad::constant(x), out_h, out_w)->value;
}

Tensor stack_views(const ViewBundle& bundle) {
    std::vector<ad::Var> parts;
    parts.reserve(bundle.local_views.size() + 1);
    parts.push_back(ad::constant(bundle.global_view));
    for (const Tensor& t : bundle.local_views) parts.push_back(ad::constant(t));
    return ad::concat(parts, 0)->value;
}

ad::Var assemble_tiles(const std::vector<ad::Var>& patches, const PatchGrid& g) {
    if (static_cast<int>(patches.size()) != g.patches())
        throw GeometryError("assemble got " + std::to_string(patches.size()) +
                            " patches for a " + std::to_string(g.rows) + "x" +
                            std::to_string(g.cols) + " grid");
    std::vector<ad::Var> bands;
    bands.reserve(static_cast<std::size_t>(g.rows));
    for (Index i = 0; i < g.rows; ++i) {
        std::vector<ad::Var> row(patches.begin() + i * g.cols,
                                 patches.begin() + (i + 1) * g.cols);
        bands.push_back(ad::concat(row, 3));
    }
    return ad::concat(bands, 2);
}

std::vector<ad::Var> split_tiles(const ad::Var& map, const PatchGrid& g) {
    const Tensor& v = map->value;
    if (v.rank() != 4)
        throw GeometryError("split wants (B,C,H,W), got " + v.shape_str());
    validate_grid(g, v.dim(2), v.dim(3));
    const Index h = v.dim(2) / g.rows, w = v.dim(3) / g.cols;

    std::vector<ad::Var> out;
    out.reserve(static_cast<std::size_t>(g.patches()));
    for (Index i = 0; i < g.rows; ++i) {
        ad::Var band = ad::slice(map, 2, i * h, h);
        for (Index j = 0; j < g.cols; ++j)
            out.push_back(ad::slice(band, 3, j * w, w));
    }
    return out;
}

ad::Var grid_assemble(const ad::Var& tiles, const PatchGrid& g) {
    const Tensor& v = tiles->value;
    if (v.rank() != 4 || v.dim(0) != g.patches())
        throw GeometryError("grid_assemble wants (" + std::to_string(g.patches()) +
                            ",C,h,w), got " + v.shape_str());
    std::vector<ad::Var> parts;
    parts.reserve(static_cast<std::size_t>(g.patches()));
    for (Index m = 0; m < g.patches(); ++m) parts.push_back(ad::slice(tiles, 0, m, 1));
    return assemble_tiles(parts, g);
}

ad::Var grid_split(const ad::Var& whole, const PatchGrid& g) {
    const Tensor& v = whole->value;
    if (v.rank() != 4 || v.dim(0) != 1)
        throw GeometryError("grid_split wants (1,C,H,W), got " + v.shape_str());
    return ad::concat(split_tiles(whole, g), 0);
}

ViewParts split_view_batch(const ad::Var& batch, const PatchGrid& g) {
    const Index M = g.patches();
    if (batch->value.rank() < 1 || batch->value.dim(0) != M + 1)
        throw PartitionError("batch axis is " + std::to_string(batch->value.dim(0)) +
                             ", expected " + std::to_string(M) + " close-up views + 1 distant");
    ViewParts out;
    out.locals.reserve(static_cast<std::size_t>(M));
    for (Index m = 0; m < M; ++m) out.locals.push_back(ad::slice(batch, 0, m, 1));
    out.global = ad::slice(batch, 0, M, 1);
    return out;
}

} // namespace mvanet
