#ifndef MVANET_GEOMETRY_HPP
#define MVANET_GEOMETRY_HPP

/*
 * View geometry: one image becomes a distant view (the whole image resized
 * to tile size) plus M non-overlapping close-up tiles in row-major order.
 * Tiling is pure index movement, so split followed by assemble is bit-exact.
 */

#include <vector>

#include "mvanet/autodiff.hpp"
#include "mvanet/errors.hpp"
#include "mvanet/tensor.hpp"

namespace mvanet {

struct PatchGrid {
    int rows = 2;
    int cols = 2;
    int patches() const { return rows * cols; }
};

void validate_grid(const PatchGrid& g, Index H, Index W);

struct ViewBundle {
    Tensor global_view;               // (B,C,h,w)
    std::vector<Tensor> local_views;  // M maps, each (B,C,h,w)
    PatchGrid grid;
};

// (B,C,H,W) -> distant view (bilinear, half-pixel centers) + exact crops.
ViewBundle decompose(const Tensor& image, const PatchGrid& g);

// M maps (B,C,p_h,p_w) -> (B,C,rows*p_h,cols*p_w), row-major placement.
Tensor assemble(const std::vector<Tensor>& patches, const PatchGrid& g);

// Exact inverse of assemble.
std::vector<Tensor> split(const Tensor& map, const PatchGrid& g);

Tensor resize_bilinear(const Tensor& x, Index out_h, Index out_w);  // (B,C,H,W)

// Stacks [global, local_1..local_M] along the batch axis (encoder layout).
Tensor stack_views(const ViewBundle& bundle);

// Differentiable versions of the same movements.
ad::Var assemble_tiles(const std::vector<ad::Var>& patches, const PatchGrid& g);
std::vector<ad::Var> split_tiles(const ad::Var& map, const PatchGrid& g);

// Single-image batch-stacked forms used inside the decoder (batch axis = M).
ad::Var grid_assemble(const ad::Var& tiles, const PatchGrid& g);  // (M,C,h,w)->(1,C,H,W)
ad::Var grid_split(const ad::Var& whole, const PatchGrid& g);     // (1,C,H,W)->(M,C,h,w)

// Splits a (M+1,...) batch laid out [local_1..local_M, global].
// Throws PartitionError when the batch axis is not exactly M+1.
struct ViewParts {
    std::vector<ad::Var> locals;  // M entries, each (1, ...)
    ad::Var global;               // (1, ...)
};
ViewParts split_view_batch(const ad::Var& batch, const PatchGrid& g);

} // namespace mvanet

#endif
