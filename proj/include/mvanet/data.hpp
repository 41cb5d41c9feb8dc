#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "mvanet/tensor.hpp"

namespace mvanet {

struct Sample {
    Tensor image;  // (1,3,H,W) in [0,1]
    Tensor mask;   // (1,1,H,W) binary
    std::string id;
};

// Thin-structure scenes: 1-3 of grille / crossbar / rectangular-ring shapes
// over a textured background. Stroke widths cycle [1,1,2,2,3] per sample and
// stroke leading rows/columns sit on x = 1 (mod 4), the knot alignment of the
// final x4 upsampling, so 1-px strokes stay threshold-separable.
std::vector<Sample> generate_synthetic(std::uint64_t seed, int count, Index size);

// Exact column reversal (its own inverse).
Sample hflip(const Sample& s);

// Row-major 2x3 pixel-center affine: maps (x,y) to (a x + b y + c, d x + e y + f).
using Affine = std::array<double, 6>;
std::array<double, 2> apply_affine(const Affine& m, double x, double y);

struct AugmentResult {
    Sample sample;
    Affine forward;  // source pixel -> augmented pixel
    Affine inverse;  // augmented pixel -> sampling location
    bool flipped = false;
    double crop_area = 1.0;
    double angle_deg = 0.0;
};

// Seeded flip (p=0.5) -> crop of 0.75-1.0 area resized back -> rotation in
// [-15,+15] degrees, composed as one affine. Image samples bilinearly with
// edge clamping; the mask samples nearest-neighbor with zero fill and is
// re-binarized. Output keeps (H,W).
AugmentResult augment(const Sample& s, std::uint64_t seed);

// dataset_root/{images,masks}/<id>.<ext> plus manifest.txt with
// "id<TAB>image_path<TAB>mask_path" lines.
void save_dataset(const std::vector<Sample>& samples, const std::string& root);
std::vector<Sample> load_dataset(const std::string& root);

} // namespace mvanet
