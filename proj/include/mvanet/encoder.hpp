#pragma once

#include <memory>
#include <string>
#include <vector>

#include "mvanet/geometry.hpp"
#include "mvanet/params.hpp"

namespace mvanet {

struct PyramidFeatures {
    std::vector<ad::Var> levels;  // E1..E5
    std::vector<int> strides;     // relative to the view input
    std::vector<Index> channels;
};

// Feature extractor applied to all views in one batch. Kept behind an
// interface so a windowed-attention extractor can be swapped in later.
class Backbone {
public:
    virtual ~Backbone() = default;
    virtual PyramidFeatures forward(const ad::Var& views) const = 0;  // (N,3,h,w)
    virtual const std::vector<Index>& widths() const = 0;
};

// Five stages at strides [4,8,16,32,32]; stage 5 keeps the stride and deepens.
// Each stage: strided convolution, then y = x + conv(gelu(conv(gelu(x)))).
// No normalization layers, so a single view encodes identically alone or
// batched with the others.
class ConvResidualBackbone : public Backbone {
public:
    ConvResidualBackbone(ParamRegistry& reg, const std::string& prefix,
                         std::vector<Index> widths);
    PyramidFeatures forward(const ad::Var& views) const override;
    const std::vector<Index>& widths() const override { return widths_; }

private:
    struct Stage {
        ad::Var down_w, down_b;
        ad::Var r1_w, r1_b, r2_w, r2_b;
    };
    std::vector<Stage> stages_;
    std::vector<Index> widths_;
};

// Stacks the bundle as [global, local_1..local_M] and encodes the batch.
PyramidFeatures encode(const Backbone& backbone, const ViewBundle& bundle);

} // namespace mvanet
