#pragma once

#include <string>
#include <vector>

#include "mvanet/decoder.hpp"
#include "mvanet/encoder.hpp"
#include "mvanet/heads.hpp"

namespace mvanet {

enum class ViewMode { multi, hr_only, lr_only, closeup_only };

ViewMode parse_view_mode(const std::string& name);
std::string view_mode_name(ViewMode mode);

struct ModelConfig {
    Index image_size = 256;
    PatchGrid grid{2, 2};
    std::vector<Index> widths{16, 32, 64, 128, 128};
    Index decoder_width = 32;
    int heads = 4;
    std::vector<int> windows{4, 8, 16};
    bool use_mclm = true;
    bool use_mcrm = true;
    bool use_vrm = true;
    ViewMode views = ViewMode::multi;
};

// Throws ConfigError naming the violated constraint.
void validate_model_config(const ModelConfig& cfg);

struct ForwardResult {
    ad::Var prediction;          // (1,1,H,W), sigmoid output
    ad::Var logits;              // pre-sigmoid map for seam probing
    SupervisionSet supervision;  // final_pred filled in
};

// Whole network over one image: view decomposition, shared encoding of the
// view batch, localization + refinement decoding, final prediction head.
class MvaNet {
public:
    MvaNet(ParamRegistry& reg, const ModelConfig& cfg);

    ForwardResult forward(const Tensor& image, bool training) const;  // (1,3,H,W)

    const ModelConfig& config() const { return cfg_; }
    const Backbone& backbone() const { return backbone_; }
    const Decoder& decoder() const { return decoder_; }
    const VrmHead& head() const { return head_; }

    // View contents after the ablation substitution, before encoding.
    ViewBundle make_views(const Tensor& image) const;

private:
    ModelConfig cfg_;
    ConvResidualBackbone backbone_;
    Decoder decoder_;
    VrmHead head_;
};

} // namespace mvanet
