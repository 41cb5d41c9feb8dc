#include "mvanet/model.hpp"

#include <string>

#include "mvanet/errors.hpp"

namespace mvanet {

ViewMode parse_view_mode(const std::string& name) {
    if (name == "multi") return ViewMode::multi;
    if (name == "hr_only") return ViewMode::hr_only;
    if (name == "lr_only") return ViewMode::lr_only;
    if (name == "closeup_only") return ViewMode::closeup_only;
    throw ConfigError("unknown view mode '" + name +
                      "' (multi, hr_only, lr_only, closeup_only)");
}

std::string view_mode_name(ViewMode mode) {
    switch (mode) {
        case ViewMode::multi: return "multi";
        case ViewMode::hr_only: return "hr_only";
        case ViewMode::lr_only: return "lr_only";
        case ViewMode::closeup_only: return "closeup_only";
    }
    return "multi";
}

void validate_model_config(const ModelConfig& cfg) {
    const int r = cfg.grid.rows, c = cfg.grid.cols;
    const bool known = (r == 2 && c == 2) || (r == 3 && c == 3) || (r == 4 && c == 4);
    if (!known)
        throw ConfigError("patch_grid must be 2x2, 3x3 or 4x4, got " + std::to_string(r) + "x" +
                          std::to_string(c));
    if (cfg.image_size <= 0) throw ConfigError("image_size must be positive");
    if (cfg.image_size % (64 * r) != 0)
        throw ConfigError("image_size " + std::to_string(cfg.image_size) +
                          " must be divisible by 64*rows = " + std::to_string(64 * r));
    if (cfg.image_size % (32 * r * r) != 0)
        throw ConfigError("image_size " + std::to_string(cfg.image_size) +
                          " must be divisible by 32*rows^2 = " + std::to_string(32 * r * r) +
                          " so deepest global tokens partition across patches");
    if (cfg.widths.size() != 5) throw ConfigError("encoder needs exactly 5 widths");
    for (Index w : cfg.widths)
        if (w <= 0) throw ConfigError("encoder widths must be positive");
    if (cfg.decoder_width <= 0) throw ConfigError("decoder_width must be positive");
    if (cfg.heads <= 0) throw ConfigError("attention heads must be positive");
    if (cfg.widths[4] % cfg.heads != 0)
        throw ConfigError("deepest width " + std::to_string(cfg.widths[4]) +
                          " not divisible by " + std::to_string(cfg.heads) + " heads");
    if (cfg.decoder_width % cfg.heads != 0)
        throw ConfigError("decoder_width " + std::to_string(cfg.decoder_width) +
                          " not divisible by " + std::to_string(cfg.heads) + " heads");
    if (cfg.widths[4] % 4 != 0 || cfg.decoder_width % 4 != 0)
        throw ConfigError("attention widths must be divisible by 4 for the positional encoding");
    if (cfg.windows.empty()) throw ConfigError("pooling windows must not be empty");
    for (int w : cfg.windows)
        if (w <= 0) throw ConfigError("pooling windows must be positive");
}

MvaNet::MvaNet(ParamRegistry& reg, const ModelConfig& cfg)
    : cfg_((validate_model_config(cfg), cfg)),
      backbone_(reg, "encoder", cfg.widths),
      decoder_(reg, "decoder", cfg.widths, cfg.decoder_width, cfg.heads, cfg.windows,
               cfg.use_mclm, cfg.use_mcrm),
      head_(reg, "head", cfg.decoder_width) {}

ViewBundle MvaNet::make_views(const Tensor& image) const {
    ViewBundle b = decompose(image, cfg_.grid);
    switch (cfg_.views) {
        case ViewMode::multi:
            break;
        case ViewMode::hr_only:
            // Single-view content: no decomposition, every slot sees the
            // whole image at view size.
            for (auto& l : b.local_views) l = b.global_view;
            break;
        case ViewMode::lr_only:
            for (auto& l : b.local_views) l = Tensor::zeros(l.shape());
            break;
        case ViewMode::closeup_only:
            b.global_view = Tensor::zeros(b.global_view.shape());
            break;
    }
    return b;
}

ForwardResult MvaNet::forward(const Tensor& image, bool training) const {
    if (image.rank() != 4 || image.dim(0) != 1 || image.dim(1) != 3 ||
        image.dim(2) != cfg_.image_size || image.dim(3) != cfg_.image_size)
        throw ConfigError("expected a (1,3," + std::to_string(cfg_.image_size) + "," +
                          std::to_string(cfg_.image_size) + ") image, got " + image.shape_str());

    PyramidFeatures pyr = encode(backbone_, make_views(image));
    Decoder::Result dec = decoder_.decode(pyr, cfg_.grid);
    ad::Var shallow = head_.shallow_features(ad::constant(image));
    ad::Var logits = head_.pre_sigmoid(dec.d1, shallow, cfg_.grid, cfg_.image_size,
                                       cfg_.image_size, training, cfg_.use_vrm);
    ForwardResult out;
    out.logits = logits;
    out.prediction = ad::sigmoid(logits);
    out.supervision = dec.supervision;
    out.supervision.final_pred = out.prediction;
    return out;
}

} // namespace mvanet
