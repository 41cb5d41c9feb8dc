#include "mvanet/attention.hpp"

#include <cmath>
#include <string>

namespace mvanet {

LayerNorm::LayerNorm(ParamRegistry& reg, const std::string& prefix, Index channels)
    : gamma(reg.constant(prefix + ".gamma", {channels}, 1.0)),
      beta(reg.constant(prefix + ".beta", {channels}, 0.0)) {}

ad::Var LayerNorm::operator()(const ad::Var& x) const {
    return ad::layer_norm(x, gamma, beta, eps);
}

Mhca::Mhca(ParamRegistry& reg, const std::string& prefix, Index channels, int heads_)
    : heads(heads_), wo(reg.uniform(prefix + ".wo", {channels, channels}, channels)) {
    if (heads_ <= 0 || channels % heads_ != 0)
        throw ConfigError("attention channels " + std::to_string(channels) +
                          " not divisible by " + std::to_string(heads_) + " heads");
}

ad::Var Mhca::operator()(const ad::Var& q, const ad::Var& k, const ad::Var& v) const {
    if (!k->value.same_shape(v->value))
        throw ConfigError("K and V token shapes differ: " + k->value.shape_str() + " vs " +
                          v->value.shape_str());
    ad::Var scores = ad::attention_scores(q, k, heads);
    ad::Var weights = ad::softmax_rows(scores);
    ad::Var mixed = ad::attention_apply(weights, v, heads);
    return ad::linear(mixed, wo, nullptr);
}

KvProjection::KvProjection(ParamRegistry& reg, const std::string& prefix, Index channels)
    : wkv(reg.uniform(prefix + ".wkv", {channels, 2 * channels}, channels)) {}

std::pair<ad::Var, ad::Var> KvProjection::operator()(const ad::Var& tokens) const {
    const Index C = wkv->value.dim(0);
    ad::Var both = ad::linear(tokens, wkv, nullptr);  // (N,B,2C)
    return {ad::slice(both, 2, 0, C), ad::slice(both, 2, C, C)};
}

Ffn::Ffn(ParamRegistry& reg, const std::string& prefix, Index channels)
    : w1(reg.uniform(prefix + ".w1", {channels, 4 * channels}, channels)),
      b1(reg.uniform(prefix + ".b1", {4 * channels}, channels)),
      w2(reg.uniform(prefix + ".w2", {4 * channels, channels}, 4 * channels)),
      b2(reg.uniform(prefix + ".b2", {channels}, 4 * channels)) {}

ad::Var Ffn::operator()(const ad::Var& x) const {
    return ad::linear(ad::gelu(ad::linear(x, w1, b1)), w2, b2);
}

Tensor positional_encoding(Index channels, Index H, Index W) {
    if (channels % 4 != 0)
        throw ConfigError("positional encoding needs channels divisible by 4, got " +
                          std::to_string(channels));
    const Index quarter = channels / 4;
    Tensor pe({1, channels, H, W});
    for (Index k = 0; k < quarter; ++k) {
        const double omega =
            std::pow(10000.0, -4.0 * static_cast<double>(k) / static_cast<double>(channels));
        for (Index y = 0; y < H; ++y)
            for (Index x = 0; x < W; ++x) {
                pe.at4(0, k, y, x) = std::sin(omega * static_cast<double>(y));
                pe.at4(0, quarter + k, y, x) = std::cos(omega * static_cast<double>(y));
                pe.at4(0, 2 * quarter + k, y, x) = std::sin(omega * static_cast<double>(x));
                pe.at4(0, 3 * quarter + k, y, x) = std::cos(omega * static_cast<double>(x));
            }
    }
    return pe;
}

ad::Var pooled_tokens(const ad::Var& feature, const std::vector<int>& windows) {
    if (windows.empty()) throw ConfigError("pooled_tokens needs at least one window");
    std::vector<ad::Var> seqs;
    seqs.reserve(windows.size());
    for (int w : windows) seqs.push_back(ad::tokenize(ad::avg_pool(feature, w)));
    return ad::concat(seqs, 0);
}

Index pooled_token_count(Index H, Index W, const std::vector<int>& windows) {
    Index n = 0;
    for (int w : windows) n += ((H + w - 1) / w) * ((W + w - 1) / w);
    return n;
}

std::vector<int> clip_windows(const std::vector<int>& windows, Index H, Index W) {
    const Index side = std::min(H, W);
    std::vector<int> kept;
    for (int w : windows)
        if (w <= side) kept.push_back(w);
    if (kept.empty()) kept.push_back(static_cast<int>(side));
    return kept;
}

} // namespace mvanet
