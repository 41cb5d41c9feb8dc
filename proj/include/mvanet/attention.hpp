#ifndef MVANET_ATTENTION_HPP
#define MVANET_ATTENTION_HPP

/*
 * Reusable attention primitives. Token layout is (token, batch, channels).
 * MHCA here carries only the output projection; Q/K/V projections are applied
 * by callers, matching the written equations where W^Q and W^{K,V} sit outside
 * the attention operator.
 */

#include <utility>
#include <vector>

#include "mvanet/autodiff.hpp"
#include "mvanet/errors.hpp"
#include "mvanet/params.hpp"

namespace mvanet {

struct LayerNorm {
    ad::Var gamma, beta;
    double eps = 1e-5;
    LayerNorm() = default;
    LayerNorm(ParamRegistry& reg, const std::string& prefix, Index channels);
    ad::Var operator()(const ad::Var& x) const;
};

// Per head softmax(QK^T/sqrt(d))V, heads concatenated, then W^O.
struct Mhca {
    int heads = 1;
    ad::Var wo;  // (C,C), bias-free
    Mhca() = default;
    Mhca(ParamRegistry& reg, const std::string& prefix, Index channels, int heads);
    ad::Var operator()(const ad::Var& q, const ad::Var& k, const ad::Var& v) const;
};

// One (C,2C) matrix shared by K and V; output split down the middle.
struct KvProjection {
    ad::Var wkv;
    KvProjection() = default;
    KvProjection(ParamRegistry& reg, const std::string& prefix, Index channels);
    std::pair<ad::Var, ad::Var> operator()(const ad::Var& tokens) const;
};

// linear -> GELU -> linear, hidden width 4C.
struct Ffn {
    ad::Var w1, b1, w2, b2;
    Ffn() = default;
    Ffn(ParamRegistry& reg, const std::string& prefix, Index channels);
    ad::Var operator()(const ad::Var& x) const;
};

// Fixed 2D sinusoidal map (1,C,H,W): quarters [sin y, cos y, sin x, cos x],
// frequency 1/10000^(4k/C). Requires C divisible by 4.
Tensor positional_encoding(Index channels, Index H, Index W);

// Non-overlapping average pooling per window (ceiling division with
// edge-truncated cells when a window does not divide the size), each result
// flattened and all concatenated in window order. (B,C,H,W) -> (N,B,C).
ad::Var pooled_tokens(const ad::Var& feature, const std::vector<int>& windows);
Index pooled_token_count(Index H, Index W, const std::vector<int>& windows);

// Keeps windows <= min(H,W); falls back to one whole-extent window.
std::vector<int> clip_windows(const std::vector<int>& windows, Index H, Index W);

} // namespace mvanet

#endif
