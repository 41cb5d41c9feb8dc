#include <doctest.h>

#include <cmath>
#include <numeric>

#include "mvanet/attention.hpp"
#include "test_oracles.hpp"

using namespace mvanet;
using oracle::random_tensor;

TEST_SUITE("attention") {

TEST_CASE("mhca matches the dense oracle") {
    ParamRegistry reg(1);
    Mhca attn(reg, "t.attn", 8, 2);
    Tensor q = random_tensor({3, 1, 8}, 11);
    Tensor k = random_tensor({5, 1, 8}, 12);
    Tensor v = random_tensor({5, 1, 8}, 13);
    ad::Var out = attn(ad::leaf(q), ad::leaf(k), ad::leaf(v));
    Tensor expect = oracle::dense_mhca(q, k, v, 2, reg.value_of("t.attn.wo"));
    REQUIRE(out->value.same_shape(expect));
    for (Index i = 0; i < expect.numel(); ++i)
        CHECK(out->value.data()[i] == doctest::Approx(expect.data()[i]).epsilon(1e-6));
}

TEST_CASE("mhca with a batch axis matches per-batch dense runs") {
    ParamRegistry reg(2);
    Mhca attn(reg, "t.attn", 8, 4);
    Tensor q = random_tensor({4, 3, 8}, 21);
    Tensor k = random_tensor({6, 3, 8}, 22);
    Tensor v = random_tensor({6, 3, 8}, 23);
    ad::Var out = attn(ad::leaf(q), ad::leaf(k), ad::leaf(v));
    Tensor expect = oracle::dense_mhca(q, k, v, 4, reg.value_of("t.attn.wo"));
    for (Index i = 0; i < expect.numel(); ++i)
        CHECK(out->value.data()[i] == doctest::Approx(expect.data()[i]).epsilon(1e-6));
}

TEST_CASE("jointly permuting K and V tokens leaves the output unchanged") {
    ParamRegistry reg(3);
    Mhca attn(reg, "t.attn", 8, 2);
    Tensor q = random_tensor({3, 2, 8}, 31);
    Tensor k = random_tensor({7, 2, 8}, 32);
    Tensor v = random_tensor({7, 2, 8}, 33);
    ad::Var base = attn(ad::leaf(q), ad::leaf(k), ad::leaf(v));

    std::vector<Index> perm{4, 0, 6, 2, 5, 1, 3};
    Tensor kp(k.shape()), vp(v.shape());
    for (Index n = 0; n < 7; ++n)
        for (Index b = 0; b < 2; ++b)
            for (Index c = 0; c < 8; ++c) {
                kp.at3(n, b, c) = k.at3(perm[n], b, c);
                vp.at3(n, b, c) = v.at3(perm[n], b, c);
            }
    ad::Var permuted = attn(ad::leaf(q), ad::leaf(kp), ad::leaf(vp));
    for (Index i = 0; i < base->value.numel(); ++i)
        CHECK(permuted->value.data()[i] ==
              doctest::Approx(base->value.data()[i]).epsilon(1e-6));
}

TEST_CASE("attention weights are a distribution per query") {
    Tensor q = random_tensor({3, 2, 8}, 41, -3, 3);
    Tensor k = random_tensor({5, 2, 8}, 42, -3, 3);
    ad::Var p = ad::softmax_rows(ad::attention_scores(ad::leaf(q), ad::leaf(k), 2));
    REQUIRE(p->value.dim(0) == 4);  // batch * heads groups
    for (Index g = 0; g < 4; ++g)
        for (Index i = 0; i < 3; ++i) {
            double row = 0;
            for (Index j = 0; j < 5; ++j) {
                CHECK(p->value.at3(g, i, j) >= 0.0);
                row += p->value.at3(g, i, j);
            }
            CHECK(row == doctest::Approx(1.0).epsilon(1e-6));
        }
}

TEST_CASE("mhca rejects bad head counts and mismatched K/V") {
    ParamRegistry reg(4);
    CHECK_THROWS_AS(Mhca(reg, "bad", 8, 3), ConfigError);
    Mhca attn(reg, "ok", 8, 2);
    Tensor q = random_tensor({3, 1, 8}, 51);
    Tensor k = random_tensor({5, 1, 8}, 52);
    Tensor v = random_tensor({4, 1, 8}, 53);
    CHECK_THROWS_AS(attn(ad::leaf(q), ad::leaf(k), ad::leaf(v)), ConfigError);
}

TEST_CASE("kv projection splits one matrix down the middle") {
    ParamRegistry reg(5);
    KvProjection kv(reg, "t.kv", 6);
    Tensor tokens = random_tensor({4, 2, 6}, 61);
    auto [k, v] = kv(ad::leaf(tokens));
    auto [ko, vo] = oracle::dense_kv(tokens, reg.value_of("t.kv.wkv"));
    for (Index i = 0; i < ko.numel(); ++i) {
        CHECK(k->value.data()[i] == doctest::Approx(ko.data()[i]).epsilon(1e-9));
        CHECK(v->value.data()[i] == doctest::Approx(vo.data()[i]).epsilon(1e-9));
    }
}

TEST_CASE("ffn and layer norm match their dense forms") {
    ParamRegistry reg(6);
    Ffn ffn(reg, "t.ffn", 8);
    LayerNorm ln(reg, "t.ln", 8);
    Tensor x = random_tensor({5, 2, 8}, 71);
    ad::Var f = ffn(ad::leaf(x));
    Tensor fe = oracle::dense_ffn(x, reg, "t.ffn");
    for (Index i = 0; i < fe.numel(); ++i)
        CHECK(f->value.data()[i] == doctest::Approx(fe.data()[i]).epsilon(1e-9));
    ad::Var l = ln(ad::leaf(x));
    Tensor le = oracle::dense_ln(x, reg, "t.ln");
    for (Index i = 0; i < le.numel(); ++i)
        CHECK(l->value.data()[i] == doctest::Approx(le.data()[i]).epsilon(1e-9));
}

TEST_CASE("positional encoding follows the four-quarter sinusoid layout") {
    const Index C = 8, H = 5, W = 7;
    Tensor pe = positional_encoding(C, H, W);
    const Index q = C / 4;
    for (Index k = 0; k < q; ++k) {
        const double omega = std::pow(10000.0, -4.0 * double(k) / double(C));
        CHECK(pe.at4(0, k, 3, 2) == doctest::Approx(std::sin(omega * 3)));
        CHECK(pe.at4(0, q + k, 3, 2) == doctest::Approx(std::cos(omega * 3)));
        CHECK(pe.at4(0, 2 * q + k, 3, 2) == doctest::Approx(std::sin(omega * 2)));
        CHECK(pe.at4(0, 3 * q + k, 3, 2) == doctest::Approx(std::cos(omega * 2)));
    }
    // Column content does not vary with x in the y quarters and vice versa.
    CHECK(pe.at4(0, 0, 3, 0) == pe.at4(0, 0, 3, 6));
    CHECK(pe.at4(0, 2 * q, 0, 4) == pe.at4(0, 2 * q, 4, 4));
    CHECK_THROWS_AS(positional_encoding(6, 4, 4), ConfigError);
}

TEST_CASE("pooled token counts enumerate ceil-division cells") {
    CHECK(pooled_token_count(32, 32, {4, 8, 16}) == 64 + 16 + 4);
    CHECK(pooled_token_count(8, 8, {4, 8, 16}) == 4 + 1 + 1);  // oversize window -> one cell
    CHECK(pooled_token_count(5, 7, {2}) == 3 * 4);
    Tensor f = random_tensor({1, 3, 5, 7}, 81);
    ad::Var toks = pooled_tokens(ad::leaf(f), {2, 3});
    Tensor expect = oracle::dense_pooled_tokens(f, {2, 3});
    REQUIRE(toks->value.dim(0) == pooled_token_count(5, 7, {2, 3}));
    for (Index i = 0; i < expect.numel(); ++i)
        CHECK(toks->value.data()[i] == doctest::Approx(expect.data()[i]).epsilon(1e-12));
    CHECK_THROWS_AS(pooled_tokens(ad::leaf(f), {}), ConfigError);
}

TEST_CASE("window clipping keeps fitting windows or falls back to the extent") {
    CHECK(clip_windows({4, 8, 16}, 8, 8) == std::vector<int>{4, 8});
    CHECK(clip_windows({4, 8, 16}, 32, 32) == std::vector<int>{4, 8, 16});
    CHECK(clip_windows({4, 8, 16}, 2, 2) == std::vector<int>{2});
    CHECK(clip_windows({4, 8, 16}, 2, 6) == std::vector<int>{2});
}

} // TEST_SUITE
