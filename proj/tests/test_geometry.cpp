#include <doctest.h>

#include "mvanet/geometry.hpp"
#include "test_oracles.hpp"

using namespace mvanet;
using oracle::random_tensor;

TEST_SUITE("geometry") {

TEST_CASE("split then assemble is bit-exact for every supported grid") {
    for (int side : {2, 3, 4}) {
        const PatchGrid g{side, side};
        Tensor map = random_tensor({2, 3, Index(6) * side, Index(4) * side}, 100 + side);
        auto tiles = split(map, g);
        REQUIRE(static_cast<int>(tiles.size()) == g.patches());
        Tensor back = assemble(tiles, g);
        REQUIRE(back.same_shape(map));
        for (Index i = 0; i < map.numel(); ++i)
            REQUIRE(back.data()[i] == map.data()[i]);  // identical bits, no tolerance
    }
}

TEST_CASE("assemble places tiles row-major") {
    const PatchGrid g{2, 2};
    std::vector<Tensor> tiles;
    for (int m = 0; m < 4; ++m) tiles.push_back(Tensor::full({1, 1, 2, 2}, double(m)));
    Tensor map = assemble(tiles, g);
    CHECK(map.at4(0, 0, 0, 0) == 0.0);
    CHECK(map.at4(0, 0, 0, 3) == 1.0);
    CHECK(map.at4(0, 0, 3, 0) == 2.0);
    CHECK(map.at4(0, 0, 3, 3) == 3.0);
}

TEST_CASE("decompose crops exactly and resizes the distant view") {
    const PatchGrid g{2, 2};
    Tensor image = random_tensor({1, 3, 8, 8}, 7);
    ViewBundle b = decompose(image, g);
    REQUIRE(b.local_views.size() == 4);
    CHECK(b.global_view.dim(2) == 4);
    CHECK(b.global_view.dim(3) == 4);
    // Tiles are raw crops.
    CHECK(b.local_views[0].at4(0, 1, 2, 3) == image.at4(0, 1, 2, 3));
    CHECK(b.local_views[3].at4(0, 2, 1, 1) == image.at4(0, 2, 5, 5));
    // Reassembling the crops restores the image bit-exactly.
    Tensor back = assemble(b.local_views, g);
    for (Index i = 0; i < image.numel(); ++i) REQUIRE(back.data()[i] == image.data()[i]);
    // The distant view is the half-pixel bilinear resize.
    Tensor expect = oracle::dense_bilinear(image, 4, 4);
    for (Index i = 0; i < expect.numel(); ++i)
        CHECK(b.global_view.data()[i] == doctest::Approx(expect.data()[i]).epsilon(1e-12));
}

TEST_CASE("decompose rejects indivisible extents") {
    Tensor image = random_tensor({1, 3, 9, 8}, 8);
    CHECK_THROWS_AS(decompose(image, PatchGrid{2, 2}), GeometryError);
}

TEST_CASE("stack_views puts the global view first") {
    const PatchGrid g{2, 2};
    Tensor image = random_tensor({1, 3, 8, 8}, 9);
    ViewBundle b = decompose(image, g);
    Tensor stacked = stack_views(b);
    REQUIRE(stacked.dim(0) == 5);
    CHECK(stacked.at4(0, 0, 1, 1) == b.global_view.at4(0, 0, 1, 1));
    CHECK(stacked.at4(1, 0, 1, 1) == b.local_views[0].at4(0, 0, 1, 1));
    CHECK(stacked.at4(4, 2, 3, 3) == b.local_views[3].at4(0, 2, 3, 3));
}

TEST_CASE("split_view_batch wants exactly M+1 entries, locals first") {
    const PatchGrid g{2, 2};
    Tensor batch = random_tensor({5, 2, 4, 4}, 10);
    ViewParts parts = split_view_batch(ad::leaf(batch), g);
    REQUIRE(parts.locals.size() == 4);
    CHECK(parts.locals[0]->value.at4(0, 1, 2, 2) == batch.at4(0, 1, 2, 2));
    CHECK(parts.global->value.at4(0, 1, 2, 2) == batch.at4(4, 1, 2, 2));
    Tensor wrong = random_tensor({4, 2, 4, 4}, 11);
    CHECK_THROWS_AS(split_view_batch(ad::leaf(wrong), g), PartitionError);
}

TEST_CASE("differentiable tiling matches the dense oracle and round-trips") {
    const PatchGrid g{3, 3};
    std::vector<ad::Var> tiles;
    std::vector<Tensor> plain;
    for (int m = 0; m < 9; ++m) {
        plain.push_back(random_tensor({2, 4, 2, 2}, 40 + m));
        tiles.push_back(ad::leaf(plain.back()));
    }
    ad::Var map = assemble_tiles(tiles, g);
    Tensor expect = oracle::dense_assemble(plain, g);
    for (Index i = 0; i < expect.numel(); ++i) REQUIRE(map->value.data()[i] == expect.data()[i]);
    auto back = split_tiles(map, g);
    for (int m = 0; m < 9; ++m)
        for (Index i = 0; i < plain[m].numel(); ++i)
            REQUIRE(back[m]->value.data()[i] == plain[m].data()[i]);
}

TEST_CASE("grid_assemble and grid_split invert each other") {
    const PatchGrid g{2, 2};
    Tensor tiles = random_tensor({4, 3, 2, 2}, 55);
    ad::Var whole = grid_assemble(ad::leaf(tiles), g);
    CHECK(whole->value.dim(0) == 1);
    CHECK(whole->value.dim(2) == 4);
    ad::Var back = grid_split(whole, g);
    for (Index i = 0; i < tiles.numel(); ++i)
        REQUIRE(back->value.data()[i] == tiles.data()[i]);
}

TEST_CASE("validate_grid names the offending combination") {
    CHECK_THROWS_AS(validate_grid(PatchGrid{0, 2}, 8, 8), GeometryError);
    CHECK_THROWS_AS(validate_grid(PatchGrid{2, 2}, 7, 8), GeometryError);
    CHECK_NOTHROW(validate_grid(PatchGrid{2, 2}, 8, 8));
}

TEST_CASE("resize to the same extent is near-identity") {
    Tensor x = random_tensor({1, 2, 5, 5}, 66);
    Tensor y = resize_bilinear(x, 5, 5);
    for (Index i = 0; i < x.numel(); ++i)
        CHECK(y.data()[i] == doctest::Approx(x.data()[i]).epsilon(1e-12));
}

} // TEST_SUITE
