#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdlib>
#include <vector>

#include "amc/backbone.hpp"
#include "amc/model.hpp"
#include "amc/rng.hpp"
#include "testutil.hpp"

using amc::ModelConfig;
using amc::Tensor;
using testutil::close;
using testutil::grad_check;

namespace {

ModelConfig small_cfg() {
    ModelConfig c;
    c.image_size = 16;
    c.block_channels = {4, 8, 8, 8};
    c.proj_channels = 4;
    c.fuse_channels = 16;
    return c;
}

}  // namespace

TEST_CASE("extract_features shape algebra and input contract", "[backbone]") {
    auto model = amc::Model<float>::init(ModelConfig{}, 7);
    auto img = Tensor<float>::zeros({3, 64, 64});
    auto F = amc::extract_features(img, model.params, model.cfg);
    REQUIRE(F.shape() == std::vector<int>{128, 16, 16});

    // Zero image with zero biases stays zero through conv/relu/pool.
    for (float v : F.values()) REQUIRE(v == 0.0f);

    REQUIRE_THROWS_AS(amc::extract_features(Tensor<float>::zeros({3, 32, 32}), model.params, model.cfg),
                      amc::DataError);
    REQUIRE_THROWS_AS(amc::extract_features(Tensor<float>::zeros({1, 64, 64}), model.params, model.cfg),
                      amc::DataError);
}

TEST_CASE("build_pyramid shape algebra across dilations", "[backbone]") {
    auto model = amc::Model<float>::init(ModelConfig{}, 7);
    amc::Rng rng(31);
    auto F = Tensor<float>::uniform({128, 16, 16}, rng, -1.0, 1.0);
    auto pyr = amc::build_pyramid(F, model.params, model.cfg);
    REQUIRE(pyr.size() == 4);
    for (const auto& lvl : pyr) REQUIRE(lvl.shape() == std::vector<int>{64, 8, 8});

    // Odd extents still halve (rounding up) on every level.
    auto Fodd = Tensor<float>::uniform({128, 17, 17}, rng, -1.0, 1.0);
    for (const auto& lvl : amc::build_pyramid(Fodd, model.params, model.cfg))
        REQUIRE(lvl.shape() == std::vector<int>{64, 9, 9});

    REQUIRE_THROWS_AS(amc::build_pyramid(Tensor<float>::uniform({64, 16, 16}, rng, -1, 1), model.params, model.cfg),
                      amc::DimensionError);
    REQUIRE_THROWS_AS(amc::build_pyramid(Tensor<float>::uniform({128, 1, 1}, rng, -1, 1), model.params, model.cfg),
                      amc::GeometryError);
}

TEST_CASE("pyramid levels are independent heads over F", "[backbone]") {
    auto model = amc::Model<float>::init(small_cfg(), 9);
    amc::Rng rng(32);
    auto F = Tensor<float>::uniform({8, 8, 8}, rng, -1.0, 1.0);

    // Zero out level 2's weights; only that level must go dark.
    auto& w2 = model.params.at("pyramid.2.weight").values_mut();
    std::fill(w2.begin(), w2.end(), 0.0f);
    auto pyr = amc::build_pyramid(F, model.params, model.cfg);
    double live0 = 0, live2 = 0;
    for (float v : pyr[0].values()) live0 += std::fabs(v);
    for (float v : pyr[2].values()) live2 += std::fabs(v);
    REQUIRE(live0 > 0.0);
    REQUIRE(live2 == 0.0);
}

TEST_CASE("pyramid impulse response stays inside the dilated window", "[backbone]") {
    // Receptive field of a level-s output on F is (2*d_s+1)^2: an impulse at
    // (r,c) may only light outputs whose center 2*(oi,oj) is within d_s.
    auto cfg = small_cfg();
    auto model = amc::Model<float>::init(cfg, 10);
    const int H = 8;
    for (int s = 0; s < cfg.levels(); ++s) {
        const int d = cfg.dilations[static_cast<std::size_t>(s)];
        auto F = Tensor<float>::zeros({8, H, H});
        const int r = 5, c = 3;
        for (int ch = 0; ch < 8; ++ch) F.values_mut()[static_cast<std::size_t>(ch * H * H + r * H + c)] = 1.0f;
        auto lvl = amc::build_pyramid(F, model.params, model.cfg)[static_cast<std::size_t>(s)];
        const int ho = lvl.dim(1), wo = lvl.dim(2);
        for (int ch = 0; ch < lvl.dim(0); ++ch)
            for (int oi = 0; oi < ho; ++oi)
                for (int oj = 0; oj < wo; ++oj) {
                    const float v = lvl.values()[static_cast<std::size_t>((ch * ho + oi) * wo + oj)];
                    if (v != 0.0f) {
                        REQUIRE(std::abs(2 * oi - r) <= d);
                        REQUIRE(std::abs(2 * oj - c) <= d);
                    }
                }
    }
}

TEST_CASE("pyramid is translation covariant at stride granularity", "[backbone]") {
    // Shifting F down by 2 shifts every level down by 1 on interior rows.
    auto cfg = small_cfg();
    auto model = amc::Model<float>::init(cfg, 11);
    amc::Rng rng(33);
    const int C = 8, H = 16;
    auto F = Tensor<float>::uniform({C, H, H}, rng, -1.0, 1.0);
    auto Fs = Tensor<float>::zeros({C, H, H});
    for (int ch = 0; ch < C; ++ch)
        for (int i = 0; i + 2 < H; ++i)
            for (int j = 0; j < H; ++j)
                Fs.values_mut()[static_cast<std::size_t>((ch * H + i + 2) * H + j)] =
                    F.values()[static_cast<std::size_t>((ch * H + i) * H + j)];

    auto pyr = amc::build_pyramid(F, model.params, model.cfg);
    auto pyr_s = amc::build_pyramid(Fs, model.params, model.cfg);
    for (int s = 0; s < cfg.levels(); ++s) {
        const int d = cfg.dilations[static_cast<std::size_t>(s)];
        const auto& a = pyr[static_cast<std::size_t>(s)];
        const auto& b = pyr_s[static_cast<std::size_t>(s)];
        const int ho = a.dim(1), wo = a.dim(2);
        const int band = d + 1;  // skip rows whose kernel window touches either boundary
        for (int ch = 0; ch < a.dim(0); ++ch)
            for (int oi = band; oi + band < ho; ++oi)
                for (int oj = band; oj + band < wo; ++oj) {
                    const float va = a.values()[static_cast<std::size_t>((ch * ho + oi) * wo + oj)];
                    const float vb = b.values()[static_cast<std::size_t>((ch * ho + oi + 1) * wo + oj)];
                    REQUIRE_THAT(vb, Catch::Matchers::WithinAbs(va, 1e-5));
                }
    }
}

TEST_CASE("backbone and pyramid gradients pass finite differences", "[backbone][autodiff]") {
    // Double-precision spot check on a reduced stack; the acceptance suite
    // covers every parameter of the tiny config end to end.
    ModelConfig cfg = small_cfg();
    auto model = amc::Model<double>::init(cfg, 12);
    amc::Rng rng(34);
    auto img = Tensor<double>::uniform({3, 16, 16}, rng, 0.0, 1.0);

    std::vector<Tensor<double>> leaves{model.params.at("backbone.conv1.weight"),
                                       model.params.at("backbone.conv3.bias"),
                                       model.params.at("pyramid.1.weight"), model.params.at("pyramid.3.bias")};
    auto r = grad_check<double>(leaves, [&] {
        auto F = amc::extract_features(img, model.params, model.cfg);
        auto pyr = amc::build_pyramid(F, model.params, model.cfg);
        Tensor<double> acc = amc::sum(amc::mul(pyr[0], pyr[0]));
        for (std::size_t s = 1; s < pyr.size(); ++s) acc = amc::add(acc, amc::sum(amc::mul(pyr[s], pyr[s])));
        return acc;
    });
    INFO(r.where);
    REQUIRE(r.ok(1e-3));
}
