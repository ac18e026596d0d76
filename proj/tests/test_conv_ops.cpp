#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "amc/conv_ops.hpp"
#include "amc/rng.hpp"
#include "amc/tensor.hpp"
#include "testutil.hpp"

using amc::Tensor;
using testutil::close;
using testutil::grad_check;

namespace {

// Direct-convolution oracle, written against the operation's definition only:
// walks every output tap and sums x[ci, oi*s - p + ki*d, oj*s - p + kj*d] * w.
std::vector<double> naive_conv2d(const std::vector<double>& x, int Ci, int H, int W, const std::vector<double>& w,
                                 int Co, int kh, int kw, const std::vector<double>* bias, int stride, int dilation,
                                 int padding, int groups) {
    const int Ho = amc::conv_out_extent(H, kh, stride, dilation, padding);
    const int Wo = amc::conv_out_extent(W, kw, stride, dilation, padding);
    const int Cg = Ci / groups, Cog = Co / groups;
    std::vector<double> y(static_cast<std::size_t>(Co) * Ho * Wo, 0.0);
    for (int o = 0; o < Co; ++o) {
        const int g = o / Cog;
        for (int oi = 0; oi < Ho; ++oi)
            for (int oj = 0; oj < Wo; ++oj) {
                double acc = bias ? (*bias)[static_cast<std::size_t>(o)] : 0.0;
                for (int cg = 0; cg < Cg; ++cg) {
                    const int ci = g * Cg + cg;
                    for (int ki = 0; ki < kh; ++ki)
                        for (int kj = 0; kj < kw; ++kj) {
                            const int ii = oi * stride - padding + ki * dilation;
                            const int jj = oj * stride - padding + kj * dilation;
                            if (ii < 0 || ii >= H || jj < 0 || jj >= W) continue;
                            acc += x[(static_cast<std::size_t>(ci) * H + ii) * W + jj] *
                                   w[((static_cast<std::size_t>(o) * Cg + cg) * kh + ki) * kw + kj];
                        }
                }
                y[(static_cast<std::size_t>(o) * Ho + oi) * Wo + oj] = acc;
            }
    }
    return y;
}

Tensor<double> rand_t(std::vector<int> shape, amc::Rng& rng, bool rg = true) {
    return Tensor<double>::uniform(std::move(shape), rng, -1.0, 1.0, rg);
}

}  // namespace

TEST_CASE("conv output extent formula", "[conv]") {
    // floor((in + 2p - d*(k-1) - 1)/s) + 1
    REQUIRE(amc::conv_out_extent(64, 3, 1, 1, 1) == 64);
    REQUIRE(amc::conv_out_extent(64, 3, 2, 1, 1) == 32);
    REQUIRE(amc::conv_out_extent(16, 3, 2, 4, 4) == 8);
    REQUIRE(amc::conv_out_extent(15, 3, 2, 8, 8) == 8);
    REQUIRE(amc::conv_out_extent(7, 2, 2, 1, 0) == 3);
    REQUIRE(amc::conv_out_extent(1, 3, 1, 1, 0) == 0);
    // All four dilation branches agree on the halved extent when p = d.
    for (int h : {16, 17, 32, 33})
        for (int d : {1, 2, 4, 8}) REQUIRE(amc::conv_out_extent(h, 3, 2, d, d) == (h + 1) / 2);
}

TEST_CASE("conv2d forward matches the direct oracle", "[conv]") {
    amc::Rng rng(21);
    struct Case {
        int Ci, H, W, Co, k, stride, dilation, padding, groups;
    };
    const Case cases[] = {
        {3, 9, 9, 4, 3, 1, 1, 1, 1},  {2, 8, 10, 5, 3, 2, 1, 1, 1}, {4, 11, 7, 6, 3, 2, 2, 2, 1},
        {4, 13, 13, 4, 3, 2, 4, 4, 1}, {3, 17, 17, 2, 3, 2, 8, 8, 1}, {6, 6, 6, 6, 3, 1, 1, 1, 6},
        {4, 5, 5, 8, 1, 1, 1, 0, 1},  {6, 7, 7, 9, 3, 1, 1, 1, 3},  {1, 4, 4, 1, 4, 1, 1, 0, 1},
    };
    for (const auto& c : cases) {
        auto x = rand_t({c.Ci, c.H, c.W}, rng, false);
        auto w = rand_t({c.Co, c.Ci / c.groups, c.k, c.k}, rng, false);
        auto b = rand_t({c.Co}, rng, false);
        auto y = amc::conv2d(x, w, b, c.stride, c.dilation, c.padding, c.groups);
        std::vector<double> bv = b.values();
        auto ref = naive_conv2d(x.values(), c.Ci, c.H, c.W, w.values(), c.Co, c.k, c.k, &bv, c.stride, c.dilation,
                                c.padding, c.groups);
        REQUIRE(y.size() == static_cast<std::int64_t>(ref.size()));
        for (std::size_t i = 0; i < ref.size(); ++i) REQUIRE(close(y.values()[i], ref[i], 1e-10));

        auto y_nb = amc::conv2d(x, w, c.stride, c.dilation, c.padding, c.groups);
        auto ref_nb = naive_conv2d(x.values(), c.Ci, c.H, c.W, w.values(), c.Co, c.k, c.k, nullptr, c.stride,
                                   c.dilation, c.padding, c.groups);
        for (std::size_t i = 0; i < ref_nb.size(); ++i) REQUIRE(close(y_nb.values()[i], ref_nb[i], 1e-10));
    }
}

TEST_CASE("conv2d gradients pass finite differences", "[conv][autodiff]") {
    amc::Rng rng(22);
    SECTION("plain stride-1") {
        auto x = rand_t({2, 5, 5}, rng);
        auto w = rand_t({3, 2, 3, 3}, rng);
        auto b = rand_t({3}, rng);
        auto r = grad_check<double>({x, w, b}, [&] {
            auto y = amc::conv2d(x, w, b, 1, 1, 1);
            return amc::sum(amc::mul(y, y));
        });
        REQUIRE(r.ok(1e-4));
    }
    SECTION("stride 2, dilation 2, matching padding") {
        auto x = rand_t({2, 9, 9}, rng);
        auto w = rand_t({2, 2, 3, 3}, rng);
        auto b = rand_t({2}, rng);
        auto r = grad_check<double>({x, w, b}, [&] {
            auto y = amc::conv2d(x, w, b, 2, 2, 2);
            return amc::sum(amc::mul(y, y));
        });
        REQUIRE(r.ok(1e-4));
    }
    SECTION("depthwise groups") {
        auto x = rand_t({4, 6, 6}, rng);
        auto w = rand_t({4, 1, 3, 3}, rng);
        auto r = grad_check<double>({x, w}, [&] {
            auto y = amc::conv2d(x, w, 1, 1, 1, 4);
            return amc::sum(amc::mul(y, y));
        });
        REQUIRE(r.ok(1e-4));
    }
    SECTION("pointwise 1x1") {
        auto x = rand_t({5, 4, 4}, rng);
        auto w = rand_t({7, 5, 1, 1}, rng);
        auto r = grad_check<double>({x, w}, [&] {
            auto y = amc::conv2d(x, w, 1, 1, 0);
            return amc::sum(amc::mul(y, y));
        });
        REQUIRE(r.ok(1e-4));
    }
}

TEST_CASE("depthwise then pointwise equals block-diagonal full convolution", "[conv]") {
    amc::Rng rng(23);
    const int C = 5, H = 8, W = 8, Co = 7;
    auto x = rand_t({C, H, W}, rng, false);
    auto dw = rand_t({C, 1, 3, 3}, rng, false);
    auto pw = rand_t({Co, C, 1, 1}, rng, false);

    auto mid = amc::conv2d(x, dw, 1, 1, 1, C);
    auto y = amc::conv2d(mid, pw, 1, 1, 0);

    // Collapse the two stages into one dense 3x3 convolution whose weight is
    // w[o,c,ki,kj] = pw[o,c] * dw[c,ki,kj], then compare.
    auto wfull = Tensor<double>::zeros({Co, C, 3, 3});
    auto& wf = wfull.values_mut();
    for (int o = 0; o < Co; ++o)
        for (int c = 0; c < C; ++c)
            for (int t = 0; t < 9; ++t)
                wf[(static_cast<std::size_t>(o) * C + c) * 9 + t] =
                    pw.values()[static_cast<std::size_t>(o) * C + c] * dw.values()[static_cast<std::size_t>(c) * 9 + t];
    auto yfull = amc::conv2d(x, wfull, 1, 1, 1);
    REQUIRE(y.shape() == yfull.shape());
    for (std::size_t i = 0; i < y.values().size(); ++i) REQUIRE(close(y.values()[i], yfull.values()[i], 1e-10));
}

TEST_CASE("conv2d rejects bad geometry and shapes", "[conv]") {
    amc::Rng rng(24);
    auto x = rand_t({3, 8, 8}, rng, false);
    auto w = rand_t({4, 3, 3, 3}, rng, false);
    REQUIRE_THROWS_AS(amc::conv2d(rand_t({3, 8}, rng, false), w, 1, 1, 1), amc::DimensionError);
    REQUIRE_THROWS_AS(amc::conv2d(x, rand_t({4, 2, 3, 3}, rng, false), 1, 1, 1), amc::DimensionError);
    REQUIRE_THROWS_AS(amc::conv2d(x, w, 0, 1, 1), amc::GeometryError);
    REQUIRE_THROWS_AS(amc::conv2d(x, w, 1, 0, 1), amc::GeometryError);
    REQUIRE_THROWS_AS(amc::conv2d(x, w, 1, 1, -1), amc::GeometryError);
    REQUIRE_THROWS_AS(amc::conv2d(x, w, 1, 1, 1, 2), amc::DimensionError);   // 3 channels, 2 groups
    REQUIRE_THROWS_AS(amc::conv2d(x, w, Tensor<double>::zeros({3}), 1, 1, 1), amc::DimensionError);
    // Kernel larger than the padded input.
    auto xsmall = rand_t({1, 2, 2}, rng, false);
    auto wbig = rand_t({1, 1, 5, 5}, rng, false);
    REQUIRE_THROWS_AS(amc::conv2d(xsmall, wbig, 1, 1, 0), amc::GeometryError);
}

TEST_CASE("max_pool2d values and gradient routing", "[conv][autodiff]") {
    auto x = Tensor<double>::from({1, 4, 4}, {1, 2, 5, 3,
                                              4, 0, 1, 2,
                                              7, 8, 2, 1,
                                              0, 3, 9, 4});
    auto y = amc::max_pool2d(x, 2, 2);
    REQUIRE(y.shape() == std::vector<int>{1, 2, 2});
    REQUIRE(y.values() == std::vector<double>{4, 5, 8, 9});

    amc::Rng rng(25);
    auto z = rand_t({3, 6, 6}, rng);
    // Spread values apart so no FD step flips an argmax.
    {
        auto& v = z.values_mut();
        for (std::size_t i = 0; i < v.size(); ++i) v[i] += static_cast<double>(i) * 0.01;
    }
    auto r = grad_check<double>({z}, [&] {
        auto p = amc::max_pool2d(z, 2, 2);
        return amc::sum(amc::mul(p, p));
    });
    REQUIRE(r.ok(1e-5));
    REQUIRE_THROWS_AS(amc::max_pool2d(rand_t({1, 1, 1}, rng), 2, 2), amc::GeometryError);
}

TEST_CASE("global_avg_pool and scale_channels", "[conv][autodiff]") {
    amc::Rng rng(26);
    auto x = rand_t({3, 4, 5}, rng);
    auto g = amc::global_avg_pool(x);
    for (int c = 0; c < 3; ++c) {
        double acc = 0.0;
        for (int i = 0; i < 20; ++i) acc += x.values()[static_cast<std::size_t>(c * 20 + i)];
        REQUIRE(close(g.values()[static_cast<std::size_t>(c)], acc / 20.0, 1e-12));
    }
    auto r1 = grad_check<double>({x}, [&] {
        auto p = amc::global_avg_pool(x);
        return amc::dot(p, p);
    });
    REQUIRE(r1.ok(1e-5));

    auto a = rand_t({3}, rng);
    auto r2 = grad_check<double>({x, a}, [&] {
        auto y = amc::scale_channels(x, a);
        return amc::sum(amc::mul(y, y));
    });
    REQUIRE(r2.ok(1e-5));
    // Halving the attention vector scales the map by exactly 0.5 elementwise.
    auto half = Tensor<double>::full({3}, 0.5);
    auto y = amc::scale_channels(x, half);
    for (std::size_t i = 0; i < y.values().size(); ++i) REQUIRE(y.values()[i] == 0.5 * x.values()[i]);
    REQUIRE_THROWS_AS(amc::scale_channels(x, rand_t({4}, rng)), amc::DimensionError);
}

TEST_CASE("channel_correlation matches its definition", "[conv][autodiff]") {
    amc::Rng rng(27);
    const int C = 4, h = 3, w = 5;
    auto a = rand_t({C, h, w}, rng);
    auto b = rand_t({C, h, w}, rng);
    auto corr = amc::channel_correlation(a, b);
    REQUIRE(corr.shape() == std::vector<int>{C, C});
    for (int p = 0; p < C; ++p)
        for (int q = 0; q < C; ++q) {
            double acc = 0.0;
            for (int i = 0; i < h * w; ++i)
                acc += a.values()[static_cast<std::size_t>(p * h * w + i)] *
                       b.values()[static_cast<std::size_t>(q * h * w + i)];
            REQUIRE(close(corr.values()[static_cast<std::size_t>(p * C + q)], acc / (h * w), 1e-10));
        }

    // Swapping arguments transposes the matrix.
    auto corr_t = amc::channel_correlation(b, a);
    for (int p = 0; p < C; ++p)
        for (int q = 0; q < C; ++q)
            REQUIRE(close(corr.values()[static_cast<std::size_t>(p * C + q)],
                          corr_t.values()[static_cast<std::size_t>(q * C + p)], 1e-12));

    auto r = grad_check<double>({a, b}, [&] {
        auto m = amc::channel_correlation(a, b);
        return amc::sum(amc::mul(m, m));
    });
    REQUIRE(r.ok(1e-4));
    REQUIRE_THROWS_AS(amc::channel_correlation(a, rand_t({C, h, w + 1}, rng)), amc::DimensionError);
}

TEST_CASE("stack_mats and concat_vecs route gradients", "[conv][autodiff]") {
    amc::Rng rng(28);
    auto m1 = rand_t({3, 4}, rng);
    auto m2 = rand_t({3, 4}, rng);
    auto s = amc::stack_mats<double>({m1, m2});
    REQUIRE(s.shape() == std::vector<int>{2, 3, 4});
    REQUIRE(s.values()[0] == m1.values()[0]);
    REQUIRE(s.values()[12] == m2.values()[0]);
    auto r = grad_check<double>({m1, m2}, [&] {
        auto st = amc::stack_mats<double>({m1, m2});
        return amc::sum(amc::mul(st, st));
    });
    REQUIRE(r.ok(1e-5));
    REQUIRE_THROWS_AS(amc::stack_mats<double>({m1, rand_t({4, 3}, rng)}), amc::DimensionError);

    auto v1 = rand_t({3}, rng);
    auto v2 = rand_t({5}, rng);
    auto cat = amc::concat_vecs<double>({v1, v2});
    REQUIRE(cat.shape() == std::vector<int>{8});
    auto r2 = grad_check<double>({v1, v2}, [&] {
        auto c = amc::concat_vecs<double>({v1, v2});
        return amc::dot(c, c);
    });
    REQUIRE(r2.ok(1e-5));
}
