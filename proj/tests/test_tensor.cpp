#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "amc/rng.hpp"
#include "amc/tensor.hpp"
#include "testutil.hpp"

using amc::Tensor;
using testutil::close;
using testutil::grad_check;

namespace {

Tensor<double> rand_t(std::vector<int> shape, amc::Rng& rng, double lo = -1.0, double hi = 1.0,
                      bool requires_grad = true) {
    return Tensor<double>::uniform(std::move(shape), rng, lo, hi, requires_grad);
}

}  // namespace

TEST_CASE("tensor construction and accessors", "[tensor]") {
    auto t = Tensor<float>::from({2, 3}, {1, 2, 3, 4, 5, 6});
    REQUIRE(t.ndim() == 2);
    REQUIRE(t.size() == 6);
    REQUIRE(t.dim(1) == 3);
    REQUIRE_FALSE(t.requires_grad());
    REQUIRE_THROWS_AS(Tensor<float>::from({2, 2}, {1, 2, 3}), amc::DimensionError);
    REQUIRE_THROWS_AS(Tensor<float>::zeros({0, 3}), amc::DimensionError);
    REQUIRE_THROWS_AS(Tensor<float>::zeros({2, -1}), amc::DimensionError);
    REQUIRE(Tensor<float>::scalar(4.5f).item() == 4.5f);
    REQUIRE_THROWS_AS(t.item(), amc::ContractError);
}

TEST_CASE("elementwise ops match closed forms and finite differences", "[tensor][autodiff]") {
    amc::Rng rng(11);

    SECTION("add/sub/mul/divide") {
        auto a = rand_t({3, 4}, rng);
        auto b = rand_t({3, 4}, rng, 0.5, 2.0);  // away from zero for divide
        auto ra = grad_check<double>({a, b}, [&] { return amc::sum(amc::add(a, b)); });
        REQUIRE(ra.ok(1e-6));
        auto rs = grad_check<double>({a, b}, [&] { return amc::sum(amc::sub(a, b)); });
        REQUIRE(rs.ok(1e-6));
        auto rm = grad_check<double>({a, b}, [&] { return amc::sum(amc::mul(a, b)); });
        REQUIRE(rm.ok(1e-6));
        auto rd = grad_check<double>({a, b}, [&] { return amc::sum(amc::divide(a, b)); });
        REQUIRE(rd.ok(1e-5));
        auto v = amc::divide(a, b);
        for (std::size_t i = 0; i < v.values().size(); ++i)
            REQUIRE(close(v.values()[i], a.values()[i] / b.values()[i], 1e-12));
        REQUIRE_THROWS_AS(amc::add(a, rand_t({4, 3}, rng)), amc::DimensionError);
    }

    SECTION("scale and scale_by") {
        auto a = rand_t({7}, rng);
        auto s = Tensor<double>::scalar(0.37, true);
        auto r1 = grad_check<double>({a}, [&] { return amc::sum(amc::scale(a, -2.5)); });
        REQUIRE(r1.ok(1e-6));
        auto r2 = grad_check<double>({a, s}, [&] { return amc::sum(amc::scale_by(a, s)); });
        REQUIRE(r2.ok(1e-6));
        REQUIRE_THROWS_AS(amc::scale_by(a, rand_t({2}, rng)), amc::DimensionError);
    }

    SECTION("relu away from the kink") {
        auto a = rand_t({20}, rng);
        for (auto& v : a.values_mut())
            if (std::fabs(v) < 0.05) v = 0.1;  // keep FD off the nondifferentiable point
        auto r = grad_check<double>({a}, [&] { return amc::sum(amc::relu(a)); });
        REQUIRE(r.ok(1e-6));
        auto y = amc::relu(a);
        for (std::size_t i = 0; i < y.values().size(); ++i)
            REQUIRE(y.values()[i] == std::max(0.0, a.values()[i]));
    }

    SECTION("sigmoid") {
        auto a = rand_t({12}, rng, -4.0, 4.0);
        auto r = grad_check<double>({a}, [&] { return amc::sum(amc::sigmoid(a)); });
        REQUIRE(r.ok(1e-6));
        auto y = amc::sigmoid(Tensor<double>::from({3}, {0.0, 50.0, -50.0}));
        REQUIRE(close(y.values()[0], 0.5));
        REQUIRE(y.values()[1] > 0.999999);
        REQUIRE(y.values()[2] < 1e-6);
        REQUIRE(std::isfinite(y.values()[2]));
    }

    SECTION("sqrt and clamp_min") {
        auto a = rand_t({9}, rng, 0.3, 2.0);
        auto r = grad_check<double>({a}, [&] { return amc::sum(amc::sqrt_op(a)); });
        REQUIRE(r.ok(1e-6));
        REQUIRE_THROWS_AS(amc::sqrt_op(Tensor<double>::from({1}, {-0.1})), amc::ContractError);
        auto b = rand_t({10}, rng, -1.0, 1.0);
        for (auto& v : b.values_mut())
            if (std::fabs(v - 0.2) < 0.05) v = 0.5;  // off the clamp boundary
        auto rc = grad_check<double>({b}, [&] { return amc::sum(amc::clamp_min(b, 0.2)); });
        REQUIRE(rc.ok(1e-6));
        auto y = amc::clamp_min(b, 0.2);
        for (auto v : y.values()) REQUIRE(v >= 0.2);
    }
}

TEST_CASE("reductions and contractions", "[tensor][autodiff]") {
    amc::Rng rng(12);

    SECTION("sum and dot") {
        auto a = rand_t({3, 5}, rng);
        auto b = rand_t({3, 5}, rng);
        double expect = 0.0;
        for (std::size_t i = 0; i < a.values().size(); ++i) expect += a.values()[i] * b.values()[i];
        REQUIRE(close(amc::dot(a, b).item(), expect, 1e-12));
        auto r = grad_check<double>({a, b}, [&] { return amc::dot(a, b); });
        REQUIRE(r.ok(1e-6));
    }

    SECTION("matvec") {
        auto W = rand_t({4, 6}, rng);
        auto x = rand_t({6}, rng);
        auto y = amc::matvec(W, x);
        for (int i = 0; i < 4; ++i) {
            double e = 0.0;
            for (int j = 0; j < 6; ++j) e += W.values()[static_cast<std::size_t>(i * 6 + j)] * x.values()[static_cast<std::size_t>(j)];
            REQUIRE(close(y.values()[static_cast<std::size_t>(i)], e, 1e-12));
        }
        auto r = grad_check<double>({W, x}, [&] { return amc::sum(amc::mul(amc::matvec(W, x), amc::matvec(W, x))); });
        REQUIRE(r.ok(1e-5));
        REQUIRE_THROWS_AS(amc::matvec(W, rand_t({5}, rng)), amc::DimensionError);
    }
}

TEST_CASE("softmax values and gradient", "[tensor][autodiff]") {
    auto x = Tensor<double>::from({2}, {2.0, 0.5});
    auto p = amc::softmax(x);
    REQUIRE(close(p.values()[0], 0.8176, 1e-3, 5e-5));
    REQUIRE(close(p.values()[1], 0.1824, 1e-3, 5e-5));
    REQUIRE(close(p.values()[0] + p.values()[1], 1.0, 1e-12));

    // Shift invariance.
    auto xs = Tensor<double>::from({2}, {1002.0, 1000.5});
    auto ps = amc::softmax(xs);
    REQUIRE(close(ps.values()[0], p.values()[0], 1e-12));

    amc::Rng rng(13);
    auto z = rand_t({6}, rng, -2.0, 2.0);
    auto w = rand_t({6}, rng);
    auto r = grad_check<double>({z, w}, [&] { return amc::dot(amc::softmax(z), w); });
    REQUIRE(r.ok(1e-5));
}

TEST_CASE("cross entropy from logits", "[tensor][autodiff]") {
    // With logits = ln(p), the loss reduces to -ln(p[label]).
    auto logits = Tensor<double>::from({3}, {std::log(0.2), std::log(0.5), std::log(0.3)});
    REQUIRE(close(amc::cross_entropy_logits(logits, 1).item(), -std::log(0.5), 1e-12));
    REQUIRE(close(amc::cross_entropy_logits(logits, 0).item(), -std::log(0.2), 1e-12));

    // Large logits must not overflow.
    auto big = Tensor<double>::from({3}, {1000.0, 999.0, -1000.0});
    REQUIRE(std::isfinite(amc::cross_entropy_logits(big, 0).item()));

    amc::Rng rng(14);
    auto z = rand_t({5}, rng, -3.0, 3.0);
    for (int label : {0, 2, 4}) {
        auto r = grad_check<double>({z}, [&] { return amc::cross_entropy_logits(z, label); });
        REQUIRE(r.ok(1e-5));
    }
    REQUIRE_THROWS_AS(amc::cross_entropy_logits(z, 5), amc::ContractError);
    REQUIRE_THROWS_AS(amc::cross_entropy_logits(z, -1), amc::ContractError);
}

TEST_CASE("slice, concat, and scalar mean", "[tensor][autodiff]") {
    amc::Rng rng(15);
    auto a = rand_t({4}, rng);
    auto r1 = grad_check<double>({a}, [&] { return amc::slice_scalar(a, 2); });
    REQUIRE(r1.ok(1e-6));
    REQUIRE_THROWS_AS(amc::slice_scalar(a, 4), amc::ContractError);

    auto b = rand_t({1}, rng);
    auto c = rand_t({1}, rng);
    auto r2 = grad_check<double>({b, c}, [&] {
        std::vector<Tensor<double>> parts{b, amc::scale(c, 2.0), amc::mul(b, c)};
        return amc::dot(amc::concat_scalars(parts), amc::concat_scalars(parts));
    });
    REQUIRE(r2.ok(1e-5));

    std::vector<Tensor<double>> xs{Tensor<double>::scalar(1.0), Tensor<double>::scalar(2.0),
                                   Tensor<double>::scalar(6.0)};
    REQUIRE(close(amc::mean_scalars(xs).item(), 3.0, 1e-12));
}

TEST_CASE("backward contracts and accumulation", "[autodiff]") {
    amc::Rng rng(16);
    auto a = rand_t({3}, rng);

    SECTION("loss must be scalar") {
        auto y = amc::scale(a, 2.0);
        REQUIRE_THROWS_AS(amc::backward(y), amc::ContractError);
    }

    SECTION("loss must be grad-tracked") {
        auto frozen = Tensor<double>::from({3}, {1, 2, 3});
        auto y = amc::sum(amc::scale(frozen, 2.0));
        REQUIRE_THROWS_AS(amc::backward(y), amc::ContractError);
    }

    SECTION("gradients accumulate until zeroed") {
        a.zero_grad();
        amc::backward(amc::sum(a));
        amc::backward(amc::sum(a));
        for (auto g : a.grad()) REQUIRE(close(g, 2.0, 1e-12));
        a.zero_grad();
        amc::backward(amc::sum(a));
        for (auto g : a.grad()) REQUIRE(close(g, 1.0, 1e-12));
    }

    SECTION("diamond-shaped reuse accumulates once per path") {
        auto x = rand_t({1}, rng, 0.5, 1.5);
        // y = x*x + 3x, dy/dx = 2x + 3
        x.zero_grad();
        amc::backward(amc::add(amc::mul(x, x), amc::scale(x, 3.0)));
        REQUIRE(close(x.grad()[0], 2.0 * x.values()[0] + 3.0, 1e-12));
    }

    SECTION("deep chain with shared subexpression passes finite differences") {
        auto x = rand_t({5}, rng, 0.2, 1.0);
        auto r = grad_check<double>({x}, [&] {
            auto s = amc::sigmoid(x);
            auto t = amc::mul(s, s);
            auto u = amc::add(t, amc::relu(amc::sub(s, amc::scale(x, 0.1))));
            return amc::sum(amc::mul(u, s));
        });
        REQUIRE(r.ok(1e-5));
    }
}

TEST_CASE("NoGradGuard suppresses tape construction", "[autodiff]") {
    amc::Rng rng(17);
    auto a = rand_t({4}, rng);
    {
        amc::NoGradGuard ng;
        auto y = amc::sum(amc::mul(a, a));
        REQUIRE_FALSE(y.requires_grad());
        REQUIRE_THROWS_AS(amc::backward(y), amc::ContractError);
    }
    // Recording resumes after the guard leaves scope.
    auto y2 = amc::sum(amc::mul(a, a));
    REQUIRE(y2.requires_grad());
}

TEST_CASE("finite checks flag non-finite results when enabled", "[tensor]") {
    amc::set_finite_checks(true);
    auto a = Tensor<double>::from({2}, {1.0, 0.0});
    auto b = Tensor<double>::from({2}, {1.0, 0.0});
    REQUIRE_THROWS_AS(amc::divide(a, b), amc::Error);
    amc::set_finite_checks(false);
    REQUIRE_NOTHROW(amc::divide(a, b));
}
