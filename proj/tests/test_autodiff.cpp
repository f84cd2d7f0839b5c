#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "core/autodiff.hpp"
#include "test_support.hpp"

using namespace ivusseg;
using graph::Padding;
using testsup::grad_check;
using testsup::random_tensor;

TEST_CASE("backward: loss = sum(w) gives all-ones gradient") {
    auto w = graph::leaf(Tensor({2, 3}, {1, 2, 3, 4, 5, 6}), "w");
    auto loss = graph::sum(w);
    graph::backward(loss);
    REQUIRE(!w->grad.empty());
    for (std::size_t i = 0; i < w->grad.numel(); ++i) CHECK(w->grad[i] == 1.0);
}

TEST_CASE("backward: constant loss leaves gradients zero") {
    auto w = graph::leaf(Tensor({4}), "w");
    auto loss = graph::sum(graph::constant(Tensor::scalar(3.0)));
    graph::backward(loss);
    CHECK(w->grad.empty());  // never touched by the sweep
}

TEST_CASE("backward requires a scalar loss") {
    auto w = graph::leaf(Tensor({2, 2}), "w");
    CHECK_THROWS_AS(graph::backward(w), DimError);
}

TEST_CASE("grad accumulates across shared use") {
    auto w = graph::leaf(Tensor({3}, {1, 2, 3}), "w");
    auto loss = graph::sum(graph::add(w, w));
    graph::backward(loss);
    for (std::size_t i = 0; i < 3; ++i) CHECK(w->grad[i] == 2.0);
}

TEST_CASE("concat backward routes one-hot gradients without mixing") {
    std::mt19937_64 rng(21);
    auto a = graph::leaf(random_tensor({1, 2, 2, 2}, rng), "a");
    auto b = graph::leaf(random_tensor({1, 3, 2, 2}, rng), "b");
    auto cat = graph::concat_channels(a, b);
    // One-hot upstream gradient on a b-side element.
    for (std::size_t hot = 0; hot < cat->value.numel(); ++hot) {
        a->zero_grad();
        b->zero_grad();
        cat->zero_grad();
        Tensor seed(cat->value.shape());
        seed[hot] = 1.0;
        cat->accumulate(seed);
        cat->backprop(*cat);
        double asum = 0.0, bsum = 0.0;
        for (std::size_t i = 0; i < a->grad.numel(); ++i) asum += a->grad[i];
        for (std::size_t i = 0; i < b->grad.numel(); ++i) bsum += b->grad[i];
        const bool in_a = hot < a->value.numel();
        CHECK(asum == (in_a ? 1.0 : 0.0));
        CHECK(bsum == (in_a ? 0.0 : 1.0));
    }
}

TEST_CASE("finite differences: conv2d w.r.t. input, kernel, bias") {
    std::mt19937_64 rng(31);
    for (int trial = 0; trial < 20; ++trial) {
        auto x = graph::leaf(random_tensor({1, 2, 5, 5}, rng), "x");
        auto k = graph::leaf(random_tensor({3, 2, 3, 3}, rng), "k");
        auto b = graph::leaf(random_tensor({3}, rng), "b");
        const Padding pad = trial % 2 ? Padding::valid : Padding::same;
        const int mix_hw = pad == Padding::same ? 5 : 3;
        auto mix = graph::constant(random_tensor({1, 3, mix_hw, mix_hw}, rng));
        auto loss_of = [&] {
            auto y = graph::conv2d(x, k, b, 1, pad);
            return graph::sum(graph::mul(y, mix));
        };
        auto res = grad_check({x, k, b}, loss_of);
        CHECK(res.ok);
        CHECK(res.checked >= 50);
    }
}

TEST_CASE("finite differences: prelu w.r.t. input and alpha") {
    std::mt19937_64 rng(37);
    for (int trial = 0; trial < 20; ++trial) {
        auto x = graph::leaf(random_tensor({1, 2, 4, 4}, rng), "x");
        auto a = graph::leaf(Tensor::scalar(0.25), "alpha");
        auto mix = graph::constant(random_tensor({1, 2, 4, 4}, rng));
        auto loss_of = [&] { return graph::sum(graph::mul(graph::prelu(x, a), mix)); };
        auto res = grad_check({x, a}, loss_of);
        CHECK(res.ok);
    }
    SUBCASE("alpha gradient at x = -2 is -2") {
        auto x = graph::constant(Tensor::scalar(-2.0));
        auto a = graph::leaf(Tensor::scalar(0.25), "alpha");
        auto y = graph::prelu(x, a);
        graph::backward(graph::sum(y));
        CHECK(a->grad[0] == doctest::Approx(-2.0).epsilon(1e-6));
    }
}

TEST_CASE("finite differences: sigmoid") {
    std::mt19937_64 rng(41);
    for (int trial = 0; trial < 20; ++trial) {
        auto x = graph::leaf(random_tensor({1, 1, 4, 4}, rng, -3.0, 3.0), "x");
        auto mix = graph::constant(random_tensor({1, 1, 4, 4}, rng));
        auto loss_of = [&] { return graph::sum(graph::mul(graph::sigmoid(x), mix)); };
        CHECK(grad_check({x}, loss_of).ok);
    }
}

TEST_CASE("finite differences: maxpool2") {
    std::mt19937_64 rng(43);
    for (int trial = 0; trial < 20; ++trial) {
        // Distinct values keep FD away from the max kink.
        auto x = graph::leaf(random_tensor({1, 2, 4, 4}, rng), "x");
        auto mix = graph::constant(random_tensor({1, 2, 2, 2}, rng));
        auto loss_of = [&] { return graph::sum(graph::mul(graph::maxpool2(x), mix)); };
        CHECK(grad_check({x}, loss_of).ok);
    }
}

TEST_CASE("finite differences: upsample2_nearest") {
    std::mt19937_64 rng(47);
    for (int trial = 0; trial < 20; ++trial) {
        auto x = graph::leaf(random_tensor({1, 2, 3, 3}, rng), "x");
        auto mix = graph::constant(random_tensor({1, 2, 6, 6}, rng));
        auto loss_of = [&] {
            return graph::sum(graph::mul(graph::upsample2_nearest(x), mix));
        };
        CHECK(grad_check({x}, loss_of).ok);
    }
}

TEST_CASE("finite differences: concat_channels") {
    std::mt19937_64 rng(53);
    for (int trial = 0; trial < 20; ++trial) {
        auto a = graph::leaf(random_tensor({1, 2, 3, 3}, rng), "a");
        auto b = graph::leaf(random_tensor({1, 1, 3, 3}, rng), "b");
        auto mix = graph::constant(random_tensor({1, 3, 3, 3}, rng));
        auto loss_of = [&] {
            return graph::sum(graph::mul(graph::concat_channels(a, b), mix));
        };
        CHECK(grad_check({a, b}, loss_of).ok);
    }
}

TEST_CASE("finite differences: soft dice loss w.r.t. predictions") {
    std::mt19937_64 rng(59);
    for (int trial = 0; trial < 20; ++trial) {
        auto p = graph::leaf(random_tensor({1, 1, 8, 8}, rng, 0.05, 0.95), "p");
        Tensor t({1, 1, 8, 8});
        std::uniform_int_distribution<int> bit(0, 1);
        for (std::size_t i = 0; i < t.numel(); ++i) t[i] = bit(rng);
        auto loss_of = [&] { return graph::soft_dice_loss(p, t, 1.0); };
        CHECK(grad_check({p}, loss_of).ok);
    }
    SUBCASE("batched predictions average per-sample losses") {
        auto p = graph::leaf(random_tensor({3, 1, 4, 4}, rng, 0.05, 0.95), "p");
        Tensor t({3, 1, 4, 4});
        std::uniform_int_distribution<int> bit(0, 1);
        for (std::size_t i = 0; i < t.numel(); ++i) t[i] = bit(rng);
        auto loss_of = [&] { return graph::soft_dice_loss(p, t, 1.0); };
        CHECK(grad_check({p}, loss_of).ok);
    }
}

TEST_CASE("elementwise op forwards and gradients") {
    std::mt19937_64 rng(61);
    auto a = graph::leaf(random_tensor({5}, rng), "a");
    auto b = graph::leaf(random_tensor({5}, rng), "b");
    SUBCASE("mul") {
        auto loss_of = [&] { return graph::sum(graph::mul(a, b)); };
        CHECK(grad_check({a, b}, loss_of).ok);
    }
    SUBCASE("affine") {
        auto loss_of = [&] { return graph::sum(graph::affine(a, -2.5, 1.0)); };
        CHECK(grad_check({a}, loss_of).ok);
        CHECK(graph::affine(graph::constant(Tensor::scalar(2.0)), -2.5, 1.0)->value[0] ==
              doctest::Approx(-4.0));
    }
}
