#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>

#include "doctest.h"
#include "testutil.hpp"

using namespace hyda;
using testutil::random_tensor;

TEST_CASE("tensor shape validation") {
    CHECK_THROWS_AS(Tensor::create({2, 3}, {1.0, 2.0}), ShapeError);
    CHECK_THROWS_AS(Tensor::create({0}, {}), ShapeError);
    auto t = Tensor::create({2, 2}, {1, 2, 3, 4});
    CHECK(t->numel() == 4);
}

TEST_CASE("pointwise_conv3d scalar and identity cases") {
    auto x = Tensor::create({1, 1, 1, 1, 1}, {2.0});
    auto w = Tensor::create({1, 1}, {3.0});
    CHECK(ops::pointwise_conv3d(x, w)->item() == doctest::Approx(6.0).epsilon(1e-15));

    Rng rng(11);
    auto x2 = random_tensor(rng, {1, 3, 2, 2, 2});
    auto eye = Tensor::create({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
    auto zb = Tensor::zeros({3});
    auto y = ops::pointwise_conv3d(x2, eye, zb);
    for (size_t i = 0; i < x2->data.size(); ++i) CHECK(y->data[i] == x2->data[i]);
}

TEST_CASE("pointwise_conv3d matches the loop oracle") {
    Rng rng(12);
    for (int rep = 0; rep < 20; ++rep) {
        auto x = random_tensor(rng, {1, 2, 2, 2, 2});
        auto w = random_tensor(rng, {3, 2});
        auto b = random_tensor(rng, {3});
        auto got = ops::pointwise_conv3d(x, w, b);
        auto want = testutil::pointwise_oracle(*x, *w, b.get());
        for (size_t i = 0; i < want.size(); ++i)
            CHECK(std::fabs(got->data[i] - want[i]) < 1e-12);
    }
}

TEST_CASE("pointwise_conv3d shape errors carry both shapes") {
    auto x = Tensor::zeros({1, 2, 1, 1, 1});
    auto w = Tensor::zeros({3, 4});
    try {
        ops::pointwise_conv3d(x, w);
        FAIL("expected ShapeError");
    } catch (const ShapeError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("[3,4]") != std::string::npos);
        CHECK(msg.find("[1,2,1,1,1]") != std::string::npos);
    }
}

TEST_CASE("conv3d_same zero and Dirac kernels") {
    Rng rng(13);
    auto x = random_tensor(rng, {1, 2, 3, 3, 3});
    auto zero = Tensor::zeros({2, 2, 3, 3, 3});
    auto zc = ops::conv3d_same(x, zero);
    for (double v : zc->data) CHECK(v == 0.0);

    auto x1 = random_tensor(rng, {1, 1, 4, 4, 4});
    std::vector<double> k(27, 0.0);
    k[13] = 1.0;  // center tap
    auto dirac = Tensor::create({1, 1, 3, 3, 3}, k);
    auto y = ops::conv3d_same(x1, dirac);
    for (size_t i = 0; i < x1->data.size(); ++i) CHECK(y->data[i] == x1->data[i]);
}

TEST_CASE("conv3d_same matches the 6-nested-loop oracle") {
    Rng rng(14);
    for (int rep = 0; rep < 10; ++rep) {
        auto x = random_tensor(rng, {1, 2, 4, 4, 4});
        auto w = random_tensor(rng, {3, 2, 3, 3, 3});
        auto got = ops::conv3d_same(x, w);
        auto want = testutil::conv3d_oracle(*x, *w);
        for (size_t i = 0; i < want.size(); ++i)
            CHECK(std::fabs(got->data[i] - want[i]) < 1e-12);
    }
}

TEST_CASE("conv3d_same uses the frozen-tensor cache consistently") {
    Rng rng(15);
    auto x = random_tensor(rng, {1, 2, 4, 4, 4});
    x->frozen = true;
    auto w = random_tensor(rng, {2, 2, 3, 3, 3});
    auto first = ops::conv3d_same(x, w);
    auto second = ops::conv3d_same(x, w);  // cache hit
    for (size_t i = 0; i < first->data.size(); ++i) CHECK(first->data[i] == second->data[i]);
    auto want = testutil::conv3d_oracle(*x, *w);
    for (size_t i = 0; i < want.size(); ++i)
        CHECK(std::fabs(second->data[i] - want[i]) < 1e-12);
}

TEST_CASE("activation values") {
    auto x = Tensor::create({3}, {-1.5, 2.5, 0.0});
    auto r = ops::activation(x, Activation::relu);
    CHECK(r->data[0] == 0.0);
    CHECK(r->data[1] == 2.5);
    auto s = ops::activation(Tensor::create({2}, {0.0, 2.0}), Activation::sigmoid);
    CHECK(s->data[0] == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(s->data[1] == doctest::Approx(0.8807970779778823).epsilon(1e-6));
}

TEST_CASE("softmax rows: uniform, closed form, shift invariance") {
    auto u = ops::softmax_rows(Tensor::create({1, 2}, {0.0, 0.0}));
    CHECK(u->data[0] == doctest::Approx(0.5).epsilon(1e-15));

    const double c = -1.75;  // any offset
    auto p = ops::softmax_rows(Tensor::create({1, 2}, {c, c + std::log(3.0)}));
    CHECK(p->data[0] == doctest::Approx(0.25).epsilon(1e-12));
    CHECK(p->data[1] == doctest::Approx(0.75).epsilon(1e-12));

    // dyadic values keep the shift exact in floating point
    auto a = Tensor::create({2, 3}, {0.5, 1.25, -2.0, 0.25, -0.75, 3.5});
    std::vector<double> shifted = a->data;
    for (auto& v : shifted) v += 4.0;
    auto b = Tensor::create({2, 3}, shifted);
    auto pa = ops::softmax_rows(a);
    auto pb = ops::softmax_rows(b);
    for (size_t i = 0; i < pa->data.size(); ++i) CHECK(pa->data[i] == pb->data[i]);

    Rng rng(16);
    for (int rep = 0; rep < 10; ++rep) {
        auto x = random_tensor(rng, {3, 4});
        auto sm = ops::softmax_rows(x);
        for (int64_t i = 0; i < 3; ++i) {
            double sum = 0.0;
            for (int64_t j = 0; j < 4; ++j) sum += sm->data[i * 4 + j];
            CHECK(std::fabs(sum - 1.0) < 1e-12);
        }
    }
}

TEST_CASE("global_avg_pool constant map, arithmetic mean, gradient") {
    auto c = ops::global_avg_pool(Tensor::full({1, 2, 2, 2, 2}, 3.25));
    CHECK(c->shape == Shape{1, 2, 1, 1, 1});
    for (double v : c->data) CHECK(v == 3.25);

    std::vector<double> vals(8);
    for (int i = 0; i < 8; ++i) vals[static_cast<size_t>(i)] = i + 1;  // sum 36
    auto m = ops::global_avg_pool(Tensor::create({1, 1, 2, 2, 2}, vals));
    CHECK(m->item() == doctest::Approx(4.5).epsilon(1e-15));

    auto x = Tensor::create({1, 1, 2, 2, 2}, vals, true);
    ops::sum_all(ops::global_avg_pool(x))->backward();
    for (double g : x->grad) CHECK(g == doctest::Approx(1.0 / 8.0).epsilon(1e-15));
}

TEST_CASE("reshape and flatten") {
    auto big = Tensor::zeros({1, 864, 1, 1, 1});
    CHECK(ops::reshape(big, {1, 32, 3, 3, 3})->shape == Shape{1, 32, 3, 3, 3});

    Rng rng(17);
    auto x = random_tensor(rng, {2, 3, 4});
    auto rt = ops::reshape(ops::reshape(x, {4, 6}), {2, 3, 4});
    for (size_t i = 0; i < x->data.size(); ++i) CHECK(rt->data[i] == x->data[i]);

    auto f = ops::flatten(random_tensor(rng, {1, 2, 2, 2, 2}));
    CHECK(f->shape == Shape{1, 16});

    CHECK_THROWS_AS(ops::reshape(x, {5, 5}), ShapeError);
}

TEST_CASE("backward basics") {
    // loss = sum(w*x), x constant -> grad w = x
    auto w = Tensor::create({3}, {1.0, -2.0, 0.5}, true);
    auto x = Tensor::create({3}, {4.0, 5.0, 6.0});
    ops::sum_all(ops::mul(w, x))->backward();
    for (int i = 0; i < 3; ++i) CHECK(w->grad[static_cast<size_t>(i)] == x->data[static_cast<size_t>(i)]);

    // loss = relu(-w)^2 at w=1: inactive branch, zero gradient
    auto w2 = Tensor::create({1}, {1.0}, true);
    auto loss = ops::sum_all(ops::pow_const(ops::relu(ops::scale(w2, -1.0)), 2.0));
    loss->backward();
    CHECK(w2->grad[0] == 0.0);

    // gradient accumulates over repeated uses
    auto w3 = Tensor::create({1}, {2.0}, true);
    ops::sum_all(ops::add(w3, w3))->backward();
    CHECK(w3->grad[0] == 2.0);

    CHECK_THROWS_AS(Tensor::create({2}, {1.0, 2.0}, true)->backward(), ShapeError);
}

TEST_CASE("finite_diff_check closed forms") {
    // f(w) = w^2 at w=3: analytic 6
    auto w = Tensor::create({1}, {3.0}, true);
    ModelParams p;
    p.add("w", w, DecayGroup::other);
    auto fd = finite_diff_check(
        [](ModelParams& mp) {
            auto t = mp.items()[0].value;
            return ops::sum_all(ops::mul(t, t));
        },
        p, 1e-4);
    CHECK(fd.max_rel_error < 1e-8);

    // linear map: central differences exact up to rounding
    auto w2 = Tensor::create({4}, {0.5, -1.0, 2.0, 3.0}, true);
    ModelParams p2;
    p2.add("w", w2, DecayGroup::other);
    auto fd2 = finite_diff_check(
        [](ModelParams& mp) { return ops::sum_all(ops::scale(mp.items()[0].value, 2.0)); }, p2,
        1e-4);
    CHECK(fd2.max_rel_error < 1e-10);

    CHECK_THROWS_AS(finite_diff_check(
                        [](ModelParams& mp) { return ops::sum_all(mp.items()[0].value); }, p2,
                        1e-2),
                    ConfigError);
}

// Gradient property: every differentiable op matches central differences on
// randomized inputs (kept away from relu kinks so the probe interval is
// smooth).
TEST_CASE("op gradients match finite differences") {
    Rng rng(18);
    // fixed weighting tensors (keyed by shape) so the probed loss stays
    // deterministic across the +/-h evaluations
    std::map<Shape, TensorPtr> weights;
    auto weighted_sum = [&](const TensorPtr& t) {
        auto& c = weights[t->shape];
        if (!c) c = random_tensor(rng, t->shape);
        return ops::sum_all(ops::mul(t, c));
    };
    auto check = [&](const char* name, auto builder, std::vector<TensorPtr> inputs) {
        ModelParams params;
        int i = 0;
        for (auto& t : inputs) params.add("t" + std::to_string(i++), t, DecayGroup::other);
        auto fd = finite_diff_check(
            [&](ModelParams& mp) { return builder(mp); }, params, 1e-4);
        INFO(name);
        CHECK(fd.max_rel_error < 1e-4);
    };

    {
        auto a = random_tensor(rng, {3, 4}, -1, 1, true);
        auto b = random_tensor(rng, {3, 4}, -1, 1, true);
        check("add/mul", [&](ModelParams& mp) {
            return ops::sum_all(ops::mul(ops::add(mp.items()[0].value, mp.items()[1].value),
                                         mp.items()[1].value));
        }, {a, b});
    }
    {
        auto a = random_tensor(rng, {3, 5}, -1, 1, true);
        auto b = random_tensor(rng, {5, 2}, -1, 1, true);
        auto bias = random_tensor(rng, {2}, -1, 1, true);
        check("matmul+bias+softmax", [&](ModelParams& mp) {
            auto y = ops::softmax_rows(ops::add_rowvec(
                ops::matmul(mp.items()[0].value, mp.items()[1].value), mp.items()[2].value));
            return weighted_sum(y);
        }, {a, b, bias});
    }
    {
        // keep pre-activations away from the kink
        auto a = random_tensor(rng, {4, 4}, 0.05, 1.0, true);
        check("relu", [&](ModelParams& mp) {
            return weighted_sum(ops::relu(mp.items()[0].value));
        }, {a});
    }
    {
        auto a = random_tensor(rng, {4, 4}, -1, 1, true);
        check("sigmoid", [&](ModelParams& mp) {
            return weighted_sum(ops::sigmoid(mp.items()[0].value));
        }, {a});
    }
    {
        auto a = random_tensor(rng, {6}, 0.1, 0.9, true);
        check("log/pow/clamp", [&](ModelParams& mp) {
            auto t = ops::clamp(mp.items()[0].value, 1e-12, 1.0 - 1e-12);
            return ops::sum_all(ops::mul(ops::pow_const(ops::rsub_const(1.0, t), 2.0),
                                         ops::log_elem(t)));
        }, {a});
    }
    {
        auto x = random_tensor(rng, {1, 2, 3, 3, 3}, -1, 1, true);
        auto w = random_tensor(rng, {2, 2, 3, 3, 3}, -1, 1, true);
        check("conv3d_same", [&](ModelParams& mp) {
            return weighted_sum(ops::conv3d_same(mp.items()[0].value, mp.items()[1].value));
        }, {x, w});
    }
    {
        auto x = random_tensor(rng, {2, 3, 2, 2, 2}, -1, 1, true);
        auto w = random_tensor(rng, {2, 3}, -1, 1, true);
        auto b = random_tensor(rng, {2}, -1, 1, true);
        check("pointwise_conv3d", [&](ModelParams& mp) {
            return weighted_sum(ops::pointwise_conv3d(mp.items()[0].value, mp.items()[1].value,
                                                      mp.items()[2].value));
        }, {x, w, b});
    }
    {
        auto x = random_tensor(rng, {1, 3, 2, 2, 2}, -1, 1, true);
        auto g = random_tensor(rng, {1, 3, 1, 1, 1}, -1, 1, true);
        check("pool/gate/swap/concat", [&](ModelParams& mp) {
            auto pooled = ops::global_avg_pool(mp.items()[0].value);
            auto gated = ops::mul_channel_gate(mp.items()[0].value, ops::sigmoid(mp.items()[1].value));
            auto sw = ops::swap_axes01(ops::concat_channels(gated, mp.items()[0].value));
            return ops::add(weighted_sum(sw), weighted_sum(pooled));
        }, {x, g});
    }
    {
        auto x = random_tensor(rng, {3, 4}, -1, 1, true);
        check("rows/cols assembly", [&](ModelParams& mp) {
            auto r0 = ops::select_row(mp.items()[0].value, 0);
            auto r2 = ops::select_row(mp.items()[0].value, 2);
            auto stacked = ops::concat_rows({r0, r2, r0});
            auto wide = ops::concat_cols({stacked, ops::scale(stacked, -0.5)});
            return weighted_sum(wide);
        }, {x});
    }
    {
        auto p = random_tensor(rng, {4, 3}, 0.1, 0.9, true);
        std::vector<int64_t> y = {0, 2, 1, 2};
        check("gather_rows", [&, y](ModelParams& mp) {
            return ops::sum_all(ops::log_elem(ops::gather_rows(mp.items()[0].value, y)));
        }, {p});
    }
}

TEST_CASE("debug validation flags non-finite values") {
    Tensor::set_debug_validation(true);
    auto x = Tensor::create({1}, {1e308});
    CHECK_THROWS_AS(ops::mul(ops::scale(x, 10.0), Tensor::create({1}, {10.0})), NumericError);
    Tensor::set_debug_validation(false);
}

TEST_CASE("gather_rows rejects out-of-range labels") {
    auto p = Tensor::full({2, 2}, 0.5);
    CHECK_THROWS_AS(ops::gather_rows(p, {0, 2}), LabelError);
    CHECK_THROWS_AS(ops::gather_rows(p, {-1, 0}), LabelError);
}
