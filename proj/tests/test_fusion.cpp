#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>

#include "doctest.h"
#include "hyda/fusion.hpp"
#include "testutil.hpp"

using namespace hyda;
using testutil::random_tensor;

namespace {

KernelGeneratorParams random_generator(Rng& rng, int64_t c, int64_t c_hid, int64_t c_out,
                                       bool tracked = false) {
    return {random_tensor(rng, {c_hid, c / 27}, -0.5, 0.5, tracked),
            random_tensor(rng, {c_hid}, -0.5, 0.5, tracked),
            random_tensor(rng, {c_out, 1}, -0.5, 0.5, tracked),
            random_tensor(rng, {c_out}, -0.5, 0.5, tracked)};
}

KernelGeneratorParams zero_generator(int64_t c, int64_t c_hid, int64_t c_out) {
    return {Tensor::zeros({c_hid, c / 27}, true), Tensor::zeros({c_hid}, true),
            Tensor::zeros({c_out, 1}, true), Tensor::zeros({c_out}, true)};
}

FusionParams random_fusion(Rng& rng, int64_t c_hid, int64_t c_out, int64_t c_res,
                           bool tracked = false) {
    return {random_tensor(rng, {c_hid, 2 * c_out}, -0.5, 0.5, tracked),
            random_tensor(rng, {c_hid}, -0.5, 0.5, tracked),
            random_tensor(rng, {c_res, c_hid}, -0.5, 0.5, tracked),
            random_tensor(rng, {c_res}, -0.5, 0.5, tracked),
            random_tensor(rng, {c_res, c_hid}, -0.5, 0.5, tracked),
            random_tensor(rng, {c_res}, -0.5, 0.5, tracked)};
}

}  // namespace

TEST_CASE("kernel generator weight accounting") {
    CHECK(kernel_generator_weight_count(864, 384, 128) == 12416);
    CHECK(kernel_generator_weight_count(54, 16, 8) == 40);

    Rng rng(41);
    auto gen = random_generator(rng, 54, 16, 8);
    CHECK(gen.conv1_w->numel() + gen.conv2_w->numel() == 40);
}

TEST_CASE("generate_kernels shapes and zero case") {
    Rng rng(42);
    SUBCASE("shape at full scale") {
        auto gen = random_generator(rng, 864, 384, 128);
        auto k = generate_kernels(random_tensor(rng, {1, 864, 1, 1, 1}), gen);
        CHECK(k->shape == Shape{128, 384, 3, 3, 3});
    }
    SUBCASE("desk scale") {
        auto gen = random_generator(rng, 54, 16, 8);
        auto k = generate_kernels(random_tensor(rng, {1, 54, 1, 1, 1}), gen);
        CHECK(k->shape == Shape{8, 16, 3, 3, 3});
    }
    SUBCASE("zero generator emits zero kernels for any tap") {
        auto gen = zero_generator(54, 16, 8);
        auto k = generate_kernels(random_tensor(rng, {1, 54, 1, 1, 1}), gen);
        for (double v : k->data) CHECK(v == 0.0);
    }
    SUBCASE("C not divisible by 27") {
        auto gen = random_generator(rng, 54, 16, 8);
        CHECK_THROWS_AS(generate_kernels(random_tensor(rng, {1, 55, 1, 1, 1}), gen), ConfigError);
    }
    SUBCASE("distinct taps give distinct kernels") {
        auto gen = random_generator(rng, 54, 16, 8);
        auto k1 = generate_kernels(random_tensor(rng, {1, 54, 1, 1, 1}), gen);
        auto k2 = generate_kernels(random_tensor(rng, {1, 54, 1, 1, 1}), gen);
        bool differ = false;
        for (size_t i = 0; i < k1->data.size(); ++i) differ |= k1->data[i] != k2->data[i];
        CHECK(differ);
    }
}

TEST_CASE("dynamic_fuse") {
    Rng rng(43);
    auto fmap = random_tensor(rng, {1, 16, 4, 4, 4});

    SUBCASE("zero kernels produce zero output") {
        auto out = dynamic_fuse(Tensor::zeros({8, 16, 3, 3, 3}), fmap);
        for (double v : out->data) CHECK(v == 0.0);
    }
    SUBCASE("Dirac kernel reduces to ReLU of the map") {
        auto f1 = random_tensor(rng, {1, 1, 3, 3, 3});
        std::vector<double> k(27, 0.0);
        k[13] = 1.0;
        auto out = dynamic_fuse(Tensor::create({1, 1, 3, 3, 3}, k), f1);
        for (size_t i = 0; i < f1->data.size(); ++i)
            CHECK(out->data[i] == std::max(0.0, f1->data[i]));
    }
    SUBCASE("matches the loop oracle plus ReLU") {
        for (int rep = 0; rep < 10; ++rep) {
            auto f = random_tensor(rng, {1, 3, 4, 4, 4});
            auto k = random_tensor(rng, {2, 3, 3, 3, 3});
            auto got = dynamic_fuse(k, f);
            auto conv = testutil::conv3d_oracle(*f, *k);
            for (size_t i = 0; i < conv.size(); ++i)
                CHECK(std::fabs(got->data[i] - std::max(0.0, conv[i])) < 1e-12);
        }
    }
}

TEST_CASE("merge_enhance") {
    Rng rng(44);
    const int64_t c_hid = 16, c_out = 8, c_res = 2;
    auto o1 = random_tensor(rng, {1, c_out, 4, 4, 4});
    auto o2 = random_tensor(rng, {1, c_out, 4, 4, 4});

    SUBCASE("zero conv5 kills the output regardless of the gate") {
        auto fp = random_fusion(rng, c_hid, c_out, c_res);
        fp.conv5_w = Tensor::zeros({c_res, c_hid});
        fp.conv5_b = Tensor::zeros({c_res});
        auto out = merge_enhance(o1, o2, fp);
        for (double v : out->data) CHECK(v == 0.0);
    }
    SUBCASE("saturated gate reduces to ReLU(conv5(O))") {
        auto fp = random_fusion(rng, c_hid, c_out, c_res);
        fp.conv4_w = Tensor::zeros({c_res, c_hid});
        fp.conv4_b = Tensor::full({c_res}, 50.0);  // sigmoid -> 1
        auto out = merge_enhance(o1, o2, fp);
        auto merged = ops::pointwise_conv3d(ops::concat_channels(o1, o2), fp.conv3_w, fp.conv3_b);
        auto body = ops::relu(ops::pointwise_conv3d(merged, fp.conv5_w, fp.conv5_b));
        for (size_t i = 0; i < out->data.size(); ++i)
            CHECK(std::fabs(out->data[i] - body->data[i]) < 1e-6);
    }
    SUBCASE("desk shape flattens to the embedding width") {
        auto fp = random_fusion(rng, c_hid, c_out, c_res);
        auto out = merge_enhance(o1, o2, fp);
        CHECK(out->shape == Shape{1, c_res, 4, 4, 4});
        CHECK(ops::flatten(out)->shape == Shape{1, 128});
    }
    SUBCASE("gate values stay inside (0,1)") {
        auto fp = random_fusion(rng, c_hid, c_out, c_res);
        auto merged = ops::pointwise_conv3d(ops::concat_channels(o1, o2), fp.conv3_w, fp.conv3_b);
        auto gate = ops::sigmoid(
            ops::pointwise_conv3d(ops::global_avg_pool(merged), fp.conv4_w, fp.conv4_b));
        for (double v : gate->data) {
            CHECK(v > 0.0);
            CHECK(v < 1.0);
        }
    }
    SUBCASE("shape mismatch") {
        auto fp = random_fusion(rng, c_hid, c_out, c_res);
        CHECK_THROWS_AS(merge_enhance(o1, random_tensor(rng, {1, c_out, 4, 4, 2}), fp),
                        ShapeError);
    }
}

TEST_CASE("residual_enhance") {
    Rng rng(45);
    auto x = random_tensor(rng, {1, 16});
    auto o = random_tensor(rng, {1, 2, 2, 2, 2});

    SUBCASE("zero enhancement is the identity") {
        auto out = residual_enhance(x, Tensor::zeros({1, 2, 2, 2, 2}));
        for (size_t i = 0; i < x->data.size(); ++i) CHECK(out->data[i] == x->data[i]);
    }
    SUBCASE("zero embedding passes the flattened map through") {
        auto out = residual_enhance(Tensor::zeros({1, 16}), o);
        for (size_t i = 0; i < o->data.size(); ++i) CHECK(out->data[i] == o->data[i]);
    }
    SUBCASE("additivity in the enhancement") {
        auto o2 = random_tensor(rng, {1, 2, 2, 2, 2});
        auto sum = residual_enhance(x, ops::add(o, o2));
        auto parts = ops::add(residual_enhance(x, o), ops::flatten(o2));
        for (size_t i = 0; i < sum->data.size(); ++i)
            CHECK(std::fabs(sum->data[i] - parts->data[i]) < 1e-12);
    }
    SUBCASE("length mismatch") {
        CHECK_THROWS_AS(residual_enhance(random_tensor(rng, {1, 15}), o), ShapeError);
    }
}

TEST_CASE("fuse_all") {
    Rng rng(46);
    const int64_t b = 3, c = 54, c_hid = 8, c_out = 4, c_res = 1;
    auto f1 = random_tensor(rng, {b, c});
    auto f2 = random_tensor(rng, {b, c});
    std::vector<std::vector<TensorPtr>> maps(2), x_rows(2);
    for (int m = 0; m < 2; ++m) {
        for (int64_t n = 0; n < b; ++n) {
            maps[static_cast<size_t>(m)].push_back(random_tensor(rng, {1, c_hid, 4, 4, 4}));
            x_rows[static_cast<size_t>(m)].push_back(random_tensor(rng, {1, 64}));
        }
    }

    SUBCASE("zero generators and zero conv5 reduce to the pass-through") {
        auto g1 = zero_generator(c, c_hid, c_out);
        auto g2 = zero_generator(c, c_hid, c_out);
        FusionParams fp{Tensor::zeros({c_hid, 2 * c_out}), Tensor::zeros({c_hid}),
                        Tensor::zeros({c_res, c_hid}), Tensor::zeros({c_res}),
                        Tensor::zeros({c_res, c_hid}), Tensor::zeros({c_res})};
        auto out = fuse_all(f1, f2, maps, x_rows, g1, g2, fp);
        for (size_t m = 0; m < 2; ++m)
            for (size_t n = 0; n < 3; ++n)
                for (size_t i = 0; i < 64; ++i)
                    CHECK(out[m][n]->data[i] == x_rows[m][n]->data[i]);
    }
    SUBCASE("subject conditioning: different taps change the output on shared maps") {
        auto g1 = random_generator(rng, c, c_hid, c_out);
        auto g2 = random_generator(rng, c, c_hid, c_out);
        auto fp = random_fusion(rng, c_hid, c_out, c_res);
        // both subjects see the same map and embedding, but their taps differ
        std::vector<std::vector<TensorPtr>> shared_maps = {{maps[0][0], maps[0][0]}};
        std::vector<std::vector<TensorPtr>> shared_rows = {{x_rows[0][0], x_rows[0][0]}};
        auto out = fuse_all(random_tensor(rng, {2, c}), random_tensor(rng, {2, c}), shared_maps,
                            shared_rows, g1, g2, fp);
        bool differ = false;
        for (size_t i = 0; i < 64; ++i) differ |= out[0][0]->data[i] != out[0][1]->data[i];
        CHECK(differ);
    }
}

TEST_CASE("fusion path end-to-end gradient vs finite differences") {
    Rng rng(47);
    const int64_t c = 54, c_hid = 8, c_out = 4, c_res = 1;
    auto tap1 = random_tensor(rng, {1, c, 1, 1, 1});
    auto tap2 = random_tensor(rng, {1, c, 1, 1, 1});
    auto fmap = random_tensor(rng, {1, c_hid, 4, 4, 4});
    auto xrow = random_tensor(rng, {1, 64});
    auto g1 = random_generator(rng, c, c_hid, c_out, true);
    auto g2 = random_generator(rng, c, c_hid, c_out, true);
    auto fp = random_fusion(rng, c_hid, c_out, c_res, true);
    auto weights = random_tensor(rng, {1, 64});

    ModelParams params;
    params.add("g1.c1w", g1.conv1_w, DecayGroup::other);
    params.add("g1.c1b", g1.conv1_b, DecayGroup::other);
    params.add("g1.c2w", g1.conv2_w, DecayGroup::other);
    params.add("g1.c2b", g1.conv2_b, DecayGroup::other);
    params.add("g2.c1w", g2.conv1_w, DecayGroup::other);
    params.add("g2.c1b", g2.conv1_b, DecayGroup::other);
    params.add("g2.c2w", g2.conv2_w, DecayGroup::other);
    params.add("g2.c2b", g2.conv2_b, DecayGroup::other);
    params.add("f.c3w", fp.conv3_w, DecayGroup::other);
    params.add("f.c3b", fp.conv3_b, DecayGroup::other);
    params.add("f.c4w", fp.conv4_w, DecayGroup::other);
    params.add("f.c4b", fp.conv4_b, DecayGroup::other);
    params.add("f.c5w", fp.conv5_w, DecayGroup::other);
    params.add("f.c5b", fp.conv5_b, DecayGroup::other);

    auto loss_builder = [&](ModelParams& mp) {
        KernelGeneratorParams lg1{mp.find("g1.c1w"), mp.find("g1.c1b"), mp.find("g1.c2w"),
                                  mp.find("g1.c2b")};
        KernelGeneratorParams lg2{mp.find("g2.c1w"), mp.find("g2.c1b"), mp.find("g2.c2w"),
                                  mp.find("g2.c2b")};
        FusionParams lfp{mp.find("f.c3w"), mp.find("f.c3b"), mp.find("f.c4w"),
                         mp.find("f.c4b"), mp.find("f.c5w"), mp.find("f.c5b")};
        auto o1 = dynamic_fuse(generate_kernels(tap1, lg1), fmap);
        auto o2 = dynamic_fuse(generate_kernels(tap2, lg2), fmap);
        auto enhanced = residual_enhance(xrow, merge_enhance(o1, o2, lfp));
        return ops::sum_all(ops::mul(enhanced, weights));
    };

    // probe at a kink-free point
    double margin = 0.0;
    Tensor::begin_kink_scan();
    loss_builder(params);
    margin = Tensor::end_kink_scan();
    REQUIRE(margin > 1e-4);
    auto fd = finite_diff_check(loss_builder, params, 1e-6);
    CHECK(fd.max_rel_error < 1e-4);
}
