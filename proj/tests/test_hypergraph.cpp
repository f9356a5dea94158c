#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>

#include "doctest.h"
#include "hyda/config.hpp"
#include "hyda/model.hpp"
#include "testutil.hpp"

using namespace hyda;
using testutil::random_tensor;

namespace {

bool edge_is(const Incidence& g, int64_t e, std::vector<int32_t> want) {
    std::sort(want.begin(), want.end());
    return g.edges[static_cast<size_t>(e)] == want;
}

HgLayerParams identity_layer(int64_t d) {
    std::vector<double> eye(static_cast<size_t>(d * d), 0.0);
    for (int64_t i = 0; i < d; ++i) eye[static_cast<size_t>(i * d + i)] = 1.0;
    return {Tensor::create({d, d}, eye, true), Tensor::zeros({d}, true)};
}

}  // namespace

TEST_CASE("knn_hyperedges basics") {
    Rng rng(31);
    auto x = random_tensor(rng, {5, 3});

    SUBCASE("k=1 is the identity incidence") {
        auto g = knn_hyperedges(x, 1);
        CHECK(g.num_edges() == 5);
        for (int64_t n = 0; n < 5; ++n) CHECK(edge_is(g, n, {static_cast<int32_t>(n)}));
    }
    SUBCASE("1-D example from exhaustive distances") {
        auto x1 = Tensor::create({3, 1}, {0.0, 0.1, 5.0});
        auto g = knn_hyperedges(x1, 2);
        CHECK(edge_is(g, 0, {0, 1}));
        CHECK(edge_is(g, 1, {1, 0}));
        CHECK(edge_is(g, 2, {2, 1}));
    }
    SUBCASE("self membership always holds") {
        auto g = knn_hyperedges(x, 3);
        for (int64_t n = 0; n < 5; ++n) CHECK(g.member(n, n));
    }
    SUBCASE("k out of range") {
        CHECK_THROWS_AS(knn_hyperedges(x, 6), ConfigError);
        CHECK_THROWS_AS(knn_hyperedges(x, 0), ConfigError);
    }
    SUBCASE("ties break toward the lower index") {
        // vertices 1 and 2 are equidistant from 0
        auto xt = Tensor::create({4, 1}, {0.0, 1.0, -1.0, 9.0});
        auto g = knn_hyperedges(xt, 2);
        CHECK(edge_is(g, 0, {0, 1}));
    }
}

TEST_CASE("fuse concatenates incidences and features") {
    Rng rng(32);
    auto x = random_tensor(rng, {6, 4});
    auto g1 = knn_hyperedges(x, 2);

    SUBCASE("single modality is the identity fuse") {
        auto fused = fuse({g1}, {x});
        CHECK(fused.incidence.num_edges() == 6);
        CHECK(fused.node_features.get() == x.get());
        CHECK(fused.edge_ranges[0] == std::pair<int64_t, int64_t>{0, 6});
    }
    SUBCASE("M=3 tags every hyperedge with its source modality") {
        auto y = random_tensor(rng, {6, 3});
        auto z = random_tensor(rng, {6, 5});
        auto fused = fuse({knn_hyperedges(x, 2), knn_hyperedges(y, 3), knn_hyperedges(z, 2)},
                          {x, y, z});
        CHECK(fused.incidence.num_edges() == 18);
        CHECK(fused.node_features->shape == Shape{6, 12});
        CHECK(fused.edge_ranges.size() == 3);
        CHECK(fused.edge_ranges[1] == std::pair<int64_t, int64_t>{6, 12});
        CHECK(fused.feature_ranges[2] == std::pair<int64_t, int64_t>{7, 12});
        // each vertex belongs to at least one hyperedge per modality
        auto deg = fused.incidence.vertex_degrees();
        for (int32_t d : deg) CHECK(d >= 3);
    }
    SUBCASE("vertex count mismatch") {
        auto y = random_tensor(rng, {5, 3});
        CHECK_THROWS_AS(fuse({g1, knn_hyperedges(y, 2)}, {x, y}), ShapeError);
    }
}

TEST_CASE("desk-scale counting: M=3, N=190, k=20") {
    Rng rng(33);
    std::vector<Incidence> incidences;
    std::vector<TensorPtr> blocks;
    for (int m = 0; m < 3; ++m) {
        auto x = random_tensor(rng, {190, 8});
        incidences.push_back(knn_hyperedges(x, 20));
        blocks.push_back(x);
    }
    auto fused = fuse(incidences, blocks);
    CHECK(fused.incidence.num_edges() == 570);
    for (int32_t d : fused.incidence.vertex_degrees()) CHECK(d >= 3);
}

TEST_CASE("hgconv reductions and the dense oracle") {
    SUBCASE("single vertex self-loop with identity map") {
        Incidence g;
        g.num_vertices = 1;
        g.edges = {{0}};
        auto x = Tensor::create({1, 3}, {0.3, -0.7, 2.0});
        auto y = hgconv(g, x, identity_layer(3), false);
        for (size_t i = 0; i < x->data.size(); ++i)
            CHECK(y->data[i] == doctest::Approx(x->data[i]).epsilon(1e-15));
    }
    SUBCASE("two vertices sharing one hyperedge average their features") {
        Incidence g;
        g.num_vertices = 2;
        g.edges = {{0, 1}};
        auto x = Tensor::create({2, 2}, {1.0, 3.0, 5.0, -1.0});
        auto y = hgconv(g, x, identity_layer(2), false);
        CHECK(y->data[0] == doctest::Approx(3.0).epsilon(1e-12));
        CHECK(y->data[1] == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(y->data[2] == doctest::Approx(3.0).epsilon(1e-12));
        CHECK(y->data[3] == doctest::Approx(1.0).epsilon(1e-12));
    }
    SUBCASE("random instances match the dense matrix formula") {
        Rng rng(34);
        for (int rep = 0; rep < 30; ++rep) {
            const int64_t n = 2 + rng.uniform_int(9);
            const int64_t m = 1 + rng.uniform_int(3);
            std::vector<Incidence> incidences;
            std::vector<TensorPtr> blocks;
            for (int64_t mi = 0; mi < m; ++mi) {
                auto x = random_tensor(rng, {n, 2 + rng.uniform_int(4)});
                incidences.push_back(knn_hyperedges(x, 1 + rng.uniform_int(n)));
                blocks.push_back(x);
            }
            auto fused = fuse(incidences, blocks);
            const int64_t din = fused.node_features->shape[1];
            const int64_t dout = 1 + rng.uniform_int(4);
            HgLayerParams layer{random_tensor(rng, {din, dout}), random_tensor(rng, {dout})};
            auto got = hgconv(fused, fused.node_features, layer, false);
            auto want = testutil::dense_hgconv_oracle(fused.incidence, *fused.node_features,
                                                      *layer.weight, *layer.bias);
            for (size_t i = 0; i < want.size(); ++i)
                CHECK(std::fabs(got->data[i] - want[i]) < 1e-10);
        }
    }
    SUBCASE("isolated vertex raises StructureError") {
        Incidence g;
        g.num_vertices = 2;
        g.edges = {{0}};
        auto x = Tensor::full({2, 2}, 1.0);
        CHECK_THROWS_AS(hgconv(g, x, identity_layer(2), false), StructureError);
    }
}

TEST_CASE("hg_propagate gradient matches finite differences") {
    Rng rng(35);
    auto x = random_tensor(rng, {6, 4}, -1, 1, true);
    auto inc = knn_hyperedges(random_tensor(rng, {6, 3}), 3);
    auto c = random_tensor(rng, {6, 4});
    ModelParams p;
    p.add("x", x, DecayGroup::other);
    auto fd = finite_diff_check(
        [&](ModelParams& mp) {
            return ops::sum_all(ops::mul(hg_propagate(mp.items()[0].value, inc), c));
        },
        p, 1e-4);
    CHECK(fd.max_rel_error < 1e-4);
}

TEST_CASE("hypergraph_classify") {
    Rng rng(36);
    auto x = random_tensor(rng, {5, 4});
    auto fused = fuse({knn_hyperedges(x, 2)}, {x});

    SUBCASE("zero weights and bias give uniform rows") {
        HgLayerParams cls{Tensor::zeros({4, 3}, true), Tensor::zeros({3}, true)};
        auto p = hypergraph_classify(fused, x, cls);
        for (double v : p->data) CHECK(v == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
    }
    SUBCASE("single self-loop vertex reduces to a plain softmax classifier") {
        auto x1 = random_tensor(rng, {1, 4});
        auto fused1 = fuse({knn_hyperedges(x1, 1)}, {x1});
        HgLayerParams cls{random_tensor(rng, {4, 2}), random_tensor(rng, {2})};
        auto got = hypergraph_classify(fused1, x1, cls);
        auto want = ops::softmax_rows(ops::add_rowvec(ops::matmul(x1, cls.weight), cls.bias));
        for (size_t i = 0; i < want->data.size(); ++i)
            CHECK(got->data[i] == doctest::Approx(want->data[i]).epsilon(1e-14));
    }
    SUBCASE("rows stay on the simplex") {
        HgLayerParams cls{random_tensor(rng, {4, 3}), random_tensor(rng, {3})};
        auto p = hypergraph_classify(fused, x, cls);
        for (int64_t i = 0; i < 5; ++i) {
            double sum = 0.0;
            for (int64_t j = 0; j < 3; ++j) sum += p->data[i * 3 + j];
            CHECK(std::fabs(sum - 1.0) < 1e-12);
        }
    }
}

TEST_CASE("vertex_feature_dropout") {
    Rng rng(37);
    auto x = random_tensor(rng, {20, 30}, 0.5, 1.5);

    SUBCASE("p=0 and evaluation mode are identities") {
        Rng stream(1);
        CHECK(vertex_feature_dropout(x, 0.0, true, stream).get() == x.get());
        CHECK(vertex_feature_dropout(x, 0.9, false, stream).get() == x.get());
        CHECK_THROWS_AS(vertex_feature_dropout(x, 1.0, true, stream), ConfigError);
    }
    SUBCASE("keep rate and mean are preserved over many draws") {
        Rng stream(99);
        const int draws = 10000;
        const auto n = static_cast<double>(x->numel());
        double kept = 0.0, mean_ratio = 0.0;
        const double x_mean = [&] {
            double s = 0.0;
            for (double v : x->data) s += v;
            return s / n;
        }();
        for (int d = 0; d < draws; ++d) {
            auto y = vertex_feature_dropout(x, 0.5, true, stream);
            double nz = 0.0, sum = 0.0;
            for (double v : y->data) {
                if (v != 0.0) nz += 1.0;
                sum += v;
            }
            kept += nz / n;
            mean_ratio += (sum / n) / x_mean;
        }
        CHECK(std::fabs(kept / draws - 0.5) < 0.01);
        CHECK(std::fabs(mean_ratio / draws - 1.0) < 0.02);
    }
}

TEST_CASE("graph backend") {
    Rng rng(38);

    SUBCASE("k=1 gives self-loops only and a plain linear layer") {
        auto x = random_tensor(rng, {4, 3});
        auto g = knn_graph_edges(x, 1);
        CHECK(g.num_edges() == 4);
        for (const auto& e : g.edges) CHECK(e.size() == 1);
        HgLayerParams layer{random_tensor(rng, {3, 2}), random_tensor(rng, {2})};
        auto got = hgconv(g, x, layer, false);
        auto want = ops::add_rowvec(ops::matmul(x, layer.weight), layer.bias);
        for (size_t i = 0; i < want->data.size(); ++i)
            CHECK(std::fabs(got->data[i] - want->data[i]) < 1e-12);
    }
    SUBCASE("k>1 emits pairwise edges in the k-NN order") {
        auto x1 = Tensor::create({3, 1}, {0.0, 0.1, 5.0});
        auto g = knn_graph_edges(x1, 2);
        CHECK(g.num_edges() == 6);
        CHECK(edge_is(g, 0, {0}));
        CHECK(edge_is(g, 1, {0, 1}));
        CHECK(edge_is(g, 2, {1}));
        CHECK(edge_is(g, 3, {0, 1}));
        CHECK(edge_is(g, 4, {2}));
        CHECK(edge_is(g, 5, {1, 2}));
    }
    SUBCASE("degree-2 hyperedges share the gconv code path bitwise") {
        auto x = random_tensor(rng, {5, 4});
        auto g = knn_graph_edges(x, 3);
        HgLayerParams layer{random_tensor(rng, {4, 3}), random_tensor(rng, {3})};
        // same incidence through both entry points
        auto a = hgconv(g, x, layer, true);
        FusedHypergraph fused = fuse({g}, {x});
        auto b = hgconv(fused, x, layer, true);
        for (size_t i = 0; i < a->data.size(); ++i) CHECK(a->data[i] == b->data[i]);
    }
    SUBCASE("3-vertex line graph: middle vertex averages its edge means") {
        Incidence g;
        g.num_vertices = 3;
        g.edges = {{0, 1}, {1, 2}};
        auto x = Tensor::create({3, 1}, {1.0, 5.0, 9.0});
        auto y = hgconv(g, x, identity_layer(1), false);
        // edge means: 3 and 7; middle vertex averages both
        CHECK(y->data[1] == doctest::Approx(5.0).epsilon(1e-12));
        CHECK(y->data[0] == doctest::Approx(3.0).epsilon(1e-12));
        CHECK(y->data[2] == doctest::Approx(7.0).epsilon(1e-12));
    }
}

TEST_CASE("permutation consistency of the full hypergraph branch") {
    SynthSpec spec;
    spec.subjects = 14;
    spec.imaging_modalities = 2;
    spec.tabular = true;
    spec.emb_dim = 64;
    spec.map_channels = 8;
    spec.map_d = spec.map_h = spec.map_w = 4;
    spec.classes = 2;
    spec.imbalance_ratio = 1.5;
    spec.complementarity = 0.4;
    spec.noise_sigma = 0.2;
    auto ds = synth_cohort(spec, 77);

    RunConfig cfg;
    cfg.k = 4;
    cfg.C = 27;
    cfg.C_hid = 8;
    cfg.C_out = 4;
    cfg.batch_size = 14;
    cfg.ablation = Ablation::avg_heads;

    std::vector<int64_t> ids;
    for (int64_t i = 0; i < ds.subject_count(); ++i) ids.push_back(i);
    auto norm = normalize(ds, ids);
    auto dims = derive_dims(norm, cfg);
    auto params = init_model_params(dims, 5);

    auto fwd = forward_batch(norm, ids, params, dims, cfg, false, nullptr);

    std::vector<int64_t> perm = ids;
    Rng prng(123);
    prng.shuffle(perm);
    auto fwd_p = forward_batch(norm, perm, params, dims, cfg, false, nullptr);

    const int64_t k = fwd.p_final->shape[1];
    for (size_t pos = 0; pos < perm.size(); ++pos) {
        const int64_t orig = perm[pos];
        for (int64_t j = 0; j < k; ++j) {
            CHECK(std::fabs(fwd_p.p_g->data[static_cast<int64_t>(pos) * k + j] -
                            fwd.p_g->data[orig * k + j]) < 1e-12);
            CHECK(std::fabs(fwd_p.p_d->data[static_cast<int64_t>(pos) * k + j] -
                            fwd.p_d->data[orig * k + j]) < 1e-12);
            CHECK(std::fabs(fwd_p.p_final->data[static_cast<int64_t>(pos) * k + j] -
                            fwd.p_final->data[orig * k + j]) < 1e-12);
        }
    }
}
