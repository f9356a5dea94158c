#include "hyda/hypergraph.hpp"

#include <algorithm>
#include <cmath>

namespace hyda {

std::vector<int32_t> Incidence::vertex_degrees() const {
    std::vector<int32_t> deg(static_cast<size_t>(num_vertices), 0);
    for (const auto& e : edges)
        for (int32_t v : e) deg[static_cast<size_t>(v)]++;
    return deg;
}

bool Incidence::member(int64_t v, int64_t e) const {
    const auto& m = edges[static_cast<size_t>(e)];
    return std::binary_search(m.begin(), m.end(), static_cast<int32_t>(v));
}

namespace {

// Neighbor order of vertex n: self first, then by (squared distance, index).
std::vector<int32_t> knn_order(const Tensor& x, int64_t n, int64_t k) {
    const int64_t nv = x.shape[0], d = x.shape[1];
    std::vector<std::pair<double, int32_t>> cand;
    cand.reserve(static_cast<size_t>(nv - 1));
    const double* xa = &x.data[n * d];
    for (int64_t j = 0; j < nv; ++j) {
        if (j == n) continue;
        const double* xb = &x.data[j * d];
        double dist = 0.0;
        for (int64_t c = 0; c < d; ++c) {
            const double diff = xa[c] - xb[c];
            dist += diff * diff;
        }
        cand.emplace_back(dist, static_cast<int32_t>(j));
    }
    std::sort(cand.begin(), cand.end());
    std::vector<int32_t> order;
    order.reserve(static_cast<size_t>(k));
    order.push_back(static_cast<int32_t>(n));
    for (int64_t i = 0; i + 1 < k; ++i) order.push_back(cand[static_cast<size_t>(i)].second);
    return order;
}

void check_knn_args(const Tensor& x, int64_t k) {
    if (x.shape.size() != 2) {
        throw ShapeError("knn: expected [N,E] features, got " + shape_str(x.shape));
    }
    if (k < 1 || k > x.shape[0]) {
        throw ConfigError("knn: k=" + std::to_string(k) + " out of range for N=" +
                          std::to_string(x.shape[0]));
    }
}

}  // namespace

Incidence knn_hyperedges(const TensorPtr& features, int64_t k) {
    check_knn_args(*features, k);
    const int64_t n = features->shape[0];
    Incidence inc;
    inc.num_vertices = n;
    inc.edges.reserve(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i) {
        auto order = knn_order(*features, i, k);
        std::sort(order.begin(), order.end());
        inc.edges.push_back(std::move(order));
    }
    return inc;
}

Incidence knn_graph_edges(const TensorPtr& features, int64_t k) {
    check_knn_args(*features, k);
    const int64_t n = features->shape[0];
    Incidence inc;
    inc.num_vertices = n;
    inc.edges.reserve(static_cast<size_t>(n * k));
    for (int64_t i = 0; i < n; ++i) {
        for (int32_t j : knn_order(*features, i, k)) {
            std::vector<int32_t> e;
            if (j == static_cast<int32_t>(i)) {
                e = {static_cast<int32_t>(i)};
            } else {
                e = {static_cast<int32_t>(std::min<int64_t>(i, j)),
                     static_cast<int32_t>(std::max<int64_t>(i, j))};
            }
            inc.edges.push_back(std::move(e));
        }
    }
    return inc;
}

FusedHypergraph fuse(const std::vector<Incidence>& incidences,
                     const std::vector<TensorPtr>& feature_blocks) {
    if (incidences.empty() || incidences.size() != feature_blocks.size()) {
        throw ShapeError("fuse: need one feature block per incidence");
    }
    const int64_t n = incidences[0].num_vertices;
    FusedHypergraph g;
    g.incidence.num_vertices = n;
    int64_t edge_off = 0, col_off = 0;
    for (size_t m = 0; m < incidences.size(); ++m) {
        if (incidences[m].num_vertices != n) {
            throw ShapeError("fuse: vertex count mismatch, " + std::to_string(n) + " vs " +
                             std::to_string(incidences[m].num_vertices));
        }
        if (feature_blocks[m]->shape.size() != 2 || feature_blocks[m]->shape[0] != n) {
            throw ShapeError("fuse: feature block " + shape_str(feature_blocks[m]->shape) +
                             " does not match N=" + std::to_string(n));
        }
        for (const auto& e : incidences[m].edges) g.incidence.edges.push_back(e);
        g.edge_ranges.emplace_back(edge_off, edge_off + incidences[m].num_edges());
        edge_off += incidences[m].num_edges();
        g.feature_ranges.emplace_back(col_off, col_off + feature_blocks[m]->shape[1]);
        col_off += feature_blocks[m]->shape[1];
    }
    g.node_features = feature_blocks.size() == 1 ? feature_blocks[0] : ops::concat_cols(feature_blocks);
    return g;
}

TensorPtr hg_propagate(const TensorPtr& x, const Incidence& g) {
    if (x->shape.size() != 2 || x->shape[0] != g.num_vertices) {
        throw ShapeError("hg_propagate: features " + shape_str(x->shape) +
                         " do not match vertex count " + std::to_string(g.num_vertices));
    }
    const auto deg = g.vertex_degrees();
    for (int64_t v = 0; v < g.num_vertices; ++v) {
        if (deg[static_cast<size_t>(v)] == 0) {
            throw StructureError("hg_propagate: isolated vertex " + std::to_string(v));
        }
    }
    for (const auto& e : g.edges) {
        if (e.empty()) throw StructureError("hg_propagate: empty hyperedge");
    }
    const int64_t n = g.num_vertices, d = x->shape[1];
    std::vector<double> out(static_cast<size_t>(n * d), 0.0);
    std::vector<double> edge_feat(static_cast<size_t>(d));
    for (const auto& e : g.edges) {
        const double inv_e = 1.0 / static_cast<double>(e.size());
        std::fill(edge_feat.begin(), edge_feat.end(), 0.0);
        for (int32_t v : e) {
            const double* row = &x->data[static_cast<int64_t>(v) * d];
            for (int64_t c = 0; c < d; ++c) edge_feat[static_cast<size_t>(c)] += row[c];
        }
        for (int64_t c = 0; c < d; ++c) edge_feat[static_cast<size_t>(c)] *= inv_e;
        for (int32_t v : e) {
            const double inv_v = 1.0 / static_cast<double>(deg[static_cast<size_t>(v)]);
            double* orow = &out[static_cast<int64_t>(v) * d];
            for (int64_t c = 0; c < d; ++c) orow[c] += edge_feat[static_cast<size_t>(c)] * inv_v;
        }
    }
    // Copies of the edge lists keep the closure valid after the caller's
    // incidence goes out of scope.
    auto edges = g.edges;
    return ops::detail::make_op("hg_propagate", x->shape, std::move(out), {x},
                                [x, edges = std::move(edges), deg, d](Tensor& o) {
        x->ensure_grad();  // transpose propagation: g_x = P^T g_out
        std::vector<double> s(static_cast<size_t>(d));
        for (const auto& e : edges) {
            std::fill(s.begin(), s.end(), 0.0);
            for (int32_t v : e) {
                const double inv_v = 1.0 / static_cast<double>(deg[static_cast<size_t>(v)]);
                const double* grow = &o.grad[static_cast<int64_t>(v) * d];
                for (int64_t c = 0; c < d; ++c) s[static_cast<size_t>(c)] += grow[c] * inv_v;
            }
            const double inv_e = 1.0 / static_cast<double>(e.size());
            for (int32_t v : e) {
                double* gx = &x->grad[static_cast<int64_t>(v) * d];
                for (int64_t c = 0; c < d; ++c) gx[c] += s[static_cast<size_t>(c)] * inv_e;
            }
        }
    });
}

TensorPtr hgconv(const Incidence& g, const TensorPtr& x, const HgLayerParams& p, bool activate) {
    auto y = ops::add_rowvec(ops::matmul(hg_propagate(x, g), p.weight), p.bias);
    return activate ? ops::relu(y) : y;
}

TensorPtr hgconv(const FusedHypergraph& g, const TensorPtr& x, const HgLayerParams& p,
                 bool activate) {
    return hgconv(g.incidence, x, p, activate);
}

TensorPtr hypergraph_classify(const FusedHypergraph& g, const TensorPtr& f,
                              const HgLayerParams& cls) {
    return ops::softmax_rows(hgconv(g.incidence, f, cls, false));
}

TensorPtr vertex_feature_dropout(const TensorPtr& x, double p, bool training, Rng& stream) {
    if (!(p >= 0.0 && p < 1.0)) {
        throw ConfigError("dropout: p must lie in [0,1), got " + std::to_string(p));
    }
    if (!training || p == 0.0) return x;
    const double keep_scale = 1.0 / (1.0 - p);
    std::vector<double> mask(x->data.size());
    for (auto& m : mask) m = stream.uniform() < p ? 0.0 : keep_scale;
    return ops::mul(x, Tensor::create(x->shape, std::move(mask)));
}

}  // namespace hyda
