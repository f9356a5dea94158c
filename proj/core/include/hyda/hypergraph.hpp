#pragma once

#include <utility>
#include <vector>

#include "hyda/ops.hpp"
#include "hyda/rng.hpp"
#include "hyda/tensor.hpp"

namespace hyda {

/// Binary vertex-hyperedge incidence stored as per-edge member lists
/// (sorted, duplicate-free). Vertex degrees are derived on demand and are
/// consistent with membership by construction.
struct Incidence {
    int64_t num_vertices = 0;
    std::vector<std::vector<int32_t>> edges;

    int64_t num_edges() const { return static_cast<int64_t>(edges.size()); }
    std::vector<int32_t> vertex_degrees() const;
    bool member(int64_t v, int64_t e) const;
};

/// k-NN hyperedges: edge n joins vertex n (always a member, distance 0)
/// with its k-1 nearest other vertices under Euclidean distance, ties
/// broken toward the lower vertex index.
Incidence knn_hyperedges(const TensorPtr& features, int64_t k);

/// Plain-graph backend: every neighbor in the same k-NN order yields the
/// pairwise edge {n, neighbor}; the self neighbor degenerates to the
/// singleton {n}, so k=1 gives a self-loop-only graph.
Incidence knn_graph_edges(const TensorPtr& features, int64_t k);

struct FusedHypergraph {
    Incidence incidence;
    TensorPtr node_features;  // [N, sum of block widths]
    std::vector<std::pair<int64_t, int64_t>> edge_ranges;     // per-modality [begin,end)
    std::vector<std::pair<int64_t, int64_t>> feature_ranges;  // per-modality columns
};

/// Column-wise concatenation of modality sub-hypergraphs over the shared
/// vertex set, with node features concatenated along the feature axis.
FusedHypergraph fuse(const std::vector<Incidence>& incidences,
                     const std::vector<TensorPtr>& feature_blocks);

/// Two-step propagation: hyperedge features are means of their member
/// vertices, vertex updates are means of their incident hyperedges
/// (equal to D_v^-1 H D_e^-1 H^T X). Differentiable in x.
TensorPtr hg_propagate(const TensorPtr& x, const Incidence& g);

struct HgLayerParams {
    TensorPtr weight;  // [in,out]
    TensorPtr bias;    // [out]
};

TensorPtr hgconv(const Incidence& g, const TensorPtr& x, const HgLayerParams& p, bool activate);
TensorPtr hgconv(const FusedHypergraph& g, const TensorPtr& x, const HgLayerParams& p,
                 bool activate);

TensorPtr hypergraph_classify(const FusedHypergraph& g, const TensorPtr& f,
                              const HgLayerParams& cls);

/// Training: independent Bernoulli mask per entry, survivors scaled by
/// 1/(1-p). Evaluation: identity.
TensorPtr vertex_feature_dropout(const TensorPtr& x, double p, bool training, Rng& stream);

}  // namespace hyda
