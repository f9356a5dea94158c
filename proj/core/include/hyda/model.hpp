#pragma once

#include <set>

#include "hyda/config.hpp"
#include "hyda/fusion.hpp"
#include "hyda/heads.hpp"
#include "hyda/hypergraph.hpp"
#include "hyda/params.hpp"

namespace hyda {

/// Wiring sizes derived from the dataset and the run configuration.
struct ModelDims {
    std::vector<ModalityDesc> selected;
    int64_t K = 0;
    int64_t C = 0, C_hid = 0, C_out = 0, C_res = 0;
    int64_t sum_emb = 0;      // total node-feature width
    int64_t tab_raw_dim = 0;  // 0 when no tabular modality is selected
    int64_t tab_emb_dim = 0;
    bool has_imaging = false;
};

ModelDims derive_dims(const CohortDataset& ds, const RunConfig& cfg);

/// All trainable tensors, created in a fixed order; hypergraph layers are in
/// the weight-decay group, everything else is not.
ModelParams init_model_params(const ModelDims& dims, uint64_t seed);

/// Zeros every fusion-path parameter (generators and conv3..conv5).
void zero_fusion_params(ModelParams& params);

/// Names of the parameters actually trained under the given ablation.
std::set<std::string> active_param_names(const ModelDims& dims, Ablation ablation);

struct BatchForward {
    TensorPtr p_g;       // null for disc_only
    TensorPtr p_d;       // null for hg_only
    TensorPtr p_final;
    TensorPtr f1, f2;    // hypergraph tap features (when built)
};

/// Forward pass over the given subjects. The relational structure is built
/// from the current embedding values of exactly these subjects.
BatchForward forward_batch(const CohortDataset& ds, const std::vector<int64_t>& ids,
                           const ModelParams& params, const ModelDims& dims,
                           const RunConfig& cfg, bool training, Rng* dropout_rng);

/// Loss for a forward result under the ablation's head selection: Eq-style
/// four-term sum for both-head rows, plain cross-entropy for single-head rows.
LossBreakdown batch_loss(const BatchForward& fwd, const std::vector<int64_t>& y,
                         const RunConfig& cfg);

}  // namespace hyda
