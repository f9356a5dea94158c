#pragma once

#include <vector>

#include "hyda/ops.hpp"

namespace hyda {

struct MlpParams {
    TensorPtr w1, b1;  // [T, E_tab], [E_tab]
    TensorPtr w2, b2;  // [E_tab, E_tab], [E_tab]
};

/// Two affine layers with ReLU between; accepts [B,T] batches.
TensorPtr mlp_encode(const TensorPtr& x, const MlpParams& p);

struct DiscParams {
    TensorPtr weight;  // [sum_emb, K]
    TensorPtr bias;    // [K]
};

TensorPtr discriminative_classify(const TensorPtr& f, const DiscParams& p);

/// -(1/N) sum log p[n, y_n], probabilities clamped to [eps, 1-eps].
TensorPtr cross_entropy(const TensorPtr& p, const std::vector<int64_t>& y);

/// -(1/N) sum alpha_{y_n} (1 - p[n,y_n])^gamma log p[n,y_n].
/// Empty alpha means uniform weight 1.
TensorPtr focal_loss(const TensorPtr& p, const std::vector<int64_t>& y, double gamma,
                     const std::vector<double>& alpha = {});

struct LossBreakdown {
    double ce_g = 0.0, fl_g = 0.0, ce_d = 0.0, fl_d = 0.0, total = 0.0;
    TensorPtr total_node;
};

/// CE(p_g)+FL(p_g)+CE(p_d)+FL(p_d), each subject-averaged.
LossBreakdown total_loss(const TensorPtr& p_g, const TensorPtr& p_d,
                         const std::vector<int64_t>& y, double gamma,
                         const std::vector<double>& alpha = {});

TensorPtr average_prediction(const TensorPtr& p_g, const TensorPtr& p_d);

}  // namespace hyda
