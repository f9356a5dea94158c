#pragma once

#include <string>
#include <vector>

#include "hyda/checkpoint.hpp"
#include "hyda/metrics.hpp"
#include "hyda/model.hpp"

namespace hyda {

struct FoldSummary {
    int64_t fold = 0;
    Metrics metrics;
    std::vector<double> train_loss;
    std::vector<double> val_loss;
    int64_t best_epoch = 0;
};

struct RunReport {
    RunConfig config;
    uint64_t data_fingerprint = 0;
    std::vector<FoldSummary> folds;
    Metrics mean, stddev;
    int64_t total_params = 0;
    int64_t gen_weight_count = 0;   // stored weights per generator
    int64_t gen_product_count = 0;  // C*C_hid + C_out, for comparison
    std::string gen_note;
    int64_t positive_class = 1;
};

struct FoldResult {
    FoldSummary summary;
    Checkpoint checkpoint;
    std::vector<int64_t> val_ids;
    std::vector<std::vector<double>> val_p_final;  // one row per val subject
};

struct EvalResult {
    Metrics metrics;
    LossBreakdown loss;
    std::vector<std::vector<double>> p_final;
    std::vector<int64_t> ids;
};

/// The class SEN/SPE/F1/AUC treat as positive: the least frequent one
/// (ties toward the higher index).
int64_t minority_class(const CohortDataset& ds);

FoldResult train_fold(const RunConfig& cfg, const CohortDataset& ds, const FoldSplit& split);

EvalResult evaluate(const Checkpoint& ckpt, const CohortDataset& ds,
                    const std::vector<int64_t>& ids);

RunReport cross_validate(const RunConfig& cfg, const CohortDataset& ds, int jobs = 1,
                         std::vector<FoldResult>* fold_results = nullptr);

struct AblationReport {
    std::vector<std::pair<Ablation, RunReport>> rows;  // rows #1..#4 in order
};
AblationReport run_ablation(const RunConfig& cfg, const CohortDataset& ds, int jobs = 1);

struct SweepPoint {
    std::string label;
    RunReport report;
};
struct SweepReport {
    std::string axis;  // "k" or "modalities"
    std::vector<SweepPoint> points;
};

SweepReport sweep_k(const RunConfig& cfg, const CohortDataset& ds,
                    const std::vector<int64_t>& k_values, int jobs = 1);
SweepReport sweep_modalities(const RunConfig& cfg, const CohortDataset& ds,
                             const std::vector<std::vector<std::string>>& subsets, int jobs = 1);

}  // namespace hyda
