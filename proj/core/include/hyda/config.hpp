#pragma once

#include <optional>
#include <string>
#include <vector>

#include "hyda/cohort.hpp"

namespace hyda {

enum class Backend { hypergraph, graph };
enum class Ablation { disc_only, hg_only, avg_heads, full_hyda };

std::string to_string(Backend b);
std::string to_string(Ablation a);
Backend backend_from_string(const std::string& s);
Ablation ablation_from_string(const std::string& s);

struct ScheduleConfig {
    int64_t warmup_epochs = 0;
    int64_t decay_epoch = -1;     // -1: no decay event
    double decay_gamma = 1.0;
    int64_t early_stop_patience = -1;  // -1: disabled
};

struct RunConfig {
    int64_t k = 20;
    int64_t C = 54;
    int64_t C_hid = 16;
    int64_t C_out = 8;
    int64_t C_res = 0;  // 0: derive from the dataset (E / D*H*W)
    double lr = 0.001;
    double weight_decay_hg = 0.01;
    double dropout_p = 0.5;
    int64_t batch_size = 30;
    int64_t epochs = 100;
    int64_t folds = 5;
    double focal_gamma = 2.0;
    std::vector<double> focal_alpha;       // empty: uniform
    uint64_t seed = 0;
    std::vector<std::string> modalities;   // empty: all
    Backend backend = Backend::hypergraph;
    Ablation ablation = Ablation::full_hyda;
    std::optional<ScheduleConfig> schedule;

    std::string canonical() const;
    uint64_t fingerprint() const;
};

/// key = value document; '#' comments; unknown keys rejected.
RunConfig parse_config_file(const std::string& path);
RunConfig parse_config_text(const std::string& text, const std::string& origin);

/// Config/dataset consistency: k vs batch, C % 27 for the fusion path,
/// C_res * D*H*W == E, modality subset validity, equal imaging widths.
void validate_config(const RunConfig& cfg, const CohortDataset& ds);

/// Descriptors of the modalities selected by cfg.modalities, in dataset order.
std::vector<ModalityDesc> select_modalities(const RunConfig& cfg, const CohortDataset& ds);

}  // namespace hyda
