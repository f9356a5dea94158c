#pragma once

#include <map>
#include <string>
#include <vector>

#include "hyda/config.hpp"
#include "hyda/params.hpp"

namespace hyda {

/// Trainable state frozen at the best validation epoch of one fold, plus
/// everything evaluation needs to reproduce forward outputs bitwise:
/// configuration, dataset shape fingerprint, the fold's feature scaler and
/// the optimizer moments.
struct Checkpoint {
    RunConfig config;
    uint64_t data_fingerprint = 0;
    int64_t epoch = 0;
    int64_t fold_index = 0;
    ModelParams params;
    FeatureScaler scaler;
    int64_t opt_step = 0;
    std::map<std::string, std::vector<double>> opt_m, opt_v;
};

void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace hyda
