#pragma once

#include <vector>

#include "hyda/tensor.hpp"

namespace hyda {

/// Classification metrics in percent. SPE/SEN/AUC are binary-only; for
/// multi-class runs `binary` is false, f1 holds the macro F1 and the three
/// binary fields are unset (NaN).
struct Metrics {
    double acc = 0.0;
    double f1 = 0.0;
    double spe = 0.0;
    double sen = 0.0;
    double auc = 0.0;
    bool binary = true;
};

/// Hard decisions by argmax (ties toward the lower class index); AUC is the
/// Mann-Whitney rank statistic over p(positive) with half credit for ties.
Metrics compute_metrics(const TensorPtr& p_final, const std::vector<int64_t>& labels,
                        int64_t positive_class);

}  // namespace hyda
