#pragma once

#include <functional>
#include <string>

#include "hyda/params.hpp"

namespace hyda {

struct FdReport {
    double max_rel_error = 0.0;
    std::string worst_param;
    int64_t worst_index = -1;
    int64_t checked = 0;
};

/// Central-difference gradient verification over every component of every
/// parameter. `loss_builder` must construct the scalar loss from the given
/// parameter set; it is called once on `params` (tracked) to obtain the
/// analytic gradients and then on untracked clones for the +/-h probes,
/// partitioned across `jobs` worker threads.
///
/// Relative error per component: |analytic - fd| / max(1, |analytic|).
FdReport finite_diff_check(const std::function<TensorPtr(ModelParams&)>& loss_builder,
                           ModelParams& params, double h, int jobs = 1);

}  // namespace hyda
