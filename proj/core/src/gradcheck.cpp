#include "hyda/gradcheck.hpp"

#include <cmath>
#include <thread>

namespace hyda {

FdReport finite_diff_check(const std::function<TensorPtr(ModelParams&)>& loss_builder,
                           ModelParams& params, double h, int jobs) {
    if (!(h >= 1e-6 && h <= 1e-3)) {
        throw ConfigError("finite_diff_check: step h must lie in [1e-6, 1e-3], got " +
                          std::to_string(h));
    }
    if (jobs < 1) jobs = 1;

    // Analytic pass on the tracked master parameters.
    params.zero_grads();
    TensorPtr loss = loss_builder(params);
    check_finite(*loss, "finite_diff_check loss");
    loss->backward();

    struct Slot {
        size_t param;
        int64_t index;
        double analytic;
    };
    std::vector<Slot> slots;
    for (size_t pi = 0; pi < params.items().size(); ++pi) {
        const auto& t = *params.items()[pi].value;
        for (int64_t i = 0; i < t.numel(); ++i) slots.push_back({pi, i, t.grad[i]});
    }

    std::vector<double> rel(slots.size(), 0.0);
    auto worker = [&](size_t begin, size_t end) {
        ModelParams local = params.clone(false);
        for (size_t si = begin; si < end; ++si) {
            const Slot& s = slots[si];
            double& p = local.items()[s.param].value->data[s.index];
            const double saved = p;
            p = saved + h;
            const double fp = loss_builder(local)->item();
            p = saved - h;
            const double fm = loss_builder(local)->item();
            p = saved;
            if (!std::isfinite(fp) || !std::isfinite(fm)) {
                throw NumericError("finite_diff_check: non-finite loss during probing");
            }
            const double fd = (fp - fm) / (2.0 * h);
            rel[si] = std::fabs(s.analytic - fd) / std::max(1.0, std::fabs(s.analytic));
        }
    };

    if (jobs == 1 || slots.size() < 2) {
        worker(0, slots.size());
    } else {
        const size_t chunk = (slots.size() + jobs - 1) / jobs;
        std::vector<std::thread> threads;
        std::vector<std::exception_ptr> errors(static_cast<size_t>(jobs));
        for (int j = 0; j < jobs; ++j) {
            const size_t b = std::min(slots.size(), static_cast<size_t>(j) * chunk);
            const size_t e = std::min(slots.size(), b + chunk);
            threads.emplace_back([&, j, b, e] {
                try {
                    worker(b, e);
                } catch (...) {
                    errors[static_cast<size_t>(j)] = std::current_exception();
                }
            });
        }
        for (auto& t : threads) t.join();
        for (auto& err : errors)
            if (err) std::rethrow_exception(err);
    }

    FdReport report;
    report.checked = static_cast<int64_t>(slots.size());
    for (size_t si = 0; si < slots.size(); ++si) {
        if (rel[si] > report.max_rel_error) {
            report.max_rel_error = rel[si];
            report.worst_param = params.items()[slots[si].param].name;
            report.worst_index = slots[si].index;
        }
    }
    return report;
}

}  // namespace hyda
