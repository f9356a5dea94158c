#pragma once

#include <map>
#include <set>
#include <string>
#include <vector>

#include "hyda/params.hpp"

namespace hyda {

struct AdamWOptions {
    double lr = 0.001;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double decay_hg = 0.01;   // hypergraph group only
    double decay_other = 0.0;
};

/// Decoupled-decay Adam. Decay multiplies the pre-update parameter and is
/// applied only to the hypergraph group.
class AdamW {
public:
    explicit AdamW(AdamWOptions opts) : opts_(opts) {}

    /// One update over the given active parameter subset (empty set: all).
    void step(ModelParams& params, const std::set<std::string>& active);

    void set_lr(double lr) { opts_.lr = lr; }
    const AdamWOptions& options() const { return opts_; }

    int64_t step_count() const { return t_; }
    std::map<std::string, std::vector<double>>& first_moments() { return m_; }
    std::map<std::string, std::vector<double>>& second_moments() { return v_; }
    void restore(int64_t t, std::map<std::string, std::vector<double>> m,
                 std::map<std::string, std::vector<double>> v);

private:
    AdamWOptions opts_;
    int64_t t_ = 0;
    std::map<std::string, std::vector<double>> m_, v_;
};

}  // namespace hyda
