#include "hyda/optimizer.hpp"

#include <cmath>

namespace hyda {

void AdamW::step(ModelParams& params, const std::set<std::string>& active) {
    ++t_;
    const double bc1 = 1.0 - std::pow(opts_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(opts_.beta2, static_cast<double>(t_));
    for (auto& it : params.items()) {
        if (!active.empty() && active.find(it.name) == active.end()) continue;
        Tensor& p = *it.value;
        p.ensure_grad();
        auto& m = m_[it.name];
        auto& v = v_[it.name];
        if (m.size() != p.data.size()) m.assign(p.data.size(), 0.0);
        if (v.size() != p.data.size()) v.assign(p.data.size(), 0.0);
        const double decay =
            it.group == DecayGroup::hypergraph ? opts_.decay_hg : opts_.decay_other;
        for (size_t i = 0; i < p.data.size(); ++i) {
            const double g = p.grad[i];
            m[i] = opts_.beta1 * m[i] + (1.0 - opts_.beta1) * g;
            v[i] = opts_.beta2 * v[i] + (1.0 - opts_.beta2) * g * g;
            const double mhat = m[i] / bc1;
            const double vhat = v[i] / bc2;
            const double pre = p.data[i];
            p.data[i] = pre - opts_.lr * (mhat / (std::sqrt(vhat) + opts_.eps)) -
                        opts_.lr * decay * pre;
        }
    }
}

void AdamW::restore(int64_t t, std::map<std::string, std::vector<double>> m,
                    std::map<std::string, std::vector<double>> v) {
    t_ = t;
    m_ = std::move(m);
    v_ = std::move(v);
}

}  // namespace hyda
