#include "hyda/heads.hpp"

namespace hyda {

namespace {
constexpr double kProbEps = 1e-12;
}

TensorPtr mlp_encode(const TensorPtr& x, const MlpParams& p) {
    auto h = ops::relu(ops::add_rowvec(ops::matmul(x, p.w1), p.b1));
    return ops::add_rowvec(ops::matmul(h, p.w2), p.b2);
}

TensorPtr discriminative_classify(const TensorPtr& f, const DiscParams& p) {
    return ops::softmax_rows(ops::add_rowvec(ops::matmul(f, p.weight), p.bias));
}

TensorPtr cross_entropy(const TensorPtr& p, const std::vector<int64_t>& y) {
    const int64_t n = p->shape[0];
    auto pt = ops::clamp(ops::gather_rows(p, y), kProbEps, 1.0 - kProbEps);
    return ops::scale(ops::sum_all(ops::log_elem(pt)), -1.0 / static_cast<double>(n));
}

TensorPtr focal_loss(const TensorPtr& p, const std::vector<int64_t>& y, double gamma,
                     const std::vector<double>& alpha) {
    if (gamma < 0.0) throw ConfigError("focal_loss: gamma must be >= 0");
    const int64_t n = p->shape[0];
    const int64_t k = p->shape[1];
    if (!alpha.empty() && static_cast<int64_t>(alpha.size()) != k) {
        throw ConfigError("focal_loss: alpha needs one weight per class");
    }
    auto pt = ops::clamp(ops::gather_rows(p, y), kProbEps, 1.0 - kProbEps);
    auto term = ops::mul(ops::pow_const(ops::rsub_const(1.0, pt), gamma), ops::log_elem(pt));
    if (!alpha.empty()) {
        std::vector<double> aw(static_cast<size_t>(n));
        for (int64_t i = 0; i < n; ++i) aw[static_cast<size_t>(i)] = alpha[static_cast<size_t>(y[static_cast<size_t>(i)])];
        term = ops::mul(term, Tensor::create({n}, std::move(aw)));
    }
    return ops::scale(ops::sum_all(term), -1.0 / static_cast<double>(n));
}

LossBreakdown total_loss(const TensorPtr& p_g, const TensorPtr& p_d,
                         const std::vector<int64_t>& y, double gamma,
                         const std::vector<double>& alpha) {
    if (p_g->shape != p_d->shape) {
        throw ShapeError("total_loss: prediction shapes differ, " + shape_str(p_g->shape) +
                         " vs " + shape_str(p_d->shape));
    }
    LossBreakdown lb;
    auto ce_g = cross_entropy(p_g, y);
    auto fl_g = focal_loss(p_g, y, gamma, alpha);
    auto ce_d = cross_entropy(p_d, y);
    auto fl_d = focal_loss(p_d, y, gamma, alpha);
    lb.ce_g = ce_g->item();
    lb.fl_g = fl_g->item();
    lb.ce_d = ce_d->item();
    lb.fl_d = fl_d->item();
    lb.total_node = ops::add(ops::add(ce_g, fl_g), ops::add(ce_d, fl_d));
    lb.total = lb.total_node->item();
    return lb;
}

TensorPtr average_prediction(const TensorPtr& p_g, const TensorPtr& p_d) {
    if (p_g->shape != p_d->shape) {
        throw ShapeError("average_prediction: shape mismatch " + shape_str(p_g->shape) + " vs " +
                         shape_str(p_d->shape));
    }
    return ops::scale(ops::add(p_g, p_d), 0.5);
}

}  // namespace hyda
