#pragma once

#include <vector>

#include "hyda/tensor.hpp"

namespace hyda {

enum class Activation { relu, sigmoid };

namespace ops {

// Elementwise / linear algebra
TensorPtr add(const TensorPtr& a, const TensorPtr& b);
TensorPtr sub(const TensorPtr& a, const TensorPtr& b);
TensorPtr mul(const TensorPtr& a, const TensorPtr& b);
TensorPtr scale(const TensorPtr& a, double s);
TensorPtr add_rowvec(const TensorPtr& x, const TensorPtr& b);  // [N,D] + [D]
TensorPtr matmul(const TensorPtr& a, const TensorPtr& b);      // [N,M]x[M,P]

TensorPtr activation(const TensorPtr& x, Activation kind);
TensorPtr relu(const TensorPtr& x);
TensorPtr sigmoid(const TensorPtr& x);
TensorPtr softmax_rows(const TensorPtr& x);  // [N,K], max-subtracted

TensorPtr log_elem(const TensorPtr& x);
TensorPtr pow_const(const TensorPtr& x, double e);
TensorPtr clamp(const TensorPtr& x, double lo, double hi);
TensorPtr rsub_const(double c, const TensorPtr& x);  // c - x
TensorPtr sum_all(const TensorPtr& x);               // -> [1]

// Indexing / assembly
TensorPtr gather_rows(const TensorPtr& p, const std::vector<int64_t>& idx);  // [N,K] -> [N]
TensorPtr select_row(const TensorPtr& x, int64_t row);                       // [N,D] -> [1,D]
TensorPtr concat_cols(const std::vector<TensorPtr>& xs);                     // [N,Di] -> [N,sum]
TensorPtr concat_rows(const std::vector<TensorPtr>& xs);                     // [Ni,D] -> [sum,D]
TensorPtr reshape(const TensorPtr& x, Shape s);
TensorPtr flatten(const TensorPtr& x);  // -> [1,numel]

// Convolution family (shapes as used by the adapter)
TensorPtr pointwise_conv3d(const TensorPtr& x, const TensorPtr& w, const TensorPtr& b = nullptr);
TensorPtr conv3d_same(const TensorPtr& x, const TensorPtr& w);  // 3x3x3, pad 1, stride 1
TensorPtr global_avg_pool(const TensorPtr& x);                  // [1,C,D,H,W] -> [1,C,1,1,1]
TensorPtr swap_axes01(const TensorPtr& x);                      // 5-D axis swap
TensorPtr concat_channels(const TensorPtr& a, const TensorPtr& b);
TensorPtr mul_channel_gate(const TensorPtr& x, const TensorPtr& gate);  // [1,C,D,H,W]*[1,C,1,1,1]

namespace detail {
/// Finalizes an op result: wires the graph when any input is tracked and runs
/// the optional finiteness validation. The closure is only lifted into a
/// std::function when the graph is actually built.
template <typename F>
TensorPtr make_op(const char* name, Shape shape, std::vector<double> data,
                  std::vector<TensorPtr> parents, F&& fn) {
    auto out = Tensor::create(std::move(shape), std::move(data));
    bool need = false;
    for (const auto& p : parents) need = need || p->tracked();
    if (need) out->set_parents(std::move(parents), std::function<void(Tensor&)>(std::forward<F>(fn)));
    if (Tensor::debug_validation()) check_finite(*out, name);
    return out;
}
}  // namespace detail

}  // namespace ops
}  // namespace hyda
