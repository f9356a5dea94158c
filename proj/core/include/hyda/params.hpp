#pragma once

#include <string>
#include <vector>

#include "hyda/tensor.hpp"

namespace hyda {

/// Weight-decay grouping: only hypergraph convolution layers receive
/// decoupled weight decay from the optimizer.
enum class DecayGroup { hypergraph, other };

struct ParamTensor {
    std::string name;
    TensorPtr value;
    DecayGroup group = DecayGroup::other;
};

/// Ordered collection of named trainable tensors. Names are unique; the
/// order is the creation order and fixes both initialization and
/// checkpoint layout.
class ModelParams {
public:
    TensorPtr add(const std::string& name, TensorPtr value, DecayGroup group);
    TensorPtr find(const std::string& name) const;        // null when absent
    const ParamTensor& entry(const std::string& name) const;
    bool contains(const std::string& name) const;

    const std::vector<ParamTensor>& items() const { return items_; }
    std::vector<ParamTensor>& items() { return items_; }

    void zero_grads() const;
    int64_t total_count() const;

    /// Deep copy; `tracked` controls requires_grad of the copies.
    ModelParams clone(bool tracked) const;

private:
    std::vector<ParamTensor> items_;
};

}  // namespace hyda
