#pragma once

#include <atomic>
#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "hyda/errors.hpp"

namespace hyda {

using Shape = std::vector<int64_t>;

int64_t shape_numel(const Shape& s);
std::string shape_str(const Shape& s);

class Tensor;
using TensorPtr = std::shared_ptr<Tensor>;

/// Dense row-major tensor of 64-bit floats with reverse-mode autodiff.
///
/// Operations (see ops.hpp) wire result tensors to their inputs with a
/// backward closure; calling backward() on a scalar populates `grad` of
/// every tracked ancestor, summing contributions over all uses. Tensors
/// whose ancestry contains no `requires_grad` leaf carry no graph at all.
class Tensor : public std::enable_shared_from_this<Tensor> {
public:
    Shape shape;
    std::vector<double> data;
    bool requires_grad = false;
    std::vector<double> grad;  // allocated on demand, same length as data

    /// Marks the data as immutable for the tensor's lifetime, allowing ops
    /// to attach derived caches (set on dataset tensors).
    bool frozen = false;

    // conv3d neighborhood cache for frozen inputs; owner written once under
    // a lock, the atomic pointer is the reader-visible handle.
    std::shared_ptr<std::vector<double>> col_cache_owner;
    std::atomic<const std::vector<double>*> col_cache{nullptr};

    Tensor() = default;
    Tensor(Shape s, std::vector<double> d);

    static TensorPtr create(Shape s, std::vector<double> d, bool requires_grad = false);
    static TensorPtr zeros(Shape s, bool requires_grad = false);
    static TensorPtr full(Shape s, double v);
    static TensorPtr scalar(double v);

    int64_t numel() const { return static_cast<int64_t>(data.size()); }
    bool tracked() const { return tracked_; }
    void ensure_grad();
    void zero_grad();

    /// Value of a one-element tensor.
    double item() const;

    /// Reverse-mode sweep from a scalar loss.
    void backward();

    /// Graph wiring used by op implementations; marks the node tracked.
    void set_parents(std::vector<TensorPtr> parents, std::function<void(Tensor&)> fn);

    const std::vector<TensorPtr>& parents() const { return parents_; }

    // Optional NaN/Inf validation after every op (off by default; tests and
    // the trainer's debug path turn it on).
    static void set_debug_validation(bool on);
    static bool debug_validation();

    // Kink instrumentation (thread-local): between begin and end, relu
    // records the smallest |pre-activation| it sees. Finite differences are
    // only meaningful when no unit sits within the probe step of its kink.
    static void begin_kink_scan();
    static double end_kink_scan();
    static bool kink_scan_active();
    static void note_kink_distance(double d);

private:
    std::vector<TensorPtr> parents_;
    std::function<void(Tensor&)> backward_fn_;
    bool tracked_ = false;
};

/// Spec-facing alias: populate gradients of everything reachable from loss.
void backward(const TensorPtr& loss);

void check_finite(const Tensor& t, const char* where);

}  // namespace hyda
