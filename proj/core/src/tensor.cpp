#include "hyda/tensor.hpp"

#include <atomic>
#include <cmath>
#include <limits>
#include <sstream>
#include <unordered_map>

namespace hyda {

namespace {
std::atomic<bool> g_debug_validation{false};
thread_local bool g_kink_scan_active = false;
thread_local double g_kink_margin = 0.0;
}

int64_t shape_numel(const Shape& s) {
    int64_t n = 1;
    for (int64_t e : s) n *= e;
    return n;
}

std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << "[";
    for (size_t i = 0; i < s.size(); ++i) {
        if (i) os << ",";
        os << s[i];
    }
    os << "]";
    return os.str();
}

Tensor::Tensor(Shape s, std::vector<double> d) : shape(std::move(s)), data(std::move(d)) {
    for (int64_t e : shape) {
        if (e <= 0) throw ShapeError("tensor extents must be positive, got " + shape_str(shape));
    }
    if (shape_numel(shape) != static_cast<int64_t>(data.size())) {
        throw ShapeError("tensor data length " + std::to_string(data.size()) +
                         " does not match shape " + shape_str(shape));
    }
}

TensorPtr Tensor::create(Shape s, std::vector<double> d, bool requires_grad) {
    auto t = std::make_shared<Tensor>(std::move(s), std::move(d));
    t->requires_grad = requires_grad;
    t->tracked_ = requires_grad;
    return t;
}

TensorPtr Tensor::zeros(Shape s, bool requires_grad) {
    const int64_t n = shape_numel(s);
    return create(std::move(s), std::vector<double>(static_cast<size_t>(n), 0.0), requires_grad);
}

TensorPtr Tensor::full(Shape s, double v) {
    const int64_t n = shape_numel(s);
    return create(std::move(s), std::vector<double>(static_cast<size_t>(n), v));
}

TensorPtr Tensor::scalar(double v) { return create({1}, {v}); }

void Tensor::ensure_grad() {
    if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
}

void Tensor::zero_grad() {
    if (!grad.empty()) grad.assign(data.size(), 0.0);
}

double Tensor::item() const {
    if (numel() != 1) throw ShapeError("item() on non-scalar tensor " + shape_str(shape));
    return data[0];
}

void Tensor::set_parents(std::vector<TensorPtr> parents, std::function<void(Tensor&)> fn) {
    parents_ = std::move(parents);
    backward_fn_ = std::move(fn);
    tracked_ = true;
}

void Tensor::set_debug_validation(bool on) { g_debug_validation.store(on); }
bool Tensor::debug_validation() { return g_debug_validation.load(std::memory_order_relaxed); }

void Tensor::begin_kink_scan() {
    g_kink_scan_active = true;
    g_kink_margin = std::numeric_limits<double>::infinity();
}

double Tensor::end_kink_scan() {
    g_kink_scan_active = false;
    return g_kink_margin;
}

bool Tensor::kink_scan_active() { return g_kink_scan_active; }

void Tensor::note_kink_distance(double d) {
    if (g_kink_scan_active && d < g_kink_margin) g_kink_margin = d;
}

void check_finite(const Tensor& t, const char* where) {
    for (double v : t.data) {
        if (!std::isfinite(v)) {
            throw NumericError(std::string("non-finite value produced by ") + where);
        }
    }
}

void Tensor::backward() {
    if (numel() != 1) {
        throw ShapeError("backward() requires a scalar loss, got " + shape_str(shape));
    }
    // Iterative post-order DFS; 1 = on stack, 2 = emitted. A node met while
    // still on the stack means a cycle, which pure ops cannot produce.
    std::vector<Tensor*> order;
    std::unordered_map<Tensor*, int> state;
    std::vector<std::pair<Tensor*, size_t>> stack;
    stack.emplace_back(this, 0);
    state[this] = 1;
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents_.size()) {
            Tensor* p = node->parents_[next].get();
            ++next;
            if (!p->tracked_) continue;
            auto it = state.find(p);
            if (it == state.end()) {
                state[p] = 1;
                stack.emplace_back(p, 0);
            } else if (it->second == 1) {
                throw InternalError("cyclic computation graph");
            }
        } else {
            state[node] = 2;
            order.push_back(node);
            stack.pop_back();
        }
    }
    for (Tensor* node : order) node->ensure_grad();
    grad[0] = 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Tensor* node = *it;
        if (node->backward_fn_) node->backward_fn_(*node);
    }
}

void backward(const TensorPtr& loss) { loss->backward(); }

}  // namespace hyda
