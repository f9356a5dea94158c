#include "hyda/params.hpp"

namespace hyda {

TensorPtr ModelParams::add(const std::string& name, TensorPtr value, DecayGroup group) {
    if (contains(name)) throw ConfigError("duplicate parameter name: " + name);
    items_.push_back({name, value, group});
    return value;
}

TensorPtr ModelParams::find(const std::string& name) const {
    for (const auto& it : items_)
        if (it.name == name) return it.value;
    return nullptr;
}

const ParamTensor& ModelParams::entry(const std::string& name) const {
    for (const auto& it : items_)
        if (it.name == name) return it;
    throw ConfigError("unknown parameter name: " + name);
}

bool ModelParams::contains(const std::string& name) const { return find(name) != nullptr; }

void ModelParams::zero_grads() const {
    for (const auto& it : items_) {
        it.value->ensure_grad();
        it.value->zero_grad();
    }
}

int64_t ModelParams::total_count() const {
    int64_t n = 0;
    for (const auto& it : items_) n += it.value->numel();
    return n;
}

ModelParams ModelParams::clone(bool tracked) const {
    ModelParams out;
    for (const auto& it : items_) {
        out.add(it.name, Tensor::create(it.value->shape, it.value->data, tracked), it.group);
    }
    return out;
}

}  // namespace hyda
