#pragma once

#include <string>
#include <vector>

#include "foodfuse/tensor.hpp"

namespace foodfuse {

// A named view of a module weight. The tensor handle shares storage with the
// owning module, so optimizer updates through the registry are visible to the
// module immediately.
template <typename T>
struct NamedParam {
    std::string name;
    Tensor<T> tensor;
};

template <typename T>
class ParamRegistry {
public:
    void add(const std::string& name, const Tensor<T>& t) {
        for (const auto& p : items_)
            if (p.name == name)
                throw ConfigError("parameter registered twice: " + name);
        items_.push_back({name, t});
    }

    const std::vector<NamedParam<T>>& items() const { return items_; }
    std::vector<NamedParam<T>>& items_mut() { return items_; }

    Tensor<T>* find(const std::string& name) {
        for (auto& p : items_)
            if (p.name == name) return &p.tensor;
        return nullptr;
    }

    int64_t total_size() const {
        int64_t n = 0;
        for (const auto& p : items_) n += p.tensor.numel();
        return n;
    }

    void zero_grads() {
        for (auto& p : items_) p.tensor.zero_grad();
    }

private:
    std::vector<NamedParam<T>> items_;
};

using ParamRegistry32 = ParamRegistry<float>;
using ParamRegistry64 = ParamRegistry<double>;

}  // namespace foodfuse
