#pragma once

#include <cmath>
#include <functional>
#include <memory>
#include <unordered_set>
#include <vector>

#include "foodfuse/common.hpp"
#include "foodfuse/rng.hpp"

namespace foodfuse {

// Reverse-mode tape node. The tape is the DAG of these nodes, built
// dynamically during the forward pass; backprop() pulls this node's grad
// into its parents. A graph is confined to one thread.
template <typename T>
struct TensorNode {
    Shape shape;
    std::vector<T> value;
    std::vector<T> grad;  // empty until backward (or an optimizer) touches it
    bool requires_grad = false;
    std::vector<std::shared_ptr<TensorNode<T>>> parents;
    std::function<void(TensorNode<T>&)> backprop;

    int64_t numel() const { return static_cast<int64_t>(value.size()); }
    void ensure_grad() {
        if (grad.empty()) grad.assign(value.size(), T(0));
    }
};

// When disabled (inference, sampling), ops skip tape construction entirely.
class GradMode {
public:
    static bool enabled() { return flag(); }
    static void set(bool v) { flag() = v; }

private:
    static bool& flag() {
        thread_local bool f = true;
        return f;
    }
};

struct NoGradGuard {
    bool prev;
    NoGradGuard() : prev(GradMode::enabled()) { GradMode::set(false); }
    ~NoGradGuard() { GradMode::set(prev); }
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;
};

// Value-semantics handle to a tape node.
template <typename T>
class Tensor {
public:
    using Node = TensorNode<T>;

    Tensor() = default;
    explicit Tensor(std::shared_ptr<Node> n) : n_(std::move(n)) {}

    static Tensor zeros(const Shape& shape) {
        auto n = std::make_shared<Node>();
        n->shape = shape;
        n->value.assign(static_cast<size_t>(foodfuse::numel(shape)), T(0));
        return Tensor(std::move(n));
    }

    static Tensor full(const Shape& shape, T v) {
        Tensor t = zeros(shape);
        for (auto& x : t.n_->value) x = v;
        return t;
    }

    static Tensor scalar(T v) { return full({1}, v); }

    static Tensor from(const Shape& shape, std::vector<T> data) {
        if (static_cast<int64_t>(data.size()) != foodfuse::numel(shape))
            throw ShapeError("from", "data length " + std::to_string(data.size()) +
                                         " does not match shape " + shape_str(shape));
        auto n = std::make_shared<Node>();
        n->shape = shape;
        n->value = std::move(data);
        return Tensor(std::move(n));
    }

    static Tensor randn(const Shape& shape, RngStream& rng, double stddev = 1.0) {
        Tensor t = zeros(shape);
        rng.fill_normal(t.data(), t.numel(), stddev);
        return t;
    }

    bool defined() const { return n_ != nullptr; }
    const Shape& shape() const { return n_->shape; }
    int64_t numel() const { return n_->numel(); }
    int dim(int i) const { return n_->shape[static_cast<size_t>(i)]; }
    int ndim() const { return static_cast<int>(n_->shape.size()); }

    T* data() { return n_->value.data(); }
    const T* data() const { return n_->value.data(); }
    std::vector<T>& vec() { return n_->value; }
    const std::vector<T>& vec() const { return n_->value; }
    T item() const {
        if (numel() != 1) throw ShapeError("item", "tensor " + shape_str(shape()) + " is not scalar");
        return n_->value[0];
    }

    bool requires_grad() const { return n_->requires_grad; }
    Tensor& set_requires_grad(bool v = true) {
        n_->requires_grad = v;
        return *this;
    }

    bool has_grad() const { return !n_->grad.empty(); }
    const std::vector<T>& grad() const { return n_->grad; }
    std::vector<T>& grad_mut() {
        n_->ensure_grad();
        return n_->grad;
    }
    void zero_grad() {
        if (!n_->grad.empty()) n_->grad.assign(n_->value.size(), T(0));
    }

    // Leaf copy of the current value, outside the tape.
    Tensor detach() const {
        auto n = std::make_shared<Node>();
        n->shape = n_->shape;
        n->value = n_->value;
        return Tensor(std::move(n));
    }

    std::shared_ptr<Node> node() const { return n_; }
    Node& ref() { return *n_; }
    const Node& ref() const { return *n_; }

    // Reverse sweep from a scalar: topological order over the tape, then each
    // node pulls its grad into its parents. After this, every requires_grad
    // tensor reachable from the loss has a populated grad.
    void backward() {
        if (numel() != 1) throw ShapeError("backward", "loss " + shape_str(shape()) + " is not scalar");
        std::vector<Node*> order;
        std::unordered_set<Node*> seen;
        std::vector<std::pair<Node*, size_t>> stack;
        stack.push_back({n_.get(), 0});
        seen.insert(n_.get());
        while (!stack.empty()) {
            auto& [node, idx] = stack.back();
            if (idx < node->parents.size()) {
                Node* p = node->parents[idx++].get();
                if (p->requires_grad && !seen.count(p)) {
                    seen.insert(p);
                    stack.push_back({p, 0});
                }
            } else {
                order.push_back(node);
                stack.pop_back();
            }
        }
        n_->ensure_grad();
        n_->grad[0] += T(1);
        for (auto it = order.rbegin(); it != order.rend(); ++it) {
            if ((*it)->backprop) (*it)->backprop(**it);
        }
    }

private:
    std::shared_ptr<Node> n_;
};

using Tensor32 = Tensor<float>;
using Tensor64 = Tensor<double>;

namespace detail {

// Output node wiring shared by every op: the result participates in the tape
// only while grad mode is on and some input needs gradients.
template <typename T>
Tensor<T> make_result(Shape shape, std::vector<std::shared_ptr<TensorNode<T>>> parents,
                      std::function<void(TensorNode<T>&)> backprop) {
    auto n = std::make_shared<TensorNode<T>>();
    n->shape = std::move(shape);
    n->value.assign(static_cast<size_t>(foodfuse::numel(n->shape)), T(0));
    bool track = false;
    if (GradMode::enabled()) {
        for (const auto& p : parents)
            if (p->requires_grad) track = true;
    }
    if (track) {
        n->requires_grad = true;
        n->parents = std::move(parents);
        n->backprop = std::move(backprop);
    }
    return Tensor<T>(std::move(n));
}

}  // namespace detail

}  // namespace foodfuse
