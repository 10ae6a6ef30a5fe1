#pragma once

// Reverse-mode autodiff over dense NCHW tensors.
//
// Every op result records its inputs and a backward closure. Nodes carry a
// monotonically increasing sequence number, so reverse execution order is
// recovered by sorting. The tape is single-shot: once `backward` has run
// through a node, that node's closure is released and reusing the graph
// raises std::logic_error.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <vector>

namespace svfit::ad {

struct Shape {
    int n = 1, c = 1, h = 1, w = 1;

    std::size_t size() const { return static_cast<std::size_t>(n) * c * h * w; }
    std::size_t plane() const { return static_cast<std::size_t>(h) * w; }
    std::size_t sample() const { return static_cast<std::size_t>(c) * h * w; }
    bool operator==(const Shape&) const = default;

    std::string str() const {
        std::ostringstream os;
        os << "[" << n << "," << c << "," << h << "," << w << "]";
        return os.str();
    }
};

class ShapeError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

template <typename T>
struct Node {
    Shape shape;
    std::vector<T> value;
    std::vector<T> grad;
    bool requires_grad = false;
    bool leaf = true;
    bool consumed = false;
    std::uint64_t seq = 0;
    std::vector<std::shared_ptr<Node>> inputs;
    std::function<void(Node&)> backward_fn;

    T* grad_data() {
        if (grad.size() != value.size()) grad.assign(value.size(), T(0));
        return grad.data();
    }
};

inline std::uint64_t next_sequence() {
    static thread_local std::uint64_t counter = 0;
    return ++counter;
}

template <typename T>
class Tensor {
public:
    using value_type = T;

    Tensor() = default;

    static Tensor zeros(Shape s, bool requires_grad = false) { return full(s, T(0), requires_grad); }

    static Tensor full(Shape s, T v, bool requires_grad = false) {
        return from(s, std::vector<T>(s.size(), v), requires_grad);
    }

    static Tensor from(Shape s, std::vector<T> values, bool requires_grad = false) {
        if (values.size() != s.size())
            throw ShapeError("Tensor::from: " + std::to_string(values.size()) + " values for shape " + s.str());
        auto node = std::make_shared<Node<T>>();
        node->shape = s;
        node->value = std::move(values);
        node->requires_grad = requires_grad;
        node->seq = next_sequence();
        return Tensor(std::move(node));
    }

    static Tensor scalar(T v, bool requires_grad = false) { return full({1, 1, 1, 1}, v, requires_grad); }

    bool defined() const { return node_ != nullptr; }
    const Shape& shape() const { return node_->shape; }
    std::size_t size() const { return node_->value.size(); }
    std::span<const T> data() const { return node_->value; }
    const T* ptr() const { return node_->value.data(); }

    /// Direct write access; only meaningful on leaves (parameters, inputs).
    std::span<T> mutable_data() { return node_->value; }

    std::span<const T> grad() const { return node_->grad; }
    std::span<T> mutable_grad() { return {node_->grad_data(), node_->value.size()}; }
    bool has_grad() const { return node_->grad.size() == node_->value.size(); }

    bool requires_grad() const { return node_->requires_grad; }
    void set_requires_grad(bool r) { node_->requires_grad = r; }
    bool is_leaf() const { return node_->leaf; }
    void zero_grad() { node_->grad.clear(); }

    T item() const {
        if (size() != 1) throw ShapeError("item() on tensor of shape " + shape().str());
        return node_->value[0];
    }

    /// New leaf holding a copy of the values.
    Tensor detach(bool requires_grad = false) const { return from(shape(), node_->value, requires_grad); }

    Tensor clone() const { return detach(requires_grad()); }

    template <typename U>
    Tensor<U> cast(bool requires_grad = false) const {
        std::vector<U> v(node_->value.begin(), node_->value.end());
        return Tensor<U>::from(shape(), std::move(v), requires_grad);
    }

    Node<T>* node() const { return node_.get(); }
    const std::shared_ptr<Node<T>>& node_ptr() const { return node_; }

    explicit Tensor(std::shared_ptr<Node<T>> n) : node_(std::move(n)) {}

private:
    std::shared_ptr<Node<T>> node_;
};

/// Builds an op result. `backward` is only recorded when some input needs a
/// gradient, so constant sub-graphs cost nothing at backward time.
template <typename T>
Tensor<T> make_result(Shape s, std::vector<T> value, std::initializer_list<Tensor<T>> inputs,
                      std::function<void(Node<T>&)> backward) {
    auto node = std::make_shared<Node<T>>();
    node->shape = s;
    node->value = std::move(value);
    node->leaf = false;
    node->seq = next_sequence();
    for (const auto& in : inputs)
        if (in.defined() && in.requires_grad()) node->requires_grad = true;
    if (node->requires_grad) {
        for (const auto& in : inputs) node->inputs.push_back(in.defined() ? in.node_ptr() : nullptr);
        node->backward_fn = std::move(backward);
    }
    return Tensor<T>(std::move(node));
}

template <typename T>
Tensor<T> make_result(Shape s, std::vector<T> value, const std::vector<Tensor<T>>& inputs,
                      std::function<void(Node<T>&)> backward) {
    auto node = std::make_shared<Node<T>>();
    node->shape = s;
    node->value = std::move(value);
    node->leaf = false;
    node->seq = next_sequence();
    for (const auto& in : inputs)
        if (in.defined() && in.requires_grad()) node->requires_grad = true;
    if (node->requires_grad) {
        for (const auto& in : inputs) node->inputs.push_back(in.defined() ? in.node_ptr() : nullptr);
        node->backward_fn = std::move(backward);
    }
    return Tensor<T>(std::move(node));
}

/// True when input `i` of `self` should receive a gradient.
template <typename T>
bool wants_grad(const Node<T>& self, std::size_t i) {
    return i < self.inputs.size() && self.inputs[i] && self.inputs[i]->requires_grad;
}

/// Propagates d(loss)/d(node) for every node reachable from `loss`, in reverse
/// execution order, accumulating into leaf gradients.
template <typename T>
void backward(const Tensor<T>& loss) {
    if (!loss.defined()) throw std::logic_error("backward: undefined tensor");
    if (loss.size() != 1) throw ShapeError("backward: loss must be a scalar, got " + loss.shape().str());
    Node<T>* root = loss.node();
    if (root->consumed) throw std::logic_error("backward: graph has already been differentiated");
    if (!root->requires_grad) return;

    // Owning references: clearing `inputs` below would otherwise free nodes
    // that are still queued.
    std::vector<std::shared_ptr<Node<T>>> order;
    std::unordered_set<Node<T>*> seen;
    std::vector<std::shared_ptr<Node<T>>> stack{loss.node_ptr()};
    while (!stack.empty()) {
        auto n = std::move(stack.back());
        stack.pop_back();
        if (!seen.insert(n.get()).second) continue;
        if (!n->leaf && n->consumed)
            throw std::logic_error("backward: graph has already been differentiated");
        for (auto& in : n->inputs)
            if (in && in->requires_grad) stack.push_back(in);
        order.push_back(std::move(n));
    }
    std::sort(order.begin(), order.end(), [](const auto& a, const auto& b) { return a->seq > b->seq; });

    root->grad_data()[0] += T(1);
    for (auto& sp : order) {
        Node<T>* n = sp.get();
        if (n->leaf) continue;
        if (n->backward_fn && n->grad.size() == n->value.size()) n->backward_fn(*n);
        n->consumed = true;
        n->backward_fn = nullptr;
        n->inputs.clear();
        if (n != root) n->grad.clear();
    }
    root->consumed = true;
}

}  // namespace svfit::ad
