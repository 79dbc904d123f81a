#pragma once

#include <functional>
#include <memory>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "msn/tensor.hpp"

namespace msn {

/// One vertex of the reverse-mode graph. Ops create nodes eagerly: the value
/// is computed at construction and `backprop` knows how to push this node's
/// gradient into its parents.
template <typename T>
struct Node {
    Tensor<T> value;
    Tensor<T> grad;  // allocated on demand, always value's shape
    bool requires_grad = false;
    bool grad_ready = false;
    std::vector<std::shared_ptr<Node<T>>> parents;
    std::function<void(const Tensor<T>& out_grad)> backprop;
    std::string tag;

    void accumulate_grad(const Tensor<T>& g) {
        if (!grad_ready) {
            grad = Tensor<T>::zeros(value.shape());
            grad_ready = true;
        }
        T* dst = grad.data();
        const T* src = g.data();
        for (int64_t i = 0; i < grad.numel(); ++i) dst[i] += src[i];
    }

    void zero_grad() {
        grad = Tensor<T>();
        grad_ready = false;
    }
};

template <typename T>
using NodePtr = std::shared_ptr<Node<T>>;

template <typename T>
NodePtr<T> make_leaf(Tensor<T> value, bool requires_grad, std::string tag = {}) {
    auto n = std::make_shared<Node<T>>();
    n->value = std::move(value);
    n->requires_grad = requires_grad;
    n->tag = std::move(tag);
    return n;
}

template <typename T>
NodePtr<T> make_op(Tensor<T> value, std::vector<NodePtr<T>> parents,
                   std::function<void(const Tensor<T>&)> backprop, std::string tag = {}) {
    auto n = std::make_shared<Node<T>>();
    n->value = std::move(value);
    n->parents = std::move(parents);
    for (const auto& p : n->parents)
        if (p->requires_grad) n->requires_grad = true;
    if (n->requires_grad) n->backprop = std::move(backprop);
    n->tag = std::move(tag);
    return n;
}

/// Reverse-mode sweep from a scalar root. Topologically orders the reachable
/// subgraph (the parent DAG is acyclic by construction), seeds the root with
/// gradient 1 and runs each node's rule once, after all its consumers.
template <typename T>
void backward(const NodePtr<T>& root) {
    if (root->value.numel() != 1)
        throw ShapeError("backward: root must be scalar, got " + shape_str(root->value.shape()));

    std::vector<Node<T>*> order;
    std::unordered_set<Node<T>*> seen;
    std::vector<std::pair<Node<T>*, size_t>> stack;
    stack.push_back({root.get(), 0});
    seen.insert(root.get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            Node<T>* parent = node->parents[next++].get();
            if (parent->requires_grad && !seen.count(parent)) {
                seen.insert(parent);
                stack.push_back({parent, 0});
            }
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }

    root->accumulate_grad(Tensor<T>::full(root->value.shape(), T(1)));
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node<T>* node = *it;
        if (node->backprop && node->grad_ready) node->backprop(node->grad);
    }
}

}  // namespace msn
