#pragma once

#include <memory>
#include <stdexcept>
#include <unordered_set>
#include <vector>

#include "spectranet/tensor.hpp"

namespace spectranet {

// ============================================================================
// Reverse-mode graph
// ============================================================================

template <Real T>
struct GraphNode {
    Tensor<T> value;
    Tensor<T> grad;  // empty until the first adjoint arrives
    bool requires_grad = false;
    std::vector<std::shared_ptr<GraphNode>> parents;
    // Reads this->grad and accumulates into parents. Runs at most once per pass.
    std::function<void(GraphNode&)> backward_rule;

    Tensor<T>& grad_ref() {
        if (grad.size() != value.size()) grad = Tensor<T>(value.shape());
        return grad;
    }
};

/// Handle to a node of the computation graph. Copies share the node.
template <Real T>
class Var {
public:
    Var() = default;
    explicit Var(Tensor<T> value, bool requires_grad = false) : node_(std::make_shared<GraphNode<T>>()) {
        node_->value = std::move(value);
        node_->requires_grad = requires_grad;
    }
    explicit Var(std::shared_ptr<GraphNode<T>> n) : node_(std::move(n)) {}

    const Tensor<T>& value() const { return node_->value; }
    const Shape& shape() const { return node_->value.shape(); }
    std::size_t size() const { return node_->value.size(); }
    bool requires_grad() const { return node_->requires_grad; }

    /// Gradient after backward(); zeros if the node was not reached.
    Tensor<T> grad() const {
        if (node_->grad.size() == node_->value.size()) return node_->grad;
        return Tensor<T>(node_->value.shape());
    }
    bool has_grad() const { return node_->grad.size() == node_->value.size() && !node_->value.empty(); }

    const std::shared_ptr<GraphNode<T>>& node() const { return node_; }
    explicit operator bool() const { return static_cast<bool>(node_); }

private:
    std::shared_ptr<GraphNode<T>> node_;
};

namespace detail {

/// Builds a result node. When no parent requires grad the result is a detached
/// constant and the graph behind it can be freed immediately.
template <Real T, typename Rule>
Var<T> make_result(Tensor<T> value, std::initializer_list<Var<T>> parents, Rule&& rule) {
    auto n = std::make_shared<GraphNode<T>>();
    n->value = std::move(value);
    bool any = false;
    for (const auto& p : parents) any = any || p.requires_grad();
    if (any) {
        n->requires_grad = true;
        for (const auto& p : parents) n->parents.push_back(p.node());
        n->backward_rule = std::forward<Rule>(rule);
    }
    return Var<T>(std::move(n));
}

}  // namespace detail

/// Runs the adjoint sweep from a scalar root. Every reachable node that requires
/// grad ends with a populated grad; the graph edges are released afterwards.
template <Real T>
void backward(const Var<T>& root) {
    if (root.size() != 1) throw ShapeError("backward: root must be scalar, got " + shape_str(root.shape()));
    if (!root.requires_grad()) throw std::logic_error("backward: root does not depend on any requires_grad node");

    // iterative post-order DFS -> topological order (parents before children)
    std::vector<GraphNode<T>*> order;
    std::unordered_set<GraphNode<T>*> seen;
    std::vector<std::pair<GraphNode<T>*, std::size_t>> stack;
    stack.emplace_back(root.node().get(), 0);
    seen.insert(root.node().get());
    while (!stack.empty()) {
        auto& [n, idx] = stack.back();
        if (idx < n->parents.size()) {
            GraphNode<T>* p = n->parents[idx++].get();
            if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
        } else {
            order.push_back(n);
            stack.pop_back();
        }
    }

    root.node()->grad_ref()[0] += T(1);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        GraphNode<T>* n = *it;
        if (n->backward_rule && n->grad.size() == n->value.size()) n->backward_rule(*n);
    }
    for (GraphNode<T>* n : order) {
        n->grad_ref();
        n->parents.clear();
        n->backward_rule = nullptr;
    }
}

// ============================================================================
// Elementwise arithmetic
// ============================================================================

namespace detail {

// b broadcasts over a when b's shape is a suffix of a's shape.
inline bool suffix_broadcastable(const Shape& a, const Shape& b) {
    if (b.size() > a.size()) return false;
    return std::equal(b.rbegin(), b.rend(), a.rbegin());
}

template <Real T>
Var<T> additive(const char* op, const Var<T>& a, const Var<T>& b, T sign_b) {
    const auto& av = a.value();
    const auto& bv = b.value();
    const bool same = av.shape() == bv.shape();
    if (!same && !suffix_broadcastable(av.shape(), bv.shape())) throw ShapeError(op, av.shape(), bv.shape());
    Tensor<T> out = av;
    const std::size_t nb = bv.size();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += sign_b * bv[i % nb];
    return make_result<T>(std::move(out), {a, b}, [sign_b](GraphNode<T>& self) {
        const auto& g = self.grad;
        auto& pa = self.parents[0];
        auto& pb = self.parents[1];
        if (pa->requires_grad) {
            auto& ga = pa->grad_ref();
            for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
        }
        if (pb->requires_grad) {
            auto& gb = pb->grad_ref();
            const std::size_t n = gb.size();
            for (std::size_t i = 0; i < g.size(); ++i) gb[i % n] += sign_b * g[i];
        }
    });
}

}  // namespace detail

template <Real T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
    return detail::additive("add", a, b, T(1));
}

template <Real T>
Var<T> sub(const Var<T>& a, const Var<T>& b) {
    return detail::additive("sub", a, b, T(-1));
}

template <Real T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
    require_same_shape("mul", a.value(), b.value());
    Tensor<T> out = a.value();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b.value()[i];
    return detail::make_result<T>(std::move(out), {a, b}, [](GraphNode<T>& self) {
        const auto& g = self.grad;
        auto& pa = self.parents[0];
        auto& pb = self.parents[1];
        if (pa->requires_grad) {
            auto& ga = pa->grad_ref();
            for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * pb->value[i];
        }
        if (pb->requires_grad) {
            auto& gb = pb->grad_ref();
            for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * pa->value[i];
        }
    });
}

template <Real T>
Var<T> scale(const Var<T>& a, T c) {
    Tensor<T> out = a.value();
    for (auto& v : out.data()) v *= c;
    return detail::make_result<T>(std::move(out), {a}, [c](GraphNode<T>& self) {
        auto& ga = self.parents[0]->grad_ref();
        for (std::size_t i = 0; i < self.grad.size(); ++i) ga[i] += c * self.grad[i];
    });
}

template <Real T>
Var<T> sum(const Var<T>& a) {
    T acc = 0;
    for (T v : a.value().data()) acc += v;
    return detail::make_result<T>(Tensor<T>::scalar(acc), {a}, [](GraphNode<T>& self) {
        auto& ga = self.parents[0]->grad_ref();
        const T g = self.grad[0];
        for (auto& v : ga.data()) v += g;
    });
}

template <Real T>
Var<T> operator+(const Var<T>& a, const Var<T>& b) { return add(a, b); }
template <Real T>
Var<T> operator-(const Var<T>& a, const Var<T>& b) { return sub(a, b); }
template <Real T>
Var<T> operator*(const Var<T>& a, const Var<T>& b) { return mul(a, b); }

}  // namespace spectranet
