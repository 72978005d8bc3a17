#ifndef PEGE_TENSOR_HPP
#define PEGE_TENSOR_HPP

#include <pege/error.hpp>

#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_set>
#include <utility>
#include <vector>

namespace pege {

using Shape = std::vector<std::size_t>;

inline std::size_t numel(const Shape& shape)
{
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>{});
}

inline std::string to_string(const Shape& shape)
{
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i)
        os << (i ? "x" : "") << shape[i];
    os << ']';
    return os.str();
}

namespace detail {

inline thread_local bool grad_mode = true;

template <class T>
struct Node {
    // One entry per input; an empty vector means "no gradient for this input".
    using BackwardFn = std::function<std::vector<std::vector<T>>(const Node&)>;

    Shape shape;
    std::vector<T> value;
    std::vector<T> grad;
    bool requires_grad = false;
    bool leaf = true;
    std::vector<std::shared_ptr<Node>> inputs;
    BackwardFn backward_fn;
    std::string_view tag = "leaf";
};

} // namespace detail

inline bool grad_enabled() { return detail::grad_mode; }

// Disables graph recording for the lifetime of the guard.
class NoGradGuard {
public:
    NoGradGuard() : previous_(detail::grad_mode) { detail::grad_mode = false; }
    ~NoGradGuard() { detail::grad_mode = previous_; }
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool previous_;
};

/// Handle to a node of the reverse-mode graph. Copies share the node.
///
/// The scalar type is the precision of the whole graph: double for oracle and
/// gradient-check graphs, float for training.
template <class T>
class Tensor {
public:
    using value_type = T;
    using Node = detail::Node<T>;

    Tensor() = default;
    explicit Tensor(std::shared_ptr<Node> node) : node_(std::move(node)) {}

    static Tensor constant(Shape shape, std::vector<T> values)
    {
        return make_leaf(std::move(shape), std::move(values), false);
    }

    static Tensor parameter(Shape shape, std::vector<T> values)
    {
        return make_leaf(std::move(shape), std::move(values), true);
    }

    static Tensor zeros(Shape shape, bool requires_grad = false)
    {
        const auto n = numel(shape);
        return make_leaf(std::move(shape), std::vector<T>(n, T{0}), requires_grad);
    }

    static Tensor scalar(T v) { return constant({1}, {v}); }

    bool defined() const { return static_cast<bool>(node_); }
    const Shape& shape() const { return node_->shape; }
    std::size_t size() const { return node_->value.size(); }
    std::size_t dim(std::size_t axis) const { return node_->shape.at(axis); }
    std::size_t rank() const { return node_->shape.size(); }

    std::span<const T> data() const { return node_->value; }
    const std::vector<T>& values() const { return node_->value; }

    // Leaves only: the optimizer updates parameters in place between steps.
    std::span<T> mutable_data()
    {
        if (!node_->leaf)
            throw ContractError("mutable_data() on non-leaf tensor '" + std::string(node_->tag) + "'");
        return node_->value;
    }

    bool requires_grad() const { return node_->requires_grad; }
    bool is_leaf() const { return node_->leaf; }
    bool has_grad() const { return !node_->grad.empty(); }
    std::span<const T> grad() const { return node_->grad; }

    std::span<T> mutable_grad()
    {
        if (node_->grad.empty())
            node_->grad.assign(node_->value.size(), T{0});
        return node_->grad;
    }

    void zero_grad() { node_->grad.clear(); }

    T item() const
    {
        if (node_->value.size() != 1)
            throw ContractError("item() on tensor of shape " + to_string(node_->shape));
        return node_->value[0];
    }

    std::string_view tag() const { return node_->tag; }
    const std::shared_ptr<Node>& node() const { return node_; }

private:
    static Tensor make_leaf(Shape shape, std::vector<T> values, bool requires_grad)
    {
        if (numel(shape) != values.size())
            throw DimensionError("shape " + to_string(shape) + " does not match " +
                                 std::to_string(values.size()) + " values");
        auto node = std::make_shared<Node>();
        node->shape = std::move(shape);
        node->value = std::move(values);
        node->requires_grad = requires_grad;
        return Tensor(std::move(node));
    }

    std::shared_ptr<Node> node_;
};

using Tensor32 = Tensor<float>;
using Tensor64 = Tensor<double>;

template <class T>
void require_finite(std::span<const T> values, std::string_view tag)
{
    // v * 0 is 0 for finite v and NaN otherwise; the sum vectorizes.
    T probe{0};
    for (const T v : values)
        probe += v * T{0};
    if (probe != T{0})
        throw NumericError("non-finite value produced by '" + std::string(tag) + "'");
}

/// Records an operation result. This is also the hook through which custom
/// backward rules (quantizer estimators) enter the graph: `backward` receives
/// the finished node, whose `grad` holds the upstream gradient, and returns one
/// gradient per input.
template <class T>
Tensor<T> make_result(Shape shape, std::vector<T> value, std::vector<Tensor<T>> inputs,
                      typename detail::Node<T>::BackwardFn backward, std::string_view tag)
{
    require_finite<T>(value, tag);
    auto node = std::make_shared<detail::Node<T>>();
    node->shape = std::move(shape);
    node->value = std::move(value);
    node->tag = tag;
    node->leaf = false;
    if (grad_enabled()) {
        bool any = false;
        for (const auto& in : inputs)
            any = any || in.requires_grad();
        if (any) {
            node->requires_grad = true;
            node->backward_fn = std::move(backward);
            node->inputs.reserve(inputs.size());
            for (auto& in : inputs)
                node->inputs.push_back(in.node());
        }
    }
    return Tensor<T>(std::move(node));
}

namespace detail {

// Post-order over nodes that require grad; inputs visited in recording order.
template <class T>
std::vector<Node<T>*> topological_order(Node<T>* root)
{
    std::vector<Node<T>*> order;
    std::unordered_set<Node<T>*> visited;
    std::vector<std::pair<Node<T>*, std::size_t>> stack;
    stack.emplace_back(root, 0);
    visited.insert(root);
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->inputs.size()) {
            Node<T>* child = node->inputs[next++].get();
            if (child->requires_grad && visited.insert(child).second)
                stack.emplace_back(child, 0);
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }
    return order;
}

} // namespace detail

/// Reverse-mode sweep from a scalar loss. Leaf gradients accumulate across
/// calls; intermediate gradients are recomputed each call.
template <class T>
void backward(const Tensor<T>& loss)
{
    if (!loss.defined() || loss.size() != 1)
        throw ContractError("backward() requires a scalar loss");
    auto* root = loss.node().get();
    if (!root->requires_grad)
        return;
    const auto order = detail::topological_order(root);
    for (auto* node : order) {
        if (!node->leaf)
            node->grad.assign(node->value.size(), T{0});
    }
    if (root->leaf)
        root->grad.resize(1, T{0});
    root->grad[0] += T{1};

    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        auto* node = *it;
        if (node->leaf || !node->backward_fn)
            continue;
        auto grads = node->backward_fn(*node);
        if (grads.size() != node->inputs.size())
            throw ContractError("backward of '" + std::string(node->tag) + "' returned " +
                                std::to_string(grads.size()) + " gradients for " +
                                std::to_string(node->inputs.size()) + " inputs");
        for (std::size_t i = 0; i < grads.size(); ++i) {
            auto& input = *node->inputs[i];
            if (!input.requires_grad || grads[i].empty())
                continue;
            if (grads[i].size() != input.value.size())
                throw ContractError("gradient size mismatch in '" + std::string(node->tag) + "'");
            if (input.grad.empty())
                input.grad.assign(input.value.size(), T{0});
            for (std::size_t k = 0; k < grads[i].size(); ++k)
                input.grad[k] += grads[i][k];
        }
    }
}

} // namespace pege

#endif // PEGE_TENSOR_HPP
