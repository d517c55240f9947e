#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace cdaae {

using Shape = std::vector<std::size_t>;

std::size_t element_count(const Shape& shape);
std::string to_string(const Shape& shape);

/// Raised whenever operand shapes disagree.
class DimensionError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

enum class Mode { train, eval };

namespace detail {

std::uint64_t next_node_id();

template <class T>
struct Node {
    Shape shape;
    std::vector<T> value;
    std::vector<T> grad;
    bool requires_grad = false;
    std::uint64_t id = next_node_id();
    std::string_view op = "leaf";
    std::vector<std::shared_ptr<Node>> inputs;
    // Reads this node's grad and accumulates into the inputs' grads.
    std::function<void(Node&)> backward;

    void ensure_grad()
    {
        if (grad.size() != value.size()) grad.assign(value.size(), T(0));
    }
};

} // namespace detail

/// Dense row-major array with an optional handle into the autodiff graph.
///
/// Copies share the underlying node; use clone() or detach() for an
/// independent value.
template <class T>
class BasicTensor {
public:
    using value_type = T;
    using node_type = detail::Node<T>;

    BasicTensor() = default;
    explicit BasicTensor(Shape shape, T fill = T(0));
    BasicTensor(Shape shape, std::vector<T> values);

    /// A leaf that accumulates gradients.
    static BasicTensor parameter(Shape shape, std::vector<T> values);
    static BasicTensor scalar(T v);

    bool defined() const noexcept { return node_ != nullptr; }
    const Shape& shape() const { return node_->shape; }
    std::size_t rank() const { return node_->shape.size(); }
    std::size_t dim(std::size_t axis) const;
    std::size_t size() const { return node_->value.size(); }

    std::span<const T> values() const { return node_->value; }
    std::span<T> mutable_values() { return node_->value; }
    T operator[](std::size_t i) const { return node_->value[i]; }

    bool has_grad() const { return node_->grad.size() == node_->value.size(); }
    std::span<const T> grad() const { return node_->grad; }
    std::span<T> mutable_grad();
    void zero_grad();

    bool requires_grad() const { return node_->requires_grad; }
    void set_requires_grad(bool on) { node_->requires_grad = on; }
    std::uint64_t id() const { return node_->id; }
    std::string_view op() const { return node_->op; }

    /// Value of a single-element tensor.
    T item() const;

    /// Same values, cut off from the graph.
    BasicTensor detach() const;
    /// Independent copy preserving requires_grad.
    BasicTensor clone() const;

    template <class U>
    BasicTensor<U> cast() const
    {
        std::vector<U> out(node_->value.begin(), node_->value.end());
        return BasicTensor<U>(node_->shape, std::move(out));
    }

    const std::shared_ptr<node_type>& node() const { return node_; }
    static BasicTensor from_node(std::shared_ptr<node_type> node);

private:
    std::shared_ptr<node_type> node_;
};

using Tensor = BasicTensor<float>;

/// Operations reachable from a root, ordered so that every node's inputs
/// precede it.
template <class T>
struct Graph {
    std::vector<std::shared_ptr<detail::Node<T>>> order;
};

template <class T>
Graph<T> topological_order(const BasicTensor<T>& root);

/// Reverse-mode sweep from a scalar loss. Leaf gradients accumulate; call
/// ParameterStore::zero_grad() first to start from zero.
template <class T>
Graph<T> backward(const BasicTensor<T>& loss);

/// Named registry of trainable parameters and non-trainable buffers
/// (batch-norm running statistics). Insertion order is preserved.
template <class T>
class ParameterStore {
public:
    using Entry = std::pair<std::string, BasicTensor<T>>;

    BasicTensor<T> add_parameter(std::string name, Shape shape, std::vector<T> init);
    BasicTensor<T> add_buffer(std::string name, Shape shape, T fill);

    const std::vector<Entry>& parameters() const { return params_; }
    const std::vector<Entry>& buffers() const { return buffers_; }

    BasicTensor<T> parameter(std::string_view name) const;
    BasicTensor<T> buffer(std::string_view name) const;

    /// Allocates zeroed gradients for every parameter.
    void zero_grad();
    std::size_t parameter_count() const;

    /// Copies values (parameters and buffers) from a store with identical layout.
    void copy_values_from(const ParameterStore& other);

private:
    void check_unique(const std::string& name) const;

    std::vector<Entry> params_;
    std::vector<Entry> buffers_;
};

} // namespace cdaae
