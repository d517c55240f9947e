#include "cdaae/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <sstream>
#include <unordered_set>

namespace cdaae {

std::size_t element_count(const Shape& shape)
{
    std::size_t n = 1;
    for (auto d : shape) n *= d;
    return n;
}

std::string to_string(const Shape& shape)
{
    std::ostringstream os;
    os << '(';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << 'x';
        os << shape[i];
    }
    os << ')';
    return os.str();
}

namespace detail {

std::uint64_t next_node_id()
{
    static std::atomic<std::uint64_t> counter{0};
    return ++counter;
}

} // namespace detail

template <class T>
BasicTensor<T>::BasicTensor(Shape shape, T fill)
    : node_(std::make_shared<node_type>())
{
    for (auto d : shape)
        if (d == 0) throw DimensionError("tensor dimensions must be positive, got " + to_string(shape));
    node_->value.assign(element_count(shape), fill);
    node_->shape = std::move(shape);
}

template <class T>
BasicTensor<T>::BasicTensor(Shape shape, std::vector<T> values)
    : node_(std::make_shared<node_type>())
{
    for (auto d : shape)
        if (d == 0) throw DimensionError("tensor dimensions must be positive, got " + to_string(shape));
    if (values.size() != element_count(shape))
        throw DimensionError("value count " + std::to_string(values.size()) + " does not match shape " +
                             to_string(shape));
    node_->shape = std::move(shape);
    node_->value = std::move(values);
}

template <class T>
BasicTensor<T> BasicTensor<T>::parameter(Shape shape, std::vector<T> values)
{
    BasicTensor t(std::move(shape), std::move(values));
    t.node_->requires_grad = true;
    return t;
}

template <class T>
BasicTensor<T> BasicTensor<T>::scalar(T v)
{
    return BasicTensor(Shape{1}, std::vector<T>{v});
}

template <class T>
std::size_t BasicTensor<T>::dim(std::size_t axis) const
{
    if (axis >= node_->shape.size())
        throw DimensionError("axis " + std::to_string(axis) + " out of range for shape " + to_string(node_->shape));
    return node_->shape[axis];
}

template <class T>
std::span<T> BasicTensor<T>::mutable_grad()
{
    node_->ensure_grad();
    return node_->grad;
}

template <class T>
void BasicTensor<T>::zero_grad()
{
    node_->grad.assign(node_->value.size(), T(0));
}

template <class T>
T BasicTensor<T>::item() const
{
    if (node_->value.size() != 1)
        throw DimensionError("item() needs a single-element tensor, got " + to_string(node_->shape));
    return node_->value[0];
}

template <class T>
BasicTensor<T> BasicTensor<T>::detach() const
{
    return BasicTensor(node_->shape, node_->value);
}

template <class T>
BasicTensor<T> BasicTensor<T>::clone() const
{
    BasicTensor t(node_->shape, node_->value);
    t.node_->requires_grad = node_->requires_grad;
    return t;
}

template <class T>
BasicTensor<T> BasicTensor<T>::from_node(std::shared_ptr<node_type> node)
{
    BasicTensor t;
    t.node_ = std::move(node);
    return t;
}

template <class T>
Graph<T> topological_order(const BasicTensor<T>& root)
{
    using NodePtr = std::shared_ptr<detail::Node<T>>;
    Graph<T> graph;
    std::unordered_set<const detail::Node<T>*> seen;
    // Iterative post-order DFS.
    std::vector<std::pair<NodePtr, std::size_t>> stack;
    stack.emplace_back(root.node(), 0);
    seen.insert(root.node().get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->inputs.size()) {
            NodePtr child = node->inputs[next++];
            if (child->requires_grad && seen.insert(child.get()).second) stack.emplace_back(child, 0);
        } else {
            graph.order.push_back(node);
            stack.pop_back();
        }
    }
    return graph;
}

template <class T>
Graph<T> backward(const BasicTensor<T>& loss)
{
    if (!loss.defined() || loss.size() != 1)
        throw DimensionError("backward needs a scalar loss, got " +
                             (loss.defined() ? to_string(loss.shape()) : std::string("undefined")));
    Graph<T> graph = topological_order(loss);
    for (auto& node : graph.order)
        if (node->backward) node->grad.assign(node->value.size(), T(0));
    loss.node()->ensure_grad();
    loss.node()->grad[0] += T(1);
    for (auto it = graph.order.rbegin(); it != graph.order.rend(); ++it) {
        auto& node = **it;
        if (node.backward && node.requires_grad) node.backward(node);
    }
    return graph;
}

template <class T>
void ParameterStore<T>::check_unique(const std::string& name) const
{
    auto clash = [&](const Entry& e) { return e.first == name; };
    if (std::any_of(params_.begin(), params_.end(), clash) || std::any_of(buffers_.begin(), buffers_.end(), clash))
        throw std::invalid_argument("duplicate tensor name: " + name);
}

template <class T>
BasicTensor<T> ParameterStore<T>::add_parameter(std::string name, Shape shape, std::vector<T> init)
{
    check_unique(name);
    auto t = BasicTensor<T>::parameter(std::move(shape), std::move(init));
    params_.emplace_back(std::move(name), t);
    return t;
}

template <class T>
BasicTensor<T> ParameterStore<T>::add_buffer(std::string name, Shape shape, T fill)
{
    check_unique(name);
    BasicTensor<T> t(std::move(shape), fill);
    buffers_.emplace_back(std::move(name), t);
    return t;
}

template <class T>
BasicTensor<T> ParameterStore<T>::parameter(std::string_view name) const
{
    for (const auto& [n, t] : params_)
        if (n == name) return t;
    throw std::out_of_range("no parameter named " + std::string(name));
}

template <class T>
BasicTensor<T> ParameterStore<T>::buffer(std::string_view name) const
{
    for (const auto& [n, t] : buffers_)
        if (n == name) return t;
    throw std::out_of_range("no buffer named " + std::string(name));
}

template <class T>
void ParameterStore<T>::zero_grad()
{
    for (auto& [n, t] : params_) t.zero_grad();
}

template <class T>
std::size_t ParameterStore<T>::parameter_count() const
{
    std::size_t n = 0;
    for (const auto& [name, t] : params_) n += t.size();
    return n;
}

template <class T>
void ParameterStore<T>::copy_values_from(const ParameterStore& other)
{
    auto copy = [](std::vector<Entry>& dst, const std::vector<Entry>& src) {
        if (dst.size() != src.size()) throw DimensionError("parameter stores differ in layout");
        for (std::size_t i = 0; i < dst.size(); ++i) {
            if (dst[i].first != src[i].first || dst[i].second.shape() != src[i].second.shape())
                throw DimensionError("parameter stores differ at " + dst[i].first);
            auto out = dst[i].second.mutable_values();
            auto in = src[i].second.values();
            std::copy(in.begin(), in.end(), out.begin());
        }
    };
    copy(params_, other.params_);
    copy(buffers_, other.buffers_);
}

template class BasicTensor<float>;
template class BasicTensor<double>;
template class ParameterStore<float>;
template class ParameterStore<double>;
template Graph<float> topological_order(const BasicTensor<float>&);
template Graph<double> topological_order(const BasicTensor<double>&);
template Graph<float> backward(const BasicTensor<float>&);
template Graph<double> backward(const BasicTensor<double>&);

} // namespace cdaae
