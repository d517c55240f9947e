#include "cdaae/optimizer.hpp"

#include <cmath>
#include <stdexcept>

namespace cdaae {

template <class T>
Adam<T>::Adam(std::vector<Entry> params, AdamOptions options)
    : params_(std::move(params)), options_(options)
{
    for (const auto& [name, p] : params_) {
        m_.emplace_back(p.size(), T(0));
        v_.emplace_back(p.size(), T(0));
    }
}

template <class T>
void Adam<T>::step()
{
    for (const auto& [name, p] : params_)
        if (!p.has_grad()) throw std::logic_error("optimizer step: parameter " + name + " has no gradient");
    ++step_;
    const double b1 = options_.beta1, b2 = options_.beta2;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(step_));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(step_));
    const T lr = static_cast<T>(options_.learning_rate);
    const T eps = static_cast<T>(options_.epsilon);
    for (std::size_t k = 0; k < params_.size(); ++k) {
        auto values = params_[k].second.mutable_values();
        auto grad = params_[k].second.grad();
        auto& m = m_[k];
        auto& v = v_[k];
        for (std::size_t i = 0; i < values.size(); ++i) {
            const T g = grad[i];
            m[i] = static_cast<T>(b1) * m[i] + static_cast<T>(1.0 - b1) * g;
            v[i] = static_cast<T>(b2) * v[i] + static_cast<T>(1.0 - b2) * g * g;
            const T m_hat = m[i] / static_cast<T>(c1);
            const T v_hat = v[i] / static_cast<T>(c2);
            values[i] -= lr * m_hat / (std::sqrt(v_hat) + eps);
        }
    }
}

template <class T>
OptimizerState Adam<T>::state() const
{
    OptimizerState s;
    s.step = step_;
    for (std::size_t k = 0; k < m_.size(); ++k) {
        s.first_moment.emplace_back(m_[k].begin(), m_[k].end());
        s.second_moment.emplace_back(v_[k].begin(), v_[k].end());
    }
    return s;
}

template <class T>
void Adam<T>::restore(const OptimizerState& s)
{
    if (s.first_moment.size() != m_.size() || s.second_moment.size() != v_.size())
        throw DimensionError("optimizer state has " + std::to_string(s.first_moment.size()) +
                             " accumulators, expected " + std::to_string(m_.size()));
    for (std::size_t k = 0; k < m_.size(); ++k) {
        if (s.first_moment[k].size() != m_[k].size() || s.second_moment[k].size() != v_[k].size())
            throw DimensionError("optimizer state shape mismatch for " + params_[k].first);
        m_[k].assign(s.first_moment[k].begin(), s.first_moment[k].end());
        v_[k].assign(s.second_moment[k].begin(), s.second_moment[k].end());
    }
    step_ = s.step;
}

template class Adam<float>;
template class Adam<double>;

} // namespace cdaae
