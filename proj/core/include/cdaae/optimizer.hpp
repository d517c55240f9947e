#pragma once

#include "cdaae/tensor.hpp"

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace cdaae {

struct AdamOptions {
    double learning_rate = 2e-4;
    double beta1 = 0.5;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

/// Moment accumulators in parameter order; shapes mirror the parameters.
struct OptimizerState {
    std::vector<std::vector<float>> first_moment;
    std::vector<std::vector<float>> second_moment;
    std::uint64_t step = 0;
};

/// Adaptive-moment optimizer over a fixed, ordered parameter list.
template <class T>
class Adam {
public:
    using Entry = std::pair<std::string, BasicTensor<T>>;

    Adam(std::vector<Entry> params, AdamOptions options);

    /// Applies one update from the parameters' current gradients. Throws if
    /// any parameter has no gradient buffer.
    void step();

    const std::vector<Entry>& parameters() const { return params_; }
    const AdamOptions& options() const { return options_; }
    void set_learning_rate(double lr) { options_.learning_rate = lr; }
    std::uint64_t steps() const { return step_; }

    OptimizerState state() const;
    void restore(const OptimizerState& state);

private:
    std::vector<Entry> params_;
    AdamOptions options_;
    std::vector<std::vector<T>> m_;
    std::vector<std::vector<T>> v_;
    std::uint64_t step_ = 0;
};

} // namespace cdaae
