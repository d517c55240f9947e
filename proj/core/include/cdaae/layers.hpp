#pragma once

#include "cdaae/ops.hpp"
#include "cdaae/tensor.hpp"

#include <random>
#include <string>

namespace cdaae {

/// He-normal initialized weights drawn from `rng`.
template <class T>
std::vector<T> he_normal(std::size_t count, std::size_t fan_in, std::mt19937_64& rng);

template <class T>
struct Conv2dLayer {
    BasicTensor<T> kernel;
    BasicTensor<T> bias; // undefined when the layer has no bias
    std::size_t stride = 1;
    std::size_t padding = 0;

    Conv2dLayer() = default;
    Conv2dLayer(ParameterStore<T>& store, const std::string& name, std::size_t in, std::size_t out,
                std::size_t kernel_size, std::size_t stride, std::size_t padding, bool with_bias,
                std::mt19937_64& rng);

    BasicTensor<T> forward(const BasicTensor<T>& x) const;
    std::size_t out_channels() const { return kernel.dim(0); }
};

template <class T>
struct ConvTranspose2dLayer {
    BasicTensor<T> kernel;
    BasicTensor<T> bias;
    std::size_t stride = 1;
    std::size_t padding = 0;

    ConvTranspose2dLayer() = default;
    ConvTranspose2dLayer(ParameterStore<T>& store, const std::string& name, std::size_t in, std::size_t out,
                         std::size_t kernel_size, std::size_t stride, std::size_t padding, bool with_bias,
                         std::mt19937_64& rng);

    BasicTensor<T> forward(const BasicTensor<T>& x) const;
    std::size_t out_channels() const { return kernel.dim(1); }
};

template <class T>
struct BatchNormLayer {
    BasicTensor<T> gamma;
    BasicTensor<T> beta;
    // Running statistics live in the store as buffers; the struct holds
    // handles to them, so copies of this layer share state.
    mutable BatchNormStats<T> stats;

    BatchNormLayer() = default;
    BatchNormLayer(ParameterStore<T>& store, const std::string& name, std::size_t channels);

    BasicTensor<T> forward(const BasicTensor<T>& x, Mode mode) const;
};

template <class T>
struct DenseLayer {
    BasicTensor<T> weight;
    BasicTensor<T> bias;

    DenseLayer() = default;
    DenseLayer(ParameterStore<T>& store, const std::string& name, std::size_t in, std::size_t out,
               std::mt19937_64& rng);

    BasicTensor<T> forward(const BasicTensor<T>& x) const;
    std::size_t out_features() const { return weight.dim(0); }
};

} // namespace cdaae
