#pragma once

#include "cdaae/tensor.hpp"

#include <span>

namespace cdaae {

/// Clipping floor applied to every log argument.
inline constexpr double kLogEpsilon = 1e-7;

// Elementwise arithmetic. Operands must have identical shapes.
template <class T> BasicTensor<T> add(const BasicTensor<T>& a, const BasicTensor<T>& b);
template <class T> BasicTensor<T> sub(const BasicTensor<T>& a, const BasicTensor<T>& b);
template <class T> BasicTensor<T> mul(const BasicTensor<T>& a, const BasicTensor<T>& b);
template <class T> BasicTensor<T> scale(const BasicTensor<T>& a, T factor);

template <class T> BasicTensor<T> sum(const BasicTensor<T>& a);
template <class T> BasicTensor<T> mean(const BasicTensor<T>& a);

template <class T> BasicTensor<T> reshape(const BasicTensor<T>& a, Shape shape);

/// Joins two N×p and N×q matrices into N×(p+q), left operand first.
template <class T> BasicTensor<T> concat_columns(const BasicTensor<T>& left, const BasicTensor<T>& right);
/// Stacks two tensors along the leading axis.
template <class T> BasicTensor<T> concat_rows(const BasicTensor<T>& top, const BasicTensor<T>& bottom);
/// Rows [begin, end) along the leading axis.
template <class T> BasicTensor<T> slice_rows(const BasicTensor<T>& a, std::size_t begin, std::size_t end);

template <class T> BasicTensor<T> relu(const BasicTensor<T>& a);
template <class T> BasicTensor<T> tanh(const BasicTensor<T>& a);
template <class T> BasicTensor<T> sigmoid(const BasicTensor<T>& a);
/// Softmax over the last axis.
template <class T> BasicTensor<T> softmax(const BasicTensor<T>& a);

/// log(clamp(x, eps, 1)).
template <class T> BasicTensor<T> log_clipped(const BasicTensor<T>& a);
/// log(clamp(1 - x, eps, 1)).
template <class T> BasicTensor<T> log1m_clipped(const BasicTensor<T>& a);

/// y = x Wᵀ + b with x: N×in, W: out×in, b: out.
template <class T>
BasicTensor<T> dense(const BasicTensor<T>& input, const BasicTensor<T>& weight, const BasicTensor<T>& bias);

/// Cross-correlation, NCHW input, OIKK kernel, symmetric zero padding.
template <class T>
BasicTensor<T> conv2d(const BasicTensor<T>& input, const BasicTensor<T>& kernel, std::size_t stride,
                      std::size_t padding);

/// Adjoint of conv2d with respect to its input. Kernel layout is
/// (in-channels, out-channels, K, K), i.e. the kernel of the conv2d it
/// transposes.
template <class T>
BasicTensor<T> conv_transpose2d(const BasicTensor<T>& input, const BasicTensor<T>& kernel, std::size_t stride,
                                std::size_t padding);

/// Adds a per-channel bias to an N×C×... tensor.
template <class T> BasicTensor<T> add_channel_bias(const BasicTensor<T>& input, const BasicTensor<T>& bias);

template <class T>
struct BatchNormStats {
    BasicTensor<T> running_mean;
    BasicTensor<T> running_var;
    double momentum = 0.9;
    double epsilon = 1e-5;
};

/// Per-channel normalization over every axis except axis 1. Train mode uses
/// batch statistics and updates the running estimates.
template <class T>
BasicTensor<T> batchnorm(const BasicTensor<T>& input, const BasicTensor<T>& gamma, const BasicTensor<T>& beta,
                         BatchNormStats<T>& stats, Mode mode);

/// Batch mean of -Σ target·log(clamp(pred, eps, 1)). pred rows must sum to 1.
template <class T> BasicTensor<T> cross_entropy(const BasicTensor<T>& pred, const BasicTensor<T>& target);

/// Mean of squared differences over all elements.
template <class T> BasicTensor<T> mse(const BasicTensor<T>& a, const BasicTensor<T>& b);

/// N×K one-hot matrix. Throws std::out_of_range on labels outside [0, K).
template <class T> BasicTensor<T> one_hot(std::span<const int> labels, std::size_t categories);

} // namespace cdaae
