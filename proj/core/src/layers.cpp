#include "cdaae/layers.hpp"

#include <cmath>

namespace cdaae {

template <class T>
std::vector<T> he_normal(std::size_t count, std::size_t fan_in, std::mt19937_64& rng)
{
    std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / static_cast<double>(fan_in)));
    std::vector<T> out(count);
    for (auto& v : out) v = static_cast<T>(dist(rng));
    return out;
}

template <class T>
Conv2dLayer<T>::Conv2dLayer(ParameterStore<T>& store, const std::string& name, std::size_t in, std::size_t out,
                            std::size_t k, std::size_t stride_, std::size_t padding_, bool with_bias,
                            std::mt19937_64& rng)
    : stride(stride_), padding(padding_)
{
    kernel = store.add_parameter(name + ".kernel", {out, in, k, k}, he_normal<T>(out * in * k * k, in * k * k, rng));
    if (with_bias) bias = store.add_parameter(name + ".bias", {out}, std::vector<T>(out, T(0)));
}

template <class T>
BasicTensor<T> Conv2dLayer<T>::forward(const BasicTensor<T>& x) const
{
    auto y = conv2d(x, kernel, stride, padding);
    return bias.defined() ? add_channel_bias(y, bias) : y;
}

template <class T>
ConvTranspose2dLayer<T>::ConvTranspose2dLayer(ParameterStore<T>& store, const std::string& name, std::size_t in,
                                              std::size_t out, std::size_t k, std::size_t stride_,
                                              std::size_t padding_, bool with_bias, std::mt19937_64& rng)
    : stride(stride_), padding(padding_)
{
    // Each output pixel receives roughly in·(K/stride)² contributions.
    const std::size_t fan_in = std::max<std::size_t>(1, in * (k / stride_) * (k / stride_));
    kernel = store.add_parameter(name + ".kernel", {in, out, k, k}, he_normal<T>(in * out * k * k, fan_in, rng));
    if (with_bias) bias = store.add_parameter(name + ".bias", {out}, std::vector<T>(out, T(0)));
}

template <class T>
BasicTensor<T> ConvTranspose2dLayer<T>::forward(const BasicTensor<T>& x) const
{
    auto y = conv_transpose2d(x, kernel, stride, padding);
    return bias.defined() ? add_channel_bias(y, bias) : y;
}

template <class T>
BatchNormLayer<T>::BatchNormLayer(ParameterStore<T>& store, const std::string& name, std::size_t channels)
{
    gamma = store.add_parameter(name + ".gamma", {channels}, std::vector<T>(channels, T(1)));
    beta = store.add_parameter(name + ".beta", {channels}, std::vector<T>(channels, T(0)));
    stats.running_mean = store.add_buffer(name + ".running_mean", {channels}, T(0));
    stats.running_var = store.add_buffer(name + ".running_var", {channels}, T(1));
}

template <class T>
BasicTensor<T> BatchNormLayer<T>::forward(const BasicTensor<T>& x, Mode mode) const
{
    return batchnorm(x, gamma, beta, stats, mode);
}

template <class T>
DenseLayer<T>::DenseLayer(ParameterStore<T>& store, const std::string& name, std::size_t in, std::size_t out,
                          std::mt19937_64& rng)
{
    weight = store.add_parameter(name + ".weight", {out, in}, he_normal<T>(out * in, in, rng));
    bias = store.add_parameter(name + ".bias", {out}, std::vector<T>(out, T(0)));
}

template <class T>
BasicTensor<T> DenseLayer<T>::forward(const BasicTensor<T>& x) const
{
    return dense(x, weight, bias);
}

template std::vector<float> he_normal<float>(std::size_t, std::size_t, std::mt19937_64&);
template std::vector<double> he_normal<double>(std::size_t, std::size_t, std::mt19937_64&);
template struct Conv2dLayer<float>;
template struct Conv2dLayer<double>;
template struct ConvTranspose2dLayer<float>;
template struct ConvTranspose2dLayer<double>;
template struct BatchNormLayer<float>;
template struct BatchNormLayer<double>;
template struct DenseLayer<float>;
template struct DenseLayer<double>;

} // namespace cdaae
