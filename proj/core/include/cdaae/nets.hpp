#pragma once

#include "cdaae/layers.hpp"
#include "cdaae/tensor.hpp"

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

namespace cdaae {

enum class Domain { A, B };

std::string_view to_string(Domain d);
Domain other(Domain d);

/// Which discriminator to query.
enum class Critic { content, style_a, style_b };

inline constexpr std::size_t kImageChannels = 3;
inline constexpr std::size_t kImageSize = 32;

/// Latent priors: uniform categorical over one-hot content codes, isotropic
/// unit Gaussian per-domain style codes.
struct PriorSpec {
    std::size_t categories = 10;
    std::size_t style_dim_a = 8;
    std::size_t style_dim_b = 8;

    void validate() const;
    std::size_t style_dim(Domain d) const { return d == Domain::A ? style_dim_a : style_dim_b; }
    std::size_t code_dim(Domain d) const { return categories + style_dim(d); }

    template <class T>
    BasicTensor<T> sample_content(std::size_t n, std::mt19937_64& rng) const;
    template <class T>
    BasicTensor<T> sample_style(std::size_t n, Domain d, std::mt19937_64& rng) const;
};

/// Content probabilities concatenated with a domain's style vector.
template <class T>
struct LatentCode {
    BasicTensor<T> content; // N×K, rows on the simplex
    BasicTensor<T> style;   // N×style_dim
    Domain domain = Domain::A;

    /// [content, style] in that order; validates the content rows.
    BasicTensor<T> concatenated() const;
};

struct NetConfig {
    PriorSpec prior;
    /// Scales every hidden width; 1.0 gives the reference 64/128/256/128 encoder.
    double width = 1.0;

    std::size_t scaled(std::size_t base) const;
};

/// Shared low-level encoder E_L: two stride-2 conv layers, 32→16→8.
template <class T>
struct Trunk {
    ParameterStore<T> store;
    Conv2dLayer<T> conv1, conv2;
    BatchNormLayer<T> bn1, bn2;

    Trunk(const NetConfig& cfg, const std::string& name, std::mt19937_64& rng);
    BasicTensor<T> forward(const BasicTensor<T>& images, Mode mode) const;
};

/// Content head E_H^c: 8→4→1 convolutions, then a dense softmax over K.
template <class T>
struct ContentHead {
    ParameterStore<T> store;
    Conv2dLayer<T> conv3, conv4;
    BatchNormLayer<T> bn3, bn4;
    DenseLayer<T> classify;

    ContentHead(const NetConfig& cfg, const std::string& name, std::mt19937_64& rng);
    BasicTensor<T> forward(const BasicTensor<T>& features, Mode mode) const;
};

/// Style head: two conv blocks from the trunk's second layer, then a 1×1
/// projection with no activation.
template <class T>
struct StyleHead {
    ParameterStore<T> store;
    Conv2dLayer<T> conv1, conv2, project;
    BatchNormLayer<T> bn1, bn2;

    StyleHead(const NetConfig& cfg, const std::string& name, std::size_t style_dim, std::mt19937_64& rng);
    BasicTensor<T> forward(const BasicTensor<T>& features, Mode mode) const;
};

/// Four transposed convolutions 1→4→8→16→32 ending in tanh.
template <class T>
struct Generator {
    ParameterStore<T> store;
    ConvTranspose2dLayer<T> up1, up2, up3, up4;
    BatchNormLayer<T> bn1, bn2, bn3;
    std::size_t code_dim;

    Generator(const NetConfig& cfg, const std::string& name, std::size_t code_dim, std::mt19937_64& rng);
    BasicTensor<T> forward(const BasicTensor<T>& codes, Mode mode) const;
};

/// Four dense layers, ReLU between, sigmoid output.
template <class T>
struct Discriminator {
    ParameterStore<T> store;
    DenseLayer<T> fc1, fc2, fc3, fc4;

    Discriminator(const NetConfig& cfg, const std::string& name, std::size_t input_dim, std::mt19937_64& rng);
    BasicTensor<T> forward(const BasicTensor<T>& codes) const;
    std::size_t input_dim() const { return fc1.weight.dim(1); }
};

/// Stand-alone image classifier with the content encoder's architecture.
template <class T>
class BasicContentClassifier {
public:
    BasicContentClassifier(const NetConfig& cfg, std::uint64_t seed);
    BasicContentClassifier(const BasicContentClassifier&) = delete;
    BasicContentClassifier& operator=(const BasicContentClassifier&) = delete;

    BasicTensor<T> forward(const BasicTensor<T>& images, Mode mode) const;
    std::vector<std::pair<std::string, BasicTensor<T>>> parameters() const;
    std::vector<std::pair<std::string, BasicTensor<T>>> buffers() const;

private:
    NetConfig config_;
    std::mt19937_64 init_rng_;
    Trunk<T> trunk_;
    ContentHead<T> head_;
};

enum class ParamGroup {
    encoders,       // E_L, E_H^c, both style heads
    generators,     // G_A, G_B
    discriminators, // D^c, D_A^s, D_B^s
    classifier,     // E_L, E_H^c
    model,          // encoders + generators
    all
};

struct LayerInfo {
    std::string network;
    std::string layer;
    std::string kind;
    std::size_t out_channels;
    std::size_t parameters;
};

/// The full set of CDAAE networks. E_L is a single instance: the content
/// path and both style paths read the same parameters.
template <class T>
class BasicNetworkSet {
public:
    using Entry = std::pair<std::string, BasicTensor<T>>;

    BasicNetworkSet(NetConfig cfg, std::uint64_t seed);
    BasicNetworkSet(const BasicNetworkSet&) = delete;
    BasicNetworkSet& operator=(const BasicNetworkSet&) = delete;

    const NetConfig& config() const { return config_; }
    const PriorSpec& prior() const { return config_.prior; }

    BasicTensor<T> trunk_features(const BasicTensor<T>& images, Mode mode) const;
    BasicTensor<T> content_from_features(const BasicTensor<T>& features, Mode mode) const;
    BasicTensor<T> style_from_features(const BasicTensor<T>& features, Domain d, Mode mode) const;

    /// N×K content probabilities.
    BasicTensor<T> encode_content(const BasicTensor<T>& images, Mode mode) const;
    /// N×style_dim(d) style codes.
    BasicTensor<T> encode_style(const BasicTensor<T>& images, Domain d, Mode mode) const;

    BasicTensor<T> generate(const LatentCode<T>& code, Mode mode) const;
    BasicTensor<T> generate(const BasicTensor<T>& code, Domain d, Mode mode) const;

    /// Content of `images` rendered in `target` with either the supplied
    /// style rows or fresh prior draws.
    BasicTensor<T> transform(const BasicTensor<T>& images, Domain target, const std::optional<BasicTensor<T>>& style,
                             std::mt19937_64& rng, Mode mode) const;

    /// N×1 probabilities that the codes came from the prior.
    BasicTensor<T> discriminate(const BasicTensor<T>& codes, Critic which) const;

    std::vector<Entry> parameters(ParamGroup group) const;
    std::vector<Entry> buffers() const;
    void zero_grad();

    std::unique_ptr<BasicNetworkSet> clone() const;
    void copy_values_from(const BasicNetworkSet& other);

    std::vector<LayerInfo> describe() const;

private:
    std::vector<const ParameterStore<T>*> stores(ParamGroup group) const;

    NetConfig config_;
    std::mt19937_64 init_rng_;
    Trunk<T> trunk_;
    ContentHead<T> content_;
    StyleHead<T> style_a_, style_b_;
    Generator<T> gen_a_, gen_b_;
    Discriminator<T> disc_c_, disc_a_, disc_b_;
};

using NetworkSet = BasicNetworkSet<float>;
using ContentClassifier = BasicContentClassifier<float>;

/// Rejects anything but N×3×32×32.
template <class T>
void check_image_batch(const BasicTensor<T>& images);

} // namespace cdaae
