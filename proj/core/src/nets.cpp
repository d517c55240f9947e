#include "cdaae/nets.hpp"

#include "cdaae/ops.hpp"

#include <cmath>
#include <stdexcept>

namespace cdaae {

std::string_view to_string(Domain d)
{
    return d == Domain::A ? "A" : "B";
}

Domain other(Domain d)
{
    return d == Domain::A ? Domain::B : Domain::A;
}

void PriorSpec::validate() const
{
    if (categories < 2) throw std::invalid_argument("content categories must be at least 2");
    if (style_dim_a < 1 || style_dim_b < 1) throw std::invalid_argument("style dimensions must be at least 1");
}

template <class T>
BasicTensor<T> PriorSpec::sample_content(std::size_t n, std::mt19937_64& rng) const
{
    std::uniform_int_distribution<std::size_t> pick(0, categories - 1);
    std::vector<T> v(n * categories, T(0));
    for (std::size_t i = 0; i < n; ++i) v[i * categories + pick(rng)] = T(1);
    return BasicTensor<T>({n, categories}, std::move(v));
}

template <class T>
BasicTensor<T> PriorSpec::sample_style(std::size_t n, Domain d, std::mt19937_64& rng) const
{
    const std::size_t dim = style_dim(d);
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::vector<T> v(n * dim);
    for (auto& x : v) x = static_cast<T>(gauss(rng));
    return BasicTensor<T>({n, dim}, std::move(v));
}

template <class T>
BasicTensor<T> LatentCode<T>::concatenated() const
{
    if (content.rank() != 2 || style.rank() != 2 || content.dim(0) != style.dim(0))
        throw DimensionError("latent code parts disagree: content " + to_string(content.shape()) + ", style " +
                             to_string(style.shape()));
    const std::size_t k = content.dim(1);
    for (std::size_t i = 0; i < content.dim(0); ++i) {
        double row = 0.0;
        for (std::size_t j = 0; j < k; ++j) {
            const T v = content[i * k + j];
            if (v < T(0)) throw std::domain_error("content code has a negative entry");
            row += v;
        }
        if (std::abs(row - 1.0) > 1e-4) throw std::domain_error("content code row does not sum to 1");
    }
    return concat_columns(content, style);
}

std::size_t NetConfig::scaled(std::size_t base) const
{
    const auto v = static_cast<long>(std::lround(static_cast<double>(base) * width));
    return static_cast<std::size_t>(std::max(1L, v));
}

template <class T>
void check_image_batch(const BasicTensor<T>& images)
{
    if (!images.defined() || images.rank() != 4 || images.dim(1) != kImageChannels || images.dim(2) != kImageSize ||
        images.dim(3) != kImageSize)
        throw DimensionError("expected images shaped N×3×32×32, got " +
                             (images.defined() ? to_string(images.shape()) : std::string("undefined")));
}

template <class T>
Trunk<T>::Trunk(const NetConfig& cfg, const std::string& name, std::mt19937_64& rng)
{
    const auto c1 = cfg.scaled(64), c2 = cfg.scaled(128);
    conv1 = Conv2dLayer<T>(store, name + ".conv1", kImageChannels, c1, 4, 2, 1, false, rng);
    bn1 = BatchNormLayer<T>(store, name + ".bn1", c1);
    conv2 = Conv2dLayer<T>(store, name + ".conv2", c1, c2, 4, 2, 1, false, rng);
    bn2 = BatchNormLayer<T>(store, name + ".bn2", c2);
}

template <class T>
BasicTensor<T> Trunk<T>::forward(const BasicTensor<T>& images, Mode mode) const
{
    check_image_batch(images);
    auto h = relu(bn1.forward(conv1.forward(images), mode));
    return relu(bn2.forward(conv2.forward(h), mode));
}

template <class T>
ContentHead<T>::ContentHead(const NetConfig& cfg, const std::string& name, std::mt19937_64& rng)
{
    const auto c2 = cfg.scaled(128), c3 = cfg.scaled(256), c4 = cfg.scaled(128);
    conv3 = Conv2dLayer<T>(store, name + ".conv3", c2, c3, 4, 2, 1, false, rng);
    bn3 = BatchNormLayer<T>(store, name + ".bn3", c3);
    conv4 = Conv2dLayer<T>(store, name + ".conv4", c3, c4, 4, 1, 0, false, rng);
    bn4 = BatchNormLayer<T>(store, name + ".bn4", c4);
    classify = DenseLayer<T>(store, name + ".fc", c4, cfg.prior.categories, rng);
}

template <class T>
BasicTensor<T> ContentHead<T>::forward(const BasicTensor<T>& features, Mode mode) const
{
    auto h = relu(bn3.forward(conv3.forward(features), mode));
    h = relu(bn4.forward(conv4.forward(h), mode));
    h = reshape(h, {h.dim(0), h.dim(1)});
    return softmax(classify.forward(h));
}

template <class T>
StyleHead<T>::StyleHead(const NetConfig& cfg, const std::string& name, std::size_t style_dim, std::mt19937_64& rng)
{
    const auto c2 = cfg.scaled(128), s1 = cfg.scaled(128), s2 = cfg.scaled(256);
    conv1 = Conv2dLayer<T>(store, name + ".conv1", c2, s1, 4, 2, 1, false, rng);
    bn1 = BatchNormLayer<T>(store, name + ".bn1", s1);
    conv2 = Conv2dLayer<T>(store, name + ".conv2", s1, s2, 4, 1, 0, false, rng);
    bn2 = BatchNormLayer<T>(store, name + ".bn2", s2);
    project = Conv2dLayer<T>(store, name + ".conv3", s2, style_dim, 1, 1, 0, true, rng);
}

template <class T>
BasicTensor<T> StyleHead<T>::forward(const BasicTensor<T>& features, Mode mode) const
{
    auto h = relu(bn1.forward(conv1.forward(features), mode));
    h = relu(bn2.forward(conv2.forward(h), mode));
    h = project.forward(h);
    return reshape(h, {h.dim(0), h.dim(1)});
}

template <class T>
Generator<T>::Generator(const NetConfig& cfg, const std::string& name, std::size_t code_dim_, std::mt19937_64& rng)
    : code_dim(code_dim_)
{
    const auto g1 = cfg.scaled(256), g2 = cfg.scaled(128), g3 = cfg.scaled(64);
    up1 = ConvTranspose2dLayer<T>(store, name + ".up1", code_dim, g1, 4, 1, 0, false, rng);
    bn1 = BatchNormLayer<T>(store, name + ".bn1", g1);
    up2 = ConvTranspose2dLayer<T>(store, name + ".up2", g1, g2, 4, 2, 1, false, rng);
    bn2 = BatchNormLayer<T>(store, name + ".bn2", g2);
    up3 = ConvTranspose2dLayer<T>(store, name + ".up3", g2, g3, 4, 2, 1, false, rng);
    bn3 = BatchNormLayer<T>(store, name + ".bn3", g3);
    up4 = ConvTranspose2dLayer<T>(store, name + ".up4", g3, kImageChannels, 4, 2, 1, true, rng);
}

template <class T>
BasicTensor<T> Generator<T>::forward(const BasicTensor<T>& codes, Mode mode) const
{
    if (codes.rank() != 2 || codes.dim(1) != code_dim)
        throw DimensionError("generator expects N×" + std::to_string(code_dim) + " codes, got " +
                             to_string(codes.shape()));
    auto h = reshape(codes, {codes.dim(0), code_dim, 1, 1});
    h = relu(bn1.forward(up1.forward(h), mode));
    h = relu(bn2.forward(up2.forward(h), mode));
    h = relu(bn3.forward(up3.forward(h), mode));
    return tanh(up4.forward(h));
}

template <class T>
Discriminator<T>::Discriminator(const NetConfig& cfg, const std::string& name, std::size_t input_dim,
                                std::mt19937_64& rng)
{
    const auto d1 = cfg.scaled(512), d2 = cfg.scaled(256), d3 = cfg.scaled(128);
    fc1 = DenseLayer<T>(store, name + ".fc1", input_dim, d1, rng);
    fc2 = DenseLayer<T>(store, name + ".fc2", d1, d2, rng);
    fc3 = DenseLayer<T>(store, name + ".fc3", d2, d3, rng);
    fc4 = DenseLayer<T>(store, name + ".fc4", d3, 1, rng);
}

template <class T>
BasicTensor<T> Discriminator<T>::forward(const BasicTensor<T>& codes) const
{
    if (codes.rank() != 2 || codes.dim(1) != input_dim())
        throw DimensionError("discriminator expects N×" + std::to_string(input_dim()) + " codes, got " +
                             to_string(codes.shape()));
    auto h = relu(fc1.forward(codes));
    h = relu(fc2.forward(h));
    h = relu(fc3.forward(h));
    return sigmoid(fc4.forward(h));
}

template <class T>
BasicContentClassifier<T>::BasicContentClassifier(const NetConfig& cfg, std::uint64_t seed)
    : config_(cfg), init_rng_(seed), trunk_(cfg, "C_L", init_rng_), head_(cfg, "C_H", init_rng_)
{
    config_.prior.validate();
}

template <class T>
BasicTensor<T> BasicContentClassifier<T>::forward(const BasicTensor<T>& images, Mode mode) const
{
    return head_.forward(trunk_.forward(images, mode), mode);
}

template <class T>
std::vector<std::pair<std::string, BasicTensor<T>>> BasicContentClassifier<T>::parameters() const
{
    auto out = trunk_.store.parameters();
    for (const auto& e : head_.store.parameters()) out.push_back(e);
    return out;
}

template <class T>
std::vector<std::pair<std::string, BasicTensor<T>>> BasicContentClassifier<T>::buffers() const
{
    auto out = trunk_.store.buffers();
    for (const auto& e : head_.store.buffers()) out.push_back(e);
    return out;
}

template <class T>
BasicNetworkSet<T>::BasicNetworkSet(NetConfig cfg, std::uint64_t seed)
    : config_((cfg.prior.validate(), cfg)),
      init_rng_(seed),
      trunk_(config_, "E_L", init_rng_),
      content_(config_, "E_H_c", init_rng_),
      style_a_(config_, "E_A_H_s", config_.prior.style_dim_a, init_rng_),
      style_b_(config_, "E_B_H_s", config_.prior.style_dim_b, init_rng_),
      gen_a_(config_, "G_A", config_.prior.code_dim(Domain::A), init_rng_),
      gen_b_(config_, "G_B", config_.prior.code_dim(Domain::B), init_rng_),
      disc_c_(config_, "D_c", config_.prior.categories, init_rng_),
      disc_a_(config_, "D_A_s", config_.prior.style_dim_a, init_rng_),
      disc_b_(config_, "D_B_s", config_.prior.style_dim_b, init_rng_)
{
    if (!(config_.width > 0.0) || !std::isfinite(config_.width))
        throw std::invalid_argument("width multiplier must be positive");
}

template <class T>
BasicTensor<T> BasicNetworkSet<T>::trunk_features(const BasicTensor<T>& images, Mode mode) const
{
    return trunk_.forward(images, mode);
}

template <class T>
BasicTensor<T> BasicNetworkSet<T>::content_from_features(const BasicTensor<T>& features, Mode mode) const
{
    return content_.forward(features, mode);
}

template <class T>
BasicTensor<T> BasicNetworkSet<T>::style_from_features(const BasicTensor<T>& features, Domain d, Mode mode) const
{
    return d == Domain::A ? style_a_.forward(features, mode) : style_b_.forward(features, mode);
}

template <class T>
BasicTensor<T> BasicNetworkSet<T>::encode_content(const BasicTensor<T>& images, Mode mode) const
{
    return content_from_features(trunk_features(images, mode), mode);
}

template <class T>
BasicTensor<T> BasicNetworkSet<T>::encode_style(const BasicTensor<T>& images, Domain d, Mode mode) const
{
    return style_from_features(trunk_features(images, mode), d, mode);
}

template <class T>
BasicTensor<T> BasicNetworkSet<T>::generate(const LatentCode<T>& code, Mode mode) const
{
    if (code.content.dim(1) != config_.prior.categories || code.style.dim(1) != config_.prior.style_dim(code.domain))
        throw DimensionError("latent code for domain " + std::string(to_string(code.domain)) + " must be " +
                             std::to_string(config_.prior.categories) + "+" +
                             std::to_string(config_.prior.style_dim(code.domain)) + " wide");
    return generate(code.concatenated(), code.domain, mode);
}

template <class T>
BasicTensor<T> BasicNetworkSet<T>::generate(const BasicTensor<T>& code, Domain d, Mode mode) const
{
    return d == Domain::A ? gen_a_.forward(code, mode) : gen_b_.forward(code, mode);
}

template <class T>
BasicTensor<T> BasicNetworkSet<T>::transform(const BasicTensor<T>& images, Domain target,
                                             const std::optional<BasicTensor<T>>& style, std::mt19937_64& rng,
                                             Mode mode) const
{
    auto content = encode_content(images, mode);
    const std::size_t n = content.dim(0);
    BasicTensor<T> s;
    if (style) {
        if (style->rank() != 2 || style->dim(0) != n || style->dim(1) != config_.prior.style_dim(target))
            throw DimensionError("style for domain " + std::string(to_string(target)) + " must be " +
                                 std::to_string(n) + "×" + std::to_string(config_.prior.style_dim(target)) +
                                 ", got " + to_string(style->shape()));
        s = *style;
    } else {
        s = config_.prior.template sample_style<T>(n, target, rng);
    }
    return generate(LatentCode<T>{content, s, target}, mode);
}

template <class T>
BasicTensor<T> BasicNetworkSet<T>::discriminate(const BasicTensor<T>& codes, Critic which) const
{
    switch (which) {
    case Critic::content: return disc_c_.forward(codes);
    case Critic::style_a: return disc_a_.forward(codes);
    case Critic::style_b: return disc_b_.forward(codes);
    }
    throw std::invalid_argument("unknown critic");
}

template <class T>
std::vector<const ParameterStore<T>*> BasicNetworkSet<T>::stores(ParamGroup group) const
{
    switch (group) {
    case ParamGroup::encoders: return {&trunk_.store, &content_.store, &style_a_.store, &style_b_.store};
    case ParamGroup::generators: return {&gen_a_.store, &gen_b_.store};
    case ParamGroup::discriminators: return {&disc_c_.store, &disc_a_.store, &disc_b_.store};
    case ParamGroup::classifier: return {&trunk_.store, &content_.store};
    case ParamGroup::model:
        return {&trunk_.store, &content_.store, &style_a_.store, &style_b_.store, &gen_a_.store, &gen_b_.store};
    case ParamGroup::all:
        return {&trunk_.store, &content_.store, &style_a_.store, &style_b_.store, &gen_a_.store,
                &gen_b_.store, &disc_c_.store, &disc_a_.store, &disc_b_.store};
    }
    return {};
}

template <class T>
std::vector<typename BasicNetworkSet<T>::Entry> BasicNetworkSet<T>::parameters(ParamGroup group) const
{
    std::vector<Entry> out;
    for (const auto* s : stores(group))
        for (const auto& e : s->parameters()) out.push_back(e);
    return out;
}

template <class T>
std::vector<typename BasicNetworkSet<T>::Entry> BasicNetworkSet<T>::buffers() const
{
    std::vector<Entry> out;
    for (const auto* s : stores(ParamGroup::all))
        for (const auto& e : s->buffers()) out.push_back(e);
    return out;
}

template <class T>
void BasicNetworkSet<T>::zero_grad()
{
    for (auto& [name, p] : parameters(ParamGroup::all)) p.zero_grad();
}

template <class T>
std::unique_ptr<BasicNetworkSet<T>> BasicNetworkSet<T>::clone() const
{
    auto copy = std::make_unique<BasicNetworkSet<T>>(config_, 0);
    copy->copy_values_from(*this);
    return copy;
}

template <class T>
void BasicNetworkSet<T>::copy_values_from(const BasicNetworkSet& src)
{
    auto dst_stores = stores(ParamGroup::all);
    auto src_stores = src.stores(ParamGroup::all);
    for (std::size_t i = 0; i < dst_stores.size(); ++i)
        const_cast<ParameterStore<T>*>(dst_stores[i])->copy_values_from(*src_stores[i]);
}

template <class T>
std::vector<LayerInfo> BasicNetworkSet<T>::describe() const
{
    std::vector<LayerInfo> out;
    auto conv = [&](const std::string& net, const std::string& layer, const Conv2dLayer<T>& l) {
        out.push_back({net, layer, "conv", l.out_channels(), l.kernel.size() + (l.bias.defined() ? l.bias.size() : 0)});
    };
    auto tconv = [&](const std::string& net, const std::string& layer, const ConvTranspose2dLayer<T>& l) {
        out.push_back(
            {net, layer, "conv_transpose", l.out_channels(), l.kernel.size() + (l.bias.defined() ? l.bias.size() : 0)});
    };
    auto fc = [&](const std::string& net, const std::string& layer, const DenseLayer<T>& l) {
        out.push_back({net, layer, "dense", l.out_features(), l.weight.size() + l.bias.size()});
    };
    conv("E_L", "conv1", trunk_.conv1);
    conv("E_L", "conv2", trunk_.conv2);
    conv("E_H_c", "conv3", content_.conv3);
    conv("E_H_c", "conv4", content_.conv4);
    fc("E_H_c", "fc", content_.classify);
    for (const auto* head : {&style_a_, &style_b_}) {
        const std::string net = head == &style_a_ ? "E_A_H_s" : "E_B_H_s";
        conv(net, "conv1", head->conv1);
        conv(net, "conv2", head->conv2);
        conv(net, "conv3", head->project);
    }
    for (const auto* g : {&gen_a_, &gen_b_}) {
        const std::string net = g == &gen_a_ ? "G_A" : "G_B";
        tconv(net, "up1", g->up1);
        tconv(net, "up2", g->up2);
        tconv(net, "up3", g->up3);
        tconv(net, "up4", g->up4);
    }
    for (const auto* d : {&disc_c_, &disc_a_, &disc_b_}) {
        const std::string net = d == &disc_c_ ? "D_c" : (d == &disc_a_ ? "D_A_s" : "D_B_s");
        fc(net, "fc1", d->fc1);
        fc(net, "fc2", d->fc2);
        fc(net, "fc3", d->fc3);
        fc(net, "fc4", d->fc4);
    }
    return out;
}

#define CDAAE_INSTANTIATE_NETS(T)                                                                                \
    template BasicTensor<T> PriorSpec::sample_content<T>(std::size_t, std::mt19937_64&) const;                  \
    template BasicTensor<T> PriorSpec::sample_style<T>(std::size_t, Domain, std::mt19937_64&) const;            \
    template struct LatentCode<T>;                                                                               \
    template void check_image_batch(const BasicTensor<T>&);                                                      \
    template struct Trunk<T>;                                                                                    \
    template struct ContentHead<T>;                                                                              \
    template struct StyleHead<T>;                                                                                \
    template struct Generator<T>;                                                                                \
    template struct Discriminator<T>;                                                                            \
    template class BasicContentClassifier<T>;                                                                    \
    template class BasicNetworkSet<T>;

CDAAE_INSTANTIATE_NETS(float)
CDAAE_INSTANTIATE_NETS(double)

#undef CDAAE_INSTANTIATE_NETS

} // namespace cdaae
