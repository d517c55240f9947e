#include "cdaae/objectives.hpp"

#include "cdaae/ops.hpp"

#include <cmath>
#include <cstdio>
#include <ostream>
#include <stdexcept>

namespace cdaae {

void LossWeights::validate() const
{
    const std::pair<const char*, double> all[] = {
        {"alpha1", alpha1}, {"alpha2", alpha2}, {"alpha3", alpha3}, {"alpha4", alpha4}, {"beta1", beta1},
        {"beta2", beta2},   {"beta3", beta3},   {"gamma1", gamma1}, {"gamma2", gamma2}, {"lambda1", lambda1},
        {"lambda2", lambda2}, {"eta1", eta1},   {"eta2", eta2}};
    for (const auto& [name, v] : all)
        if (!std::isfinite(v) || v < 0.0)
            throw std::invalid_argument(std::string("loss weight ") + name + " must be finite and >= 0");
}

LossWeights LossWeights::uniform(double v)
{
    LossWeights w;
    w.alpha1 = w.alpha2 = w.alpha3 = w.alpha4 = v;
    w.beta1 = w.beta2 = w.beta3 = v;
    w.gamma1 = w.gamma2 = v;
    w.lambda1 = w.lambda2 = v;
    w.eta1 = w.eta2 = v;
    return w;
}

void LossReport::set(std::string name, double value)
{
    for (auto& [n, v] : terms_)
        if (n == name) {
            v = value;
            return;
        }
    terms_.emplace_back(std::move(name), value);
}

double LossReport::get(std::string_view name) const
{
    for (const auto& [n, v] : terms_)
        if (n == name) return v;
    throw std::out_of_range("loss report has no term " + std::string(name));
}

bool LossReport::has(std::string_view name) const
{
    for (const auto& [n, v] : terms_)
        if (n == name) return true;
    return false;
}

bool LossReport::all_finite() const
{
    for (const auto& [n, v] : terms_)
        if (!std::isfinite(v)) return false;
    return true;
}

void LossReport::write_csv(std::ostream& os, std::size_t step) const
{
    char buf[64];
    for (const auto& [n, v] : terms_) {
        std::snprintf(buf, sizeof buf, "%.9g", v);
        os << step << ',' << n << ',' << buf << '\n';
    }
}

void write_metrics_header(std::ostream& os)
{
    os << "step,term,value\n";
}

namespace {

template <class T>
void require_nonempty(const BasicTensor<T>& t, const char* what)
{
    if (!t.defined() || t.size() == 0) throw std::invalid_argument(std::string(what) + ": empty batch");
}

template <class T>
void require_nonempty(const BasicDomainBatch<T>& b, const char* what)
{
    if (b.size() == 0) throw std::invalid_argument(std::string(what) + ": empty batch from domain " +
                                                   std::string(to_string(b.domain)));
}

// Running sum of weighted scalar terms; stays an exact zero constant when
// every weight is zero.
template <class T>
class WeightedSum {
public:
    void add(double weight, const BasicTensor<T>& term)
    {
        if (weight == 0.0) return;
        auto scaled = weight == 1.0 ? term : scale(term, static_cast<T>(weight));
        total_ = total_.defined() ? cdaae::add(total_, scaled) : scaled;
    }
    BasicTensor<T> result() const { return total_.defined() ? total_ : BasicTensor<T>::scalar(T(0)); }

private:
    BasicTensor<T> total_;
};

template <class T>
BasicTensor<T> labels_target(std::span<const int> labels, const BasicTensor<T>& pred)
{
    if (labels.size() != pred.dim(0))
        throw DimensionError("got " + std::to_string(labels.size()) + " labels for " + std::to_string(pred.dim(0)) +
                             " predictions");
    return one_hot<T>(labels, pred.dim(1));
}

} // namespace

template <class T>
PairEncoding<T> encode_pair(const BasicNetworkSet<T>& nets, const BasicTensor<T>& images_a,
                            const BasicTensor<T>& images_b, Mode mode)
{
    require_nonempty(images_a, "encode_pair");
    require_nonempty(images_b, "encode_pair");
    const std::size_t na = images_a.dim(0), nb = images_b.dim(0);
    auto features = nets.trunk_features(concat_rows(images_a, images_b), mode);
    auto content = nets.content_from_features(features, mode);
    PairEncoding<T> enc;
    enc.content_a = slice_rows(content, 0, na);
    enc.content_b = slice_rows(content, na, na + nb);
    enc.style_a = nets.style_from_features(slice_rows(features, 0, na), Domain::A, mode);
    enc.style_b = nets.style_from_features(slice_rows(features, na, na + nb), Domain::B, mode);
    return enc;
}

template <class T>
std::pair<BasicTensor<T>, BasicTensor<T>> encode_content_pair(const BasicNetworkSet<T>& nets,
                                                              const BasicTensor<T>& images_a,
                                                              const BasicTensor<T>& images_b, Mode mode)
{
    const std::size_t na = images_a.dim(0), nb = images_b.dim(0);
    auto content = nets.encode_content(concat_rows(images_a, images_b), mode);
    return {slice_rows(content, 0, na), slice_rows(content, na, na + nb)};
}

template <class T>
std::pair<BasicTensor<T>, BasicTensor<T>> cross_transform(const BasicNetworkSet<T>& nets,
                                                          const BasicTensor<T>& content_a,
                                                          const BasicTensor<T>& content_b, std::mt19937_64& rng,
                                                          Mode mode)
{
    auto style_b = nets.prior().template sample_style<T>(content_a.dim(0), Domain::B, rng);
    auto style_a = nets.prior().template sample_style<T>(content_b.dim(0), Domain::A, rng);
    return {nets.generate(concat_columns(content_a, style_b), Domain::B, mode),
            nets.generate(concat_columns(content_b, style_a), Domain::A, mode)};
}

template <class T>
BasicTensor<T> adv_style_terms(const BasicNetworkSet<T>& nets, const BasicTensor<T>& style_a,
                               const BasicTensor<T>& style_b, const BasicTensor<T>& prior_a,
                               const BasicTensor<T>& prior_b, const LossWeights& w)
{
    WeightedSum<T> total;
    if (w.alpha1 != 0) {
        require_nonempty(style_a, "adv_style_loss");
        total.add(w.alpha1, mean(log1m_clipped(nets.discriminate(style_a, Critic::style_a))));
    }
    if (w.alpha2 != 0) {
        require_nonempty(style_b, "adv_style_loss");
        total.add(w.alpha2, mean(log1m_clipped(nets.discriminate(style_b, Critic::style_b))));
    }
    if (w.alpha3 != 0) {
        require_nonempty(prior_a, "adv_style_loss");
        total.add(w.alpha3, mean(log_clipped(nets.discriminate(prior_a, Critic::style_a))));
    }
    if (w.alpha4 != 0) {
        require_nonempty(prior_b, "adv_style_loss");
        total.add(w.alpha4, mean(log_clipped(nets.discriminate(prior_b, Critic::style_b))));
    }
    return total.result();
}

template <class T>
BasicTensor<T> adv_content_terms(const BasicNetworkSet<T>& nets, const BasicTensor<T>& content_a,
                                 const BasicTensor<T>& content_b, const BasicTensor<T>& prior_content,
                                 const LossWeights& w)
{
    WeightedSum<T> total;
    if (w.beta1 != 0) {
        require_nonempty(content_a, "adv_content_loss");
        total.add(w.beta1, mean(log1m_clipped(nets.discriminate(content_a, Critic::content))));
    }
    if (w.beta2 != 0) {
        require_nonempty(content_b, "adv_content_loss");
        total.add(w.beta2, mean(log1m_clipped(nets.discriminate(content_b, Critic::content))));
    }
    if (w.beta3 != 0) {
        require_nonempty(prior_content, "adv_content_loss");
        total.add(w.beta3, mean(log_clipped(nets.discriminate(prior_content, Critic::content))));
    }
    return total.result();
}

template <class T>
BasicTensor<T> encoder_adv_surrogate(const BasicNetworkSet<T>& nets, const BasicTensor<T>& style_a,
                                     const BasicTensor<T>& style_b, const BasicTensor<T>& content_a,
                                     const BasicTensor<T>& content_b, const LossWeights& w)
{
    WeightedSum<T> total;
    if (w.alpha1 != 0) total.add(-w.alpha1, mean(log_clipped(nets.discriminate(style_a, Critic::style_a))));
    if (w.alpha2 != 0) total.add(-w.alpha2, mean(log_clipped(nets.discriminate(style_b, Critic::style_b))));
    if (w.beta1 != 0) total.add(-w.beta1, mean(log_clipped(nets.discriminate(content_a, Critic::content))));
    if (w.beta2 != 0) total.add(-w.beta2, mean(log_clipped(nets.discriminate(content_b, Critic::content))));
    return total.result();
}

template <class T>
BasicTensor<T> reconstruction_terms(const BasicTensor<T>& images_a, const BasicTensor<T>& recon_a,
                                    const BasicTensor<T>& images_b, const BasicTensor<T>& recon_b,
                                    const LossWeights& w)
{
    WeightedSum<T> total;
    if (w.gamma1 != 0) {
        require_nonempty(images_a, "reconstruction_loss");
        total.add(w.gamma1, mse(recon_a, images_a));
    }
    if (w.gamma2 != 0) {
        require_nonempty(images_b, "reconstruction_loss");
        total.add(w.gamma2, mse(recon_b, images_b));
    }
    return total.result();
}

template <class T>
BasicTensor<T> supervised_terms(const BasicTensor<T>& content_a, std::span<const int> labels_a,
                                const BasicTensor<T>& content_b, std::span<const int> labels_b, const LossWeights& w)
{
    WeightedSum<T> total;
    if (w.lambda1 != 0) {
        require_nonempty(content_a, "supervised_loss");
        total.add(w.lambda1, cross_entropy(content_a, labels_target(labels_a, content_a)));
    }
    if (w.lambda2 != 0) {
        require_nonempty(content_b, "supervised_loss");
        total.add(w.lambda2, cross_entropy(content_b, labels_target(labels_b, content_b)));
    }
    return total.result();
}

template <class T>
BasicTensor<T> cc_unsupervised_terms(const BasicTensor<T>& content_a, const BasicTensor<T>& content_a2b,
                                     const BasicTensor<T>& content_b, const BasicTensor<T>& content_b2a,
                                     const LossWeights& w)
{
    WeightedSum<T> total;
    if (w.eta1 != 0) {
        require_nonempty(content_a, "cc_unsupervised");
        total.add(w.eta1, cross_entropy(content_a2b, content_a.detach()));
    }
    if (w.eta2 != 0) {
        require_nonempty(content_b, "cc_unsupervised");
        total.add(w.eta2, cross_entropy(content_b2a, content_b.detach()));
    }
    return total.result();
}

template <class T>
BasicTensor<T> cc_supervised_terms(const BasicTensor<T>& content_a2b, std::span<const int> labels_a,
                                   const BasicTensor<T>& content_b2a, std::span<const int> labels_b,
                                   const LossWeights& w)
{
    WeightedSum<T> total;
    if (w.eta1 != 0) {
        require_nonempty(content_a2b, "cc_supervised");
        total.add(w.eta1, cross_entropy(content_a2b, labels_target(labels_a, content_a2b)));
    }
    if (w.eta2 != 0) {
        require_nonempty(content_b2a, "cc_supervised");
        total.add(w.eta2, cross_entropy(content_b2a, labels_target(labels_b, content_b2a)));
    }
    return total.result();
}

template <class T>
BasicTensor<T> cc_mixed_terms(const BasicTensor<T>& content_a2b, std::span<const int> labels_a,
                              const BasicTensor<T>& content_b, const BasicTensor<T>& content_b2a,
                              const LossWeights& w)
{
    WeightedSum<T> total;
    if (w.eta1 != 0) {
        require_nonempty(content_a2b, "cc_mixed");
        total.add(w.eta1, cross_entropy(content_a2b, labels_target(labels_a, content_a2b)));
    }
    if (w.eta2 != 0) {
        require_nonempty(content_b, "cc_mixed");
        total.add(w.eta2, cross_entropy(content_b2a, content_b.detach()));
    }
    return total.result();
}

template <class T>
BasicTensor<T> adv_style_loss(const BasicDomainBatch<T>& a, const BasicDomainBatch<T>& b,
                              const BasicTensor<T>& prior_a, const BasicTensor<T>& prior_b,
                              const BasicNetworkSet<T>& nets, const LossWeights& w, Mode mode)
{
    require_nonempty(a, "adv_style_loss");
    require_nonempty(b, "adv_style_loss");
    auto enc = encode_pair(nets, a.images, b.images, mode);
    return adv_style_terms(nets, enc.style_a, enc.style_b, prior_a, prior_b, w);
}

template <class T>
BasicTensor<T> adv_content_loss(const BasicDomainBatch<T>& a, const BasicDomainBatch<T>& b,
                                const BasicTensor<T>& prior_content, const BasicNetworkSet<T>& nets,
                                const LossWeights& w, Mode mode)
{
    require_nonempty(a, "adv_content_loss");
    require_nonempty(b, "adv_content_loss");
    auto [ca, cb] = encode_content_pair(nets, a.images, b.images, mode);
    return adv_content_terms(nets, ca, cb, prior_content, w);
}

template <class T>
BasicTensor<T> reconstruction_loss(const BasicDomainBatch<T>& a, const BasicDomainBatch<T>& b,
                                   const BasicNetworkSet<T>& nets, const LossWeights& w, Mode mode)
{
    require_nonempty(a, "reconstruction_loss");
    require_nonempty(b, "reconstruction_loss");
    auto enc = encode_pair(nets, a.images, b.images, mode);
    auto ra = nets.generate(concat_columns(enc.content_a, enc.style_a), Domain::A, mode);
    auto rb = nets.generate(concat_columns(enc.content_b, enc.style_b), Domain::B, mode);
    return reconstruction_terms(a.images, ra, b.images, rb, w);
}

template <class T>
BasicTensor<T> supervised_loss(const BasicDomainBatch<T>& a, const BasicDomainBatch<T>& b,
                               const BasicNetworkSet<T>& nets, const LossWeights& w, Mode mode)
{
    require_nonempty(a, "supervised_loss");
    require_nonempty(b, "supervised_loss");
    const auto& la = a.require_labels();
    const auto& lb = b.require_labels();
    auto [ca, cb] = encode_content_pair(nets, a.images, b.images, mode);
    return supervised_terms<T>(ca, la, cb, lb, w);
}

template <class T>
BasicTensor<T> cc_unsupervised(const BasicDomainBatch<T>& a, const BasicDomainBatch<T>& b,
                               const BasicNetworkSet<T>& nets, const LossWeights& w, std::mt19937_64& rng, Mode mode)
{
    require_nonempty(a, "cc_unsupervised");
    require_nonempty(b, "cc_unsupervised");
    auto [ca, cb] = encode_content_pair(nets, a.images, b.images, mode);
    auto [a2b, b2a] = cross_transform(nets, ca, cb, rng, mode);
    auto [ca2b, cb2a] = encode_content_pair(nets, a2b, b2a, mode);
    return cc_unsupervised_terms(ca, ca2b, cb, cb2a, w);
}

template <class T>
BasicTensor<T> cc_supervised(const BasicDomainBatch<T>& a, const BasicDomainBatch<T>& b,
                             const BasicNetworkSet<T>& nets, const LossWeights& w, std::mt19937_64& rng, Mode mode)
{
    require_nonempty(a, "cc_supervised");
    require_nonempty(b, "cc_supervised");
    const auto& la = a.require_labels();
    const auto& lb = b.require_labels();
    auto [ca, cb] = encode_content_pair(nets, a.images, b.images, mode);
    auto [a2b, b2a] = cross_transform(nets, ca, cb, rng, mode);
    auto [ca2b, cb2a] = encode_content_pair(nets, a2b, b2a, mode);
    return cc_supervised_terms<T>(ca2b, la, cb2a, lb, w);
}

template <class T>
BasicTensor<T> cc_mixed(const BasicDomainBatch<T>& a, const BasicDomainBatch<T>& b, const BasicNetworkSet<T>& nets,
                        const LossWeights& w, std::mt19937_64& rng, Mode mode)
{
    require_nonempty(a, "cc_mixed");
    require_nonempty(b, "cc_mixed");
    const auto& la = a.require_labels();
    auto [ca, cb] = encode_content_pair(nets, a.images, b.images, mode);
    auto [a2b, b2a] = cross_transform(nets, ca, cb, rng, mode);
    auto [ca2b, cb2a] = encode_content_pair(nets, a2b, b2a, mode);
    return cc_mixed_terms<T>(ca2b, la, cb, cb2a, w);
}

MinimaxRoles minimax_roles()
{
    return MinimaxRoles{{ParamGroup::encoders}, {ParamGroup::discriminators}, true};
}

#define CDAAE_INSTANTIATE_OBJECTIVES(T)                                                                          \
    template PairEncoding<T> encode_pair(const BasicNetworkSet<T>&, const BasicTensor<T>&, const BasicTensor<T>&, \
                                         Mode);                                                                  \
    template std::pair<BasicTensor<T>, BasicTensor<T>> cross_transform(                                          \
        const BasicNetworkSet<T>&, const BasicTensor<T>&, const BasicTensor<T>&, std::mt19937_64&, Mode);        \
    template std::pair<BasicTensor<T>, BasicTensor<T>> encode_content_pair(                                      \
        const BasicNetworkSet<T>&, const BasicTensor<T>&, const BasicTensor<T>&, Mode);                          \
    template BasicTensor<T> adv_style_terms(const BasicNetworkSet<T>&, const BasicTensor<T>&,                    \
                                            const BasicTensor<T>&, const BasicTensor<T>&, const BasicTensor<T>&, \
                                            const LossWeights&);                                                 \
    template BasicTensor<T> adv_content_terms(const BasicNetworkSet<T>&, const BasicTensor<T>&,                  \
                                              const BasicTensor<T>&, const BasicTensor<T>&, const LossWeights&); \
    template BasicTensor<T> encoder_adv_surrogate(const BasicNetworkSet<T>&, const BasicTensor<T>&,              \
                                                  const BasicTensor<T>&, const BasicTensor<T>&,                  \
                                                  const BasicTensor<T>&, const LossWeights&);                    \
    template BasicTensor<T> reconstruction_terms(const BasicTensor<T>&, const BasicTensor<T>&,                   \
                                                 const BasicTensor<T>&, const BasicTensor<T>&,                   \
                                                 const LossWeights&);                                            \
    template BasicTensor<T> supervised_terms(const BasicTensor<T>&, std::span<const int>, const BasicTensor<T>&, \
                                             std::span<const int>, const LossWeights&);                          \
    template BasicTensor<T> cc_unsupervised_terms(const BasicTensor<T>&, const BasicTensor<T>&,                  \
                                                  const BasicTensor<T>&, const BasicTensor<T>&,                  \
                                                  const LossWeights&);                                           \
    template BasicTensor<T> cc_supervised_terms(const BasicTensor<T>&, std::span<const int>,                     \
                                                const BasicTensor<T>&, std::span<const int>, const LossWeights&); \
    template BasicTensor<T> cc_mixed_terms(const BasicTensor<T>&, std::span<const int>, const BasicTensor<T>&,   \
                                           const BasicTensor<T>&, const LossWeights&);                           \
    template BasicTensor<T> adv_style_loss(const BasicDomainBatch<T>&, const BasicDomainBatch<T>&,               \
                                           const BasicTensor<T>&, const BasicTensor<T>&,                         \
                                           const BasicNetworkSet<T>&, const LossWeights&, Mode);                 \
    template BasicTensor<T> adv_content_loss(const BasicDomainBatch<T>&, const BasicDomainBatch<T>&,             \
                                             const BasicTensor<T>&, const BasicNetworkSet<T>&,                   \
                                             const LossWeights&, Mode);                                          \
    template BasicTensor<T> reconstruction_loss(const BasicDomainBatch<T>&, const BasicDomainBatch<T>&,          \
                                                const BasicNetworkSet<T>&, const LossWeights&, Mode);            \
    template BasicTensor<T> supervised_loss(const BasicDomainBatch<T>&, const BasicDomainBatch<T>&,              \
                                            const BasicNetworkSet<T>&, const LossWeights&, Mode);                \
    template BasicTensor<T> cc_unsupervised(const BasicDomainBatch<T>&, const BasicDomainBatch<T>&,              \
                                            const BasicNetworkSet<T>&, const LossWeights&, std::mt19937_64&,     \
                                            Mode);                                                               \
    template BasicTensor<T> cc_supervised(const BasicDomainBatch<T>&, const BasicDomainBatch<T>&,                \
                                          const BasicNetworkSet<T>&, const LossWeights&, std::mt19937_64&,       \
                                          Mode);                                                                 \
    template BasicTensor<T> cc_mixed(const BasicDomainBatch<T>&, const BasicDomainBatch<T>&,                     \
                                     const BasicNetworkSet<T>&, const LossWeights&, std::mt19937_64&, Mode);

CDAAE_INSTANTIATE_OBJECTIVES(float)
CDAAE_INSTANTIATE_OBJECTIVES(double)

#undef CDAAE_INSTANTIATE_OBJECTIVES

} // namespace cdaae
