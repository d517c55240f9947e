#pragma once

#include "cdaae/datasets.hpp"
#include "cdaae/nets.hpp"
#include "cdaae/tensor.hpp"

#include <iosfwd>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace cdaae {

/// Term weights of the CDAAE objective. Defaults are the supervised digit
/// settings: γ1=2, γ2=0.15, λ1=5, λ2=0.5, η1=η2=0.3, β1=β2=0, rest 1.
struct LossWeights {
    double alpha1 = 1.0, alpha2 = 1.0, alpha3 = 1.0, alpha4 = 1.0;
    double beta1 = 0.0, beta2 = 0.0, beta3 = 1.0;
    double gamma1 = 2.0, gamma2 = 0.15;
    double lambda1 = 5.0, lambda2 = 0.5;
    double eta1 = 0.3, eta2 = 0.3;

    /// Throws std::invalid_argument naming the first negative or non-finite weight.
    void validate() const;
    /// Every weight set to `v`.
    static LossWeights uniform(double v);

    bool operator==(const LossWeights&) const = default;
};

/// Ordered named scalars for one training step.
class LossReport {
public:
    void set(std::string name, double value);
    double get(std::string_view name) const;
    bool has(std::string_view name) const;
    const std::vector<std::pair<std::string, double>>& terms() const { return terms_; }
    bool all_finite() const;

    /// One "step,term,value" line per term.
    void write_csv(std::ostream& os, std::size_t step) const;

    bool operator==(const LossReport&) const = default;

private:
    std::vector<std::pair<std::string, double>> terms_;
};

void write_metrics_header(std::ostream& os);

/// Content and style codes for one batch per domain. Both domains go
/// through the shared trunk as one stacked batch so batch-norm statistics
/// cover the mixture the evaluator sees.
template <class T>
struct PairEncoding {
    BasicTensor<T> content_a, content_b;
    BasicTensor<T> style_a, style_b;
};

template <class T>
PairEncoding<T> encode_pair(const BasicNetworkSet<T>& nets, const BasicTensor<T>& images_a,
                            const BasicTensor<T>& images_b, Mode mode);

/// Content codes for two stacked batches through one trunk pass.
template <class T>
std::pair<BasicTensor<T>, BasicTensor<T>> encode_content_pair(const BasicNetworkSet<T>& nets,
                                                              const BasicTensor<T>& images_a,
                                                              const BasicTensor<T>& images_b, Mode mode);

/// Renders each domain's content in the other domain with one prior style
/// draw per sample (B styles drawn first). Returns {A→B, B→A} images.
template <class T>
std::pair<BasicTensor<T>, BasicTensor<T>> cross_transform(const BasicNetworkSet<T>& nets,
                                                          const BasicTensor<T>& content_a,
                                                          const BasicTensor<T>& content_b, std::mt19937_64& rng,
                                                          Mode mode);

// ------------------------------------------------------------------------
// Terms over already-computed codes. Terms whose weight is zero are skipped
// and may be passed undefined tensors.

/// α1·E[log(1−D_A^s(s_A))] + α2·E[log(1−D_B^s(s_B))] + α3·E[log D_A^s(z_A)] + α4·E[log D_B^s(z_B)].
template <class T>
BasicTensor<T> adv_style_terms(const BasicNetworkSet<T>& nets, const BasicTensor<T>& style_a,
                               const BasicTensor<T>& style_b, const BasicTensor<T>& prior_a,
                               const BasicTensor<T>& prior_b, const LossWeights& w);

/// β1·E[log(1−D^c(c_A))] + β2·E[log(1−D^c(c_B))] + β3·E[log D^c(z^c)].
template <class T>
BasicTensor<T> adv_content_terms(const BasicNetworkSet<T>& nets, const BasicTensor<T>& content_a,
                                 const BasicTensor<T>& content_b, const BasicTensor<T>& prior_content,
                                 const LossWeights& w);

/// Encoder side of the adversarial game, non-saturating form:
/// −α1·E[log D_A^s(s_A)] − α2·E[log D_B^s(s_B)] − β1·E[log D^c(c_A)] − β2·E[log D^c(c_B)].
template <class T>
BasicTensor<T> encoder_adv_surrogate(const BasicNetworkSet<T>& nets, const BasicTensor<T>& style_a,
                                     const BasicTensor<T>& style_b, const BasicTensor<T>& content_a,
                                     const BasicTensor<T>& content_b, const LossWeights& w);

template <class T>
BasicTensor<T> reconstruction_terms(const BasicTensor<T>& images_a, const BasicTensor<T>& recon_a,
                                    const BasicTensor<T>& images_b, const BasicTensor<T>& recon_b,
                                    const LossWeights& w);

template <class T>
BasicTensor<T> supervised_terms(const BasicTensor<T>& content_a, std::span<const int> labels_a,
                                const BasicTensor<T>& content_b, std::span<const int> labels_b, const LossWeights& w);

/// η1·E[CE(c_{A→B}; target c_A)] + η2·E[CE(c_{B→A}; target c_B)], targets detached.
template <class T>
BasicTensor<T> cc_unsupervised_terms(const BasicTensor<T>& content_a, const BasicTensor<T>& content_a2b,
                                     const BasicTensor<T>& content_b, const BasicTensor<T>& content_b2a,
                                     const LossWeights& w);

template <class T>
BasicTensor<T> cc_supervised_terms(const BasicTensor<T>& content_a2b, std::span<const int> labels_a,
                                   const BasicTensor<T>& content_b2a, std::span<const int> labels_b,
                                   const LossWeights& w);

/// First term of the supervised variant plus second term of the unsupervised one.
template <class T>
BasicTensor<T> cc_mixed_terms(const BasicTensor<T>& content_a2b, std::span<const int> labels_a,
                              const BasicTensor<T>& content_b, const BasicTensor<T>& content_b2a,
                              const LossWeights& w);

// ------------------------------------------------------------------------
// Batch-level losses: encode, transform where needed, then evaluate.

template <class T>
BasicTensor<T> adv_style_loss(const BasicDomainBatch<T>& a, const BasicDomainBatch<T>& b,
                              const BasicTensor<T>& prior_a, const BasicTensor<T>& prior_b,
                              const BasicNetworkSet<T>& nets, const LossWeights& w, Mode mode);

template <class T>
BasicTensor<T> adv_content_loss(const BasicDomainBatch<T>& a, const BasicDomainBatch<T>& b,
                                const BasicTensor<T>& prior_content, const BasicNetworkSet<T>& nets,
                                const LossWeights& w, Mode mode);

template <class T>
BasicTensor<T> reconstruction_loss(const BasicDomainBatch<T>& a, const BasicDomainBatch<T>& b,
                                   const BasicNetworkSet<T>& nets, const LossWeights& w, Mode mode);

template <class T>
BasicTensor<T> supervised_loss(const BasicDomainBatch<T>& a, const BasicDomainBatch<T>& b,
                               const BasicNetworkSet<T>& nets, const LossWeights& w, Mode mode);

/// Transforms draw one prior style per sample from `rng`.
template <class T>
BasicTensor<T> cc_unsupervised(const BasicDomainBatch<T>& a, const BasicDomainBatch<T>& b,
                               const BasicNetworkSet<T>& nets, const LossWeights& w, std::mt19937_64& rng, Mode mode);

template <class T>
BasicTensor<T> cc_supervised(const BasicDomainBatch<T>& a, const BasicDomainBatch<T>& b,
                             const BasicNetworkSet<T>& nets, const LossWeights& w, std::mt19937_64& rng, Mode mode);

/// A labeled, B unlabeled; B labels, if any, are ignored.
template <class T>
BasicTensor<T> cc_mixed(const BasicDomainBatch<T>& a, const BasicDomainBatch<T>& b, const BasicNetworkSet<T>& nets,
                        const LossWeights& w, std::mt19937_64& rng, Mode mode);

/// Who optimizes the adversarial objective in which direction. Encoders
/// minimize L_adv^s + L_adv^c (through the non-saturating surrogate);
/// discriminators maximize it.
struct MinimaxRoles {
    std::vector<ParamGroup> minimizers;
    std::vector<ParamGroup> maximizers;
    bool non_saturating_minimizer = true;
};

MinimaxRoles minimax_roles();

} // namespace cdaae
