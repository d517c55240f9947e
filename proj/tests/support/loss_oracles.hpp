#pragma once

// Per-sample re-summations of the CDAAE losses. Each sample goes through
// the networks on its own (eval mode, so batch norm does not couple rows)
// and the terms are accumulated with plain scalar arithmetic.

#include "cdaae/datasets.hpp"
#include "cdaae/nets.hpp"
#include "cdaae/objectives.hpp"
#include "cdaae/ops.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <span>
#include <vector>

namespace cdaae::testing {

using DNets = BasicNetworkSet<double>;
using DBatch = BasicDomainBatch<double>;

inline double clipped_log(double x)
{
    return std::log(std::clamp(x, kLogEpsilon, 1.0));
}

inline BasicTensor<double> row(const BasicTensor<double>& t, std::size_t i)
{
    return slice_rows(t, i, i + 1);
}

inline std::vector<double> row_values(const BasicTensor<double>& t)
{
    return {t.values().begin(), t.values().end()};
}

// −Σ target·log(clamp(pred))
inline double naive_ce(std::span<const double> target, std::span<const double> pred)
{
    double s = 0.0;
    for (std::size_t k = 0; k < target.size(); ++k) s -= target[k] * clipped_log(pred[k]);
    return s;
}

inline double naive_ce_label(std::span<const double> pred, int label)
{
    return -clipped_log(pred[static_cast<std::size_t>(label)]);
}

inline double mean_of(const std::vector<double>& v)
{
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

inline double disc_one(const DNets& nets, const BasicTensor<double>& code, Critic c)
{
    return nets.discriminate(code, c).item();
}

// Style adversarial objective.
inline double oracle_adv_style(const DNets& nets, const DBatch& a, const DBatch& b, const BasicTensor<double>& za,
                               const BasicTensor<double>& zb, const LossWeights& w)
{
    std::vector<double> t1, t2, t3, t4;
    for (std::size_t i = 0; i < a.size(); ++i)
        t1.push_back(clipped_log(1.0 - disc_one(nets, nets.encode_style(row(a.images, i), Domain::A, Mode::eval),
                                                 Critic::style_a)));
    for (std::size_t i = 0; i < b.size(); ++i)
        t2.push_back(clipped_log(1.0 - disc_one(nets, nets.encode_style(row(b.images, i), Domain::B, Mode::eval),
                                                 Critic::style_b)));
    for (std::size_t i = 0; i < za.dim(0); ++i) t3.push_back(clipped_log(disc_one(nets, row(za, i), Critic::style_a)));
    for (std::size_t i = 0; i < zb.dim(0); ++i) t4.push_back(clipped_log(disc_one(nets, row(zb, i), Critic::style_b)));
    return w.alpha1 * mean_of(t1) + w.alpha2 * mean_of(t2) + w.alpha3 * mean_of(t3) + w.alpha4 * mean_of(t4);
}

// Content adversarial objective.
inline double oracle_adv_content(const DNets& nets, const DBatch& a, const DBatch& b, const BasicTensor<double>& zc,
                                 const LossWeights& w)
{
    std::vector<double> t1, t2, t3;
    for (std::size_t i = 0; i < a.size(); ++i)
        t1.push_back(clipped_log(1.0 - disc_one(nets, nets.encode_content(row(a.images, i), Mode::eval),
                                                 Critic::content)));
    for (std::size_t i = 0; i < b.size(); ++i)
        t2.push_back(clipped_log(1.0 - disc_one(nets, nets.encode_content(row(b.images, i), Mode::eval),
                                                 Critic::content)));
    for (std::size_t i = 0; i < zc.dim(0); ++i) t3.push_back(clipped_log(disc_one(nets, row(zc, i), Critic::content)));
    return w.beta1 * mean_of(t1) + w.beta2 * mean_of(t2) + w.beta3 * mean_of(t3);
}

// Reconstruction with d = per-pixel mean squared error.
inline double oracle_reconstruction(const DNets& nets, const DBatch& a, const DBatch& b, const LossWeights& w)
{
    auto domain_term = [&](const DBatch& batch, Domain d) {
        std::vector<double> per;
        for (std::size_t i = 0; i < batch.size(); ++i) {
            auto x = row(batch.images, i);
            auto code = concat_columns(nets.encode_content(x, Mode::eval), nets.encode_style(x, d, Mode::eval));
            auto r = row_values(nets.generate(code, d, Mode::eval));
            auto xv = row_values(x);
            double s = 0.0;
            for (std::size_t k = 0; k < xv.size(); ++k) s += (xv[k] - r[k]) * (xv[k] - r[k]);
            per.push_back(s / static_cast<double>(xv.size()));
        }
        return mean_of(per);
    };
    return w.gamma1 * domain_term(a, Domain::A) + w.gamma2 * domain_term(b, Domain::B);
}

// Supervised cross-entropy.
inline double oracle_supervised(const DNets& nets, const DBatch& a, const DBatch& b, const LossWeights& w)
{
    auto domain_term = [&](const DBatch& batch) {
        std::vector<double> per;
        for (std::size_t i = 0; i < batch.size(); ++i)
            per.push_back(naive_ce_label(row_values(nets.encode_content(row(batch.images, i), Mode::eval)),
                                         (*batch.labels)[i]));
        return mean_of(per);
    };
    return w.lambda1 * domain_term(a) + w.lambda2 * domain_term(b);
}

// Content codes of the originals and of their cross-domain renderings, with
// the prior styles drawn in the library's documented order (B styles for
// the A batch first, then A styles for the B batch).
struct CrossCodes {
    std::vector<std::vector<double>> ca, cb, ca2b, cb2a;
};

inline CrossCodes cross_codes(const DNets& nets, const DBatch& a, const DBatch& b, std::mt19937_64& rng)
{
    const auto& prior = nets.prior();
    auto zb = prior.sample_style<double>(a.size(), Domain::B, rng);
    auto za = prior.sample_style<double>(b.size(), Domain::A, rng);
    CrossCodes out;
    for (std::size_t i = 0; i < a.size(); ++i) {
        auto c = nets.encode_content(row(a.images, i), Mode::eval);
        auto img = nets.generate(concat_columns(c, row(zb, i)), Domain::B, Mode::eval);
        out.ca.push_back(row_values(c));
        out.ca2b.push_back(row_values(nets.encode_content(img, Mode::eval)));
    }
    for (std::size_t i = 0; i < b.size(); ++i) {
        auto c = nets.encode_content(row(b.images, i), Mode::eval);
        auto img = nets.generate(concat_columns(c, row(za, i)), Domain::A, Mode::eval);
        out.cb.push_back(row_values(c));
        out.cb2a.push_back(row_values(nets.encode_content(img, Mode::eval)));
    }
    return out;
}

// Consistency against the original's soft code.
inline double oracle_cc_unsupervised(const DNets& nets, const DBatch& a, const DBatch& b, const LossWeights& w,
                                     std::mt19937_64& rng)
{
    auto codes = cross_codes(nets, a, b, rng);
    std::vector<double> t1, t2;
    for (std::size_t i = 0; i < codes.ca.size(); ++i) t1.push_back(naive_ce(codes.ca[i], codes.ca2b[i]));
    for (std::size_t i = 0; i < codes.cb.size(); ++i) t2.push_back(naive_ce(codes.cb[i], codes.cb2a[i]));
    return w.eta1 * mean_of(t1) + w.eta2 * mean_of(t2);
}

// Consistency against the labels.
inline double oracle_cc_supervised(const DNets& nets, const DBatch& a, const DBatch& b, const LossWeights& w,
                                   std::mt19937_64& rng)
{
    auto codes = cross_codes(nets, a, b, rng);
    std::vector<double> t1, t2;
    for (std::size_t i = 0; i < codes.ca.size(); ++i) t1.push_back(naive_ce_label(codes.ca2b[i], (*a.labels)[i]));
    for (std::size_t i = 0; i < codes.cb.size(); ++i) t2.push_back(naive_ce_label(codes.cb2a[i], (*b.labels)[i]));
    return w.eta1 * mean_of(t1) + w.eta2 * mean_of(t2);
}

// Labeled A, unlabeled B.
inline double oracle_cc_mixed(const DNets& nets, const DBatch& a, const DBatch& b, const LossWeights& w,
                              std::mt19937_64& rng)
{
    auto codes = cross_codes(nets, a, b, rng);
    std::vector<double> t1, t2;
    for (std::size_t i = 0; i < codes.ca.size(); ++i) t1.push_back(naive_ce_label(codes.ca2b[i], (*a.labels)[i]));
    for (std::size_t i = 0; i < codes.cb.size(); ++i) t2.push_back(naive_ce(codes.cb[i], codes.cb2a[i]));
    return w.eta1 * mean_of(t1) + w.eta2 * mean_of(t2);
}

// Zeroes the output layer of every discriminator so each one answers 0.5.
inline void flatten_discriminators(DNets& nets)
{
    for (auto& [name, p] : nets.parameters(ParamGroup::discriminators))
        if (name.find(".fc4.") != std::string::npos)
            for (auto& v : p.mutable_values()) v = 0.0;
}

// Zeroes the content classifier layer so every content code is uniform.
inline void flatten_content_head(DNets& nets)
{
    for (auto& [name, p] : nets.parameters(ParamGroup::encoders))
        if (name.rfind("E_H_c.fc.", 0) == 0)
            for (auto& v : p.mutable_values()) v = 0.0;
}

inline DBatch random_batch(std::size_t n, Domain d, std::size_t categories, std::mt19937_64& rng, bool labeled = true)
{
    const Shape shape{n, kImageChannels, kImageSize, kImageSize};
    std::uniform_real_distribution<double> pix(-1.0, 1.0);
    std::vector<double> v(element_count(shape));
    for (auto& x : v) x = pix(rng);
    DBatch b;
    b.images = BasicTensor<double>(shape, std::move(v));
    b.domain = d;
    if (labeled) {
        std::uniform_int_distribution<int> lab(0, static_cast<int>(categories) - 1);
        b.labels.emplace();
        for (std::size_t i = 0; i < n; ++i) b.labels->push_back(lab(rng));
    }
    for (std::size_t i = 0; i < n; ++i) b.indices.push_back(i);
    return b;
}

struct OracleComparison {
    const char* term;
    double library;
    double oracle;
};

// Library value vs re-summation for every loss on one random instance. All weights are drawn at random so every term
// participates.
inline std::vector<OracleComparison> compare_losses(std::uint64_t seed)
{
    std::mt19937_64 rng(seed);
    NetConfig cfg;
    cfg.width = 1.0 / 16.0;
    DNets nets(cfg, seed + 1000);
    std::uniform_int_distribution<std::size_t> size(2, 4);
    auto a = random_batch(size(rng), Domain::A, cfg.prior.categories, rng);
    auto b = random_batch(size(rng), Domain::B, cfg.prior.categories, rng);
    std::uniform_real_distribution<double> wd(0.1, 2.0);
    LossWeights w;
    for (double* p : {&w.alpha1, &w.alpha2, &w.alpha3, &w.alpha4, &w.beta1, &w.beta2, &w.beta3, &w.gamma1, &w.gamma2,
                      &w.lambda1, &w.lambda2, &w.eta1, &w.eta2})
        *p = wd(rng);
    const auto& prior = nets.prior();
    auto za = prior.sample_style<double>(size(rng), Domain::A, rng);
    auto zb = prior.sample_style<double>(size(rng), Domain::B, rng);
    auto zc = prior.sample_content<double>(size(rng), rng);
    const std::uint64_t draw_seed = rng();

    std::vector<OracleComparison> out;
    out.push_back({"adv_style", adv_style_loss(a, b, za, zb, nets, w, Mode::eval).item(),
                   oracle_adv_style(nets, a, b, za, zb, w)});
    out.push_back({"adv_content", adv_content_loss(a, b, zc, nets, w, Mode::eval).item(),
                   oracle_adv_content(nets, a, b, zc, w)});
    out.push_back({"reconstruction", reconstruction_loss(a, b, nets, w, Mode::eval).item(), oracle_reconstruction(nets, a, b, w)});
    out.push_back({"supervised", supervised_loss(a, b, nets, w, Mode::eval).item(), oracle_supervised(nets, a, b, w)});
    {
        std::mt19937_64 r1(draw_seed), r2(draw_seed);
        out.push_back({"cc_unsupervised", cc_unsupervised(a, b, nets, w, r1, Mode::eval).item(),
                       oracle_cc_unsupervised(nets, a, b, w, r2)});
    }
    {
        std::mt19937_64 r1(draw_seed), r2(draw_seed);
        out.push_back({"cc_supervised", cc_supervised(a, b, nets, w, r1, Mode::eval).item(),
                       oracle_cc_supervised(nets, a, b, w, r2)});
    }
    {
        std::mt19937_64 r1(draw_seed), r2(draw_seed);
        out.push_back({"cc_mixed", cc_mixed(a, b, nets, w, r1, Mode::eval).item(), oracle_cc_mixed(nets, a, b, w, r2)});
    }
    return out;
}

} // namespace cdaae::testing
