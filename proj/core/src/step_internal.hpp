#pragma once

#include "cdaae/objectives.hpp"
#include "cdaae/ops.hpp"
#include "cdaae/trainer.hpp"

namespace cdaae::detail {

inline void zero_grads(const Adam<float>& opt)
{
    for (auto [name, p] : opt.parameters()) p.zero_grad();
}

inline void accumulate(Tensor& total, const Tensor& term)
{
    total = total.defined() ? add(total, term) : term;
}

inline bool any_style_adv(const LossWeights& w)
{
    return w.alpha1 != 0 || w.alpha2 != 0 || w.alpha3 != 0 || w.alpha4 != 0;
}

inline bool any_content_adv(const LossWeights& w)
{
    return w.beta1 != 0 || w.beta2 != 0 || w.beta3 != 0;
}

inline bool any_encoder_adv(const LossWeights& w)
{
    return w.alpha1 != 0 || w.alpha2 != 0 || w.beta1 != 0 || w.beta2 != 0;
}

inline bool any_rec(const LossWeights& w) { return w.gamma1 != 0 || w.gamma2 != 0; }
inline bool any_sup(const LossWeights& w) { return w.lambda1 != 0 || w.lambda2 != 0; }
inline bool any_cc(const LossWeights& w) { return w.eta1 != 0 || w.eta2 != 0; }

inline Tensor maybe_detach(const Tensor& t)
{
    return t.defined() ? t.detach() : t;
}

// Ascent on L_adv^s + L_adv^c against detached codes.
inline void discriminator_phase(const NetworkSet& nets, StepContext& ctx, const Tensor& style_a, const Tensor& style_b,
                         const Tensor& content_a, const Tensor& content_b, std::size_t n, const LossWeights& w,
                         LossReport& report)
{
    const bool style = any_style_adv(w), content = any_content_adv(w);
    if (!style && !content) return;
    zero_grads(ctx.opt.disc);
    const auto& prior = nets.prior();
    Tensor objective;
    if (style) {
        auto za = prior.sample_style<float>(n, Domain::A, ctx.rng);
        auto zb = prior.sample_style<float>(n, Domain::B, ctx.rng);
        auto v = adv_style_terms(nets, maybe_detach(style_a), maybe_detach(style_b), za, zb, w);
        report.set("adv_style", v.item());
        accumulate(objective, v);
    }
    if (content) {
        auto zc = prior.sample_content<float>(n, ctx.rng);
        auto v = adv_content_terms(nets, maybe_detach(content_a), maybe_detach(content_b), zc, w);
        report.set("adv_content", v.item());
        accumulate(objective, v);
    }
    backward(scale(objective, -1.0f));
    ctx.opt.disc.step();
}

inline void model_phase(const Tensor& loss, StepContext& ctx)
{
    zero_grads(ctx.opt.model);
    backward(loss);
    ctx.opt.model.step();
}

} // namespace cdaae::detail
