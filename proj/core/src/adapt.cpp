#include "cdaae/adapt.hpp"

#include "cdaae/evaluate.hpp"
#include "step_internal.hpp"

#include <cmath>
#include <cstdio>
#include <ostream>
#include <stdexcept>

namespace cdaae {

using namespace detail;

void AdaptConfig::validate() const
{
    train.validate();
    if (!(t_init >= 0.0 && t_init <= 1.0)) throw std::invalid_argument("t_init must lie in [0, 1]");
    if (!std::isfinite(w) || w <= 0.0) throw std::invalid_argument("w must be finite and positive");
}

PseudoLabelSet pseudo_label(std::span<const float> probs, std::size_t categories, double t)
{
    if (categories == 0 || probs.size() % categories != 0)
        throw DimensionError("probability buffer of " + std::to_string(probs.size()) + " values is not N×" +
                             std::to_string(categories));
    PseudoLabelSet set;
    set.threshold = t;
    const std::size_t n = probs.size() / categories;
    for (std::size_t i = 0; i < n; ++i) {
        const float* row = probs.data() + i * categories;
        std::size_t best = 0;
        for (std::size_t j = 1; j < categories; ++j)
            if (row[j] > row[best]) best = j;
        if (static_cast<double>(row[best]) > t) set.items.push_back({i, static_cast<int>(best), row[best]});
    }
    return set;
}

PseudoLabelSet pseudo_label(const NetworkSet& nets, const ImageSet& target, double t)
{
    return pseudo_label(encode_content_probs(nets, target), nets.prior().categories, t);
}

double threshold_schedule(double t_init, double w, double i)
{
    if (!(i >= 0.0)) throw std::invalid_argument("epoch index must be non-negative");
    if (!(w > 0.0)) throw std::invalid_argument("w must be positive");
    return t_init + (1.0 - t_init) * -std::expm1(-i / w);
}

void write_trace_csv(std::ostream& os, const AdaptConfig& cfg, const AdaptResult& result)
{
    os << "epoch,t,pseudo_labeled,accuracy\n";
    char buf[96];
    std::snprintf(buf, sizeof buf, "0,%.9f,0,%.6f\n", cfg.t_init, result.baseline_accuracy);
    os << buf;
    for (const auto& e : result.trace) {
        std::snprintf(buf, sizeof buf, "%zu,%.9f,%zu,%.6f\n", e.epoch, e.threshold, e.pseudo_labeled, e.accuracy);
        os << buf;
    }
}

LossReport adapt_joint_step(NetworkSet& nets, StepContext& ctx, const DomainBatch& source, const DomainBatch& target,
                            const LossWeights& w)
{
    if (source.size() == 0 || target.size() == 0) throw std::invalid_argument("adaptation step needs nonempty batches");
    const auto& labels = source.require_labels();
    LossReport report;
    auto enc = encode_pair(nets, source.images, target.images, Mode::train);
    discriminator_phase(nets, ctx, enc.style_a, enc.style_b, enc.content_a, enc.content_b, source.size(), w, report);
    if (ctx.between_phases) ctx.between_phases();

    Tensor loss;
    if (any_encoder_adv(w)) {
        auto v = encoder_adv_surrogate(nets, enc.style_a, enc.style_b, enc.content_a, enc.content_b, w);
        report.set("encoder_adv", v.item());
        accumulate(loss, v);
    }
    if (any_rec(w)) {
        auto ra = nets.generate(concat_columns(enc.content_a, enc.style_a), Domain::A, Mode::train);
        auto rb = nets.generate(concat_columns(enc.content_b, enc.style_b), Domain::B, Mode::train);
        auto v = reconstruction_terms(source.images, ra, target.images, rb, w);
        report.set("rec", v.item());
        accumulate(loss, v);
    }
    if (any_cc(w)) {
        auto [a2b, b2a] = cross_transform(nets, enc.content_a, enc.content_b, ctx.rng, Mode::train);
        auto [ca2b, cb2a] = encode_content_pair(nets, a2b, b2a, Mode::train);
        auto v = cc_mixed_terms<float>(ca2b, labels, enc.content_b, cb2a, w);
        report.set("cc_suun", v.item());
        accumulate(loss, v);
    }
    if (loss.defined()) model_phase(loss, ctx);
    return report;
}

namespace {

std::vector<std::size_t> draw(std::span<const std::size_t> pool, std::size_t n, std::mt19937_64& rng)
{
    std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
    std::vector<std::size_t> out(n);
    for (auto& i : out) i = pool[pick(rng)];
    return out;
}

std::vector<std::size_t> all_indices(std::size_t n)
{
    std::vector<std::size_t> v(n);
    for (std::size_t i = 0; i < n; ++i) v[i] = i;
    return v;
}

double precision(const PseudoLabelSet& set, const ImageSet& truth)
{
    if (set.empty() || !truth.labeled()) return 0.0;
    std::size_t hit = 0;
    for (const auto& p : set.items) hit += truth.labels[p.index] == p.label;
    return static_cast<double>(hit) / static_cast<double>(set.size());
}

// λ1·CE on the source batch plus λ2·CE on pseudo-labeled target samples,
// encoded as one stacked batch; only E_L and E_H^c move.
LossReport supervised_step(NetworkSet& nets, Adam<float>& opt, const DomainBatch& source,
                           const std::optional<DomainBatch>& pseudo, const LossWeights& w)
{
    LossReport report;
    zero_grads(opt);
    Tensor loss;
    if (pseudo) {
        auto [cs, cp] = encode_content_pair(nets, source.images, pseudo->images, Mode::train);
        loss = supervised_terms<float>(cs, *source.labels, cp, *pseudo->labels, w);
    } else {
        LossWeights source_only = w;
        source_only.lambda2 = 0.0;
        auto cs = nets.encode_content(source.images, Mode::train);
        loss = supervised_terms<float>(cs, *source.labels, Tensor(), {}, source_only);
    }
    report.set("sup", loss.item());
    backward(loss);
    opt.step();
    return report;
}

AdaptResult run_adaptation(const AdaptConfig& cfg, const DatasetPair& data, bool boosted, const AdaptHooks& hooks)
{
    cfg.validate();
    const auto& tc = cfg.train;
    const auto& source = data.a.train;
    if (source.count == 0) throw std::invalid_argument("adaptation needs a nonempty source set");
    if (!source.labeled()) throw std::invalid_argument("adaptation source set must be labeled");
    if (data.b.train.count == 0) throw std::invalid_argument("adaptation needs a nonempty target set");
    if (data.categories != tc.net.prior.categories)
        throw std::invalid_argument("dataset has " + std::to_string(data.categories) + " classes, model expects " +
                                    std::to_string(tc.net.prior.categories));
    source.check_labels(data.categories);

    // The target's labels never reach training.
    const auto target_indices = all_indices(data.b.train.count);
    const ImageSet target = data.b.train.subset(target_indices, false);

    AdaptResult result;
    result.nets = std::make_unique<NetworkSet>(tc.net, tc.seed);
    auto& nets = *result.nets;
    std::mt19937_64 rng(tc.seed);
    Adam<float> classifier_opt(nets.parameters(ParamGroup::classifier), tc.model_adam());
    Optimizers opt(nets, tc);
    const auto source_indices = all_indices(source.count);
    const LossWeights& w = tc.weights;

    for (std::size_t s = 0; s < cfg.pretrain_steps; ++s) {
        auto batch = make_batch(source, draw(source_indices, tc.batch_size, rng), true);
        auto report = supervised_step(nets, classifier_opt, batch, std::nullopt, w);
        if (hooks.on_step) hooks.on_step(AdaptPhase::pretrain, 0, report);
    }
    const bool have_test = data.b.test.count > 0 && data.b.test.labeled();
    if (have_test) result.baseline_accuracy = content_accuracy(nets, data.b.test);

    const std::size_t steps_per_epoch = std::max<std::size_t>(1, std::min(source.count, target.count) / tc.batch_size);
    StepContext ctx{opt, rng, {}};
    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        const double t =
            boosted ? threshold_schedule(cfg.t_init, cfg.w, static_cast<double>(epoch - 1)) : cfg.t_init;
        const auto pseudo = pseudo_label(nets, target, t);
        std::vector<std::size_t> pseudo_pool;
        std::vector<int> pseudo_labels(target.count, -1);
        for (const auto& p : pseudo.items) {
            pseudo_pool.push_back(p.index);
            pseudo_labels[p.index] = p.label;
        }
        for (std::size_t s = 0; s < steps_per_epoch; ++s) {
            auto a = make_batch(source, draw(source_indices, tc.batch_size, rng), true);
            auto b = make_batch(target, draw(target_indices, tc.batch_size, rng), false);
            auto joint = adapt_joint_step(nets, ctx, a, b, w);
            if (hooks.on_step) hooks.on_step(AdaptPhase::joint, epoch, joint);

            std::optional<DomainBatch> pb;
            if (!pseudo_pool.empty() && w.lambda2 != 0.0) {
                pb = make_batch(target, draw(pseudo_pool, tc.batch_size, rng), false);
                pb->labels.emplace();
                for (auto i : pb->indices) pb->labels->push_back(pseudo_labels[i]);
            }
            auto sup = supervised_step(nets, classifier_opt, a, pb, w);
            if (hooks.on_step) hooks.on_step(AdaptPhase::supervised, epoch, sup);
        }
        AdaptEpoch e{epoch, t, pseudo.size(), have_test ? content_accuracy(nets, data.b.test) : 0.0,
                     precision(pseudo, data.b.train)};
        result.trace.push_back(e);
        if (hooks.on_epoch) hooks.on_epoch(e);
    }
    return result;
}

} // namespace

AdaptResult adapt_basic(const AdaptConfig& cfg, const DatasetPair& data, const AdaptHooks& hooks)
{
    return run_adaptation(cfg, data, false, hooks);
}

AdaptResult adapt_boosted(const AdaptConfig& cfg, const DatasetPair& data, const AdaptHooks& hooks)
{
    return run_adaptation(cfg, data, true, hooks);
}

} // namespace cdaae
