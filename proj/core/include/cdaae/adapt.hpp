#pragma once

#include "cdaae/datasets.hpp"
#include "cdaae/nets.hpp"
#include "cdaae/trainer.hpp"

#include <functional>
#include <iosfwd>
#include <memory>
#include <span>
#include <vector>

namespace cdaae {

/// Domain A is the labeled source, domain B the unlabeled target.
struct AdaptConfig {
    double t_init = 0.85;
    double w = 10000.0;
    std::size_t pretrain_steps = 500;
    std::size_t epochs = 10;
    bool boosted = false;
    TrainConfig train;

    void validate() const;
};

struct PseudoLabel {
    std::size_t index;
    int label;
    float confidence;
};

struct PseudoLabelSet {
    double threshold = 0.0;
    std::vector<PseudoLabel> items;

    std::size_t size() const { return items.size(); }
    bool empty() const { return items.empty(); }
};

/// Keeps rows whose largest probability exceeds t, labeled by argmax
/// (lowest index on ties). `probs` is N×K row-major.
PseudoLabelSet pseudo_label(std::span<const float> probs, std::size_t categories, double t);
PseudoLabelSet pseudo_label(const NetworkSet& nets, const ImageSet& target, double t);

/// t_init + (1 − t_init)(1 − exp(−i / w)).
double threshold_schedule(double t_init, double w, double i);

struct AdaptEpoch {
    std::size_t epoch;
    double threshold;
    std::size_t pseudo_labeled;
    double accuracy;
    /// Fraction of T′ whose pseudo-label matches the withheld truth; not
    /// visible to training.
    double pseudo_precision;
};

struct AdaptResult {
    std::unique_ptr<NetworkSet> nets;
    /// Target test accuracy of the pretrained, source-only encoder.
    double baseline_accuracy = 0.0;
    std::vector<AdaptEpoch> trace;

    double final_accuracy() const { return trace.empty() ? baseline_accuracy : trace.back().accuracy; }
};

/// Writes "epoch,t,pseudo_labeled,accuracy"; epoch 0 is the source-only model.
void write_trace_csv(std::ostream& os, const AdaptConfig& cfg, const AdaptResult& result);

enum class AdaptPhase { pretrain, joint, supervised };

struct AdaptHooks {
    std::function<void(AdaptPhase, std::size_t epoch, const LossReport&)> on_step;
    std::function<void(const AdaptEpoch&)> on_epoch;
};

/// One discriminator step and one encoder/generator step on the
/// adversarial terms, L_rec and L_cc^suun. Source batch must be labeled.
LossReport adapt_joint_step(NetworkSet& nets, StepContext& ctx, const DomainBatch& source, const DomainBatch& target,
                            const LossWeights& w);

AdaptResult adapt_basic(const AdaptConfig& cfg, const DatasetPair& data, const AdaptHooks& hooks = {});
AdaptResult adapt_boosted(const AdaptConfig& cfg, const DatasetPair& data, const AdaptHooks& hooks = {});

} // namespace cdaae
