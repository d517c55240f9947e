#pragma once

#include "cdaae/checkpoint.hpp"
#include "cdaae/datasets.hpp"
#include "cdaae/nets.hpp"
#include "cdaae/objectives.hpp"
#include "cdaae/optimizer.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <random>
#include <span>
#include <string>

namespace cdaae {

enum class TrainMode { supervised, semisupervised };

std::string_view to_string(TrainMode mode);
TrainMode parse_train_mode(std::string_view name);

struct TrainConfig {
    TrainMode mode = TrainMode::supervised;
    LossWeights weights;
    std::size_t batch_size = 64;
    std::size_t steps = 2000;
    double lr_model = 2e-4;
    double lr_disc = 2e-4;
    double adam_beta1 = 0.5;
    double adam_beta2 = 0.999;
    std::uint64_t seed = 1;
    /// 0 disables periodic checkpoints; the final one is always written.
    std::size_t checkpoint_every = 0;
    /// Labeled samples per class and domain in semi-supervised mode.
    std::size_t labels_per_class = 100;
    NetConfig net;

    void validate() const;
    /// β1 = β2 = 1 in semi-supervised mode, 0 otherwise; the rest as LossWeights.
    static LossWeights default_weights(TrainMode mode);

    AdamOptions model_adam() const { return {lr_model, adam_beta1, adam_beta2, 1e-8}; }
    AdamOptions disc_adam() const { return {lr_disc, adam_beta1, adam_beta2, 1e-8}; }
};

/// Separate optimizers for the two sides of the minimax game.
struct Optimizers {
    Adam<float> model; // encoders + generators
    Adam<float> disc;  // D^c, D_A^s, D_B^s

    Optimizers(const NetworkSet& nets, const TrainConfig& cfg);
};

struct StepContext {
    Optimizers& opt;
    std::mt19937_64& rng;
    /// Runs after the discriminator update and before the encoder/generator
    /// forward pass. Used by tests to observe the alternation.
    std::function<void()> between_phases;
};

/// One discriminator step then one encoder/generator step on labeled pairs.
LossReport train_step_supervised(NetworkSet& nets, StepContext& ctx, const DomainBatch& a, const DomainBatch& b,
                                 const LossWeights& w);

struct SemisupBatches {
    std::optional<DomainBatch> labeled_a, labeled_b;
    std::optional<DomainBatch> unlabeled_a, unlabeled_b;
};

/// Labeled batches feed L_sup and L_cc^su; unlabeled batches feed the
/// adversarial terms, L_rec and L_cc^un. Either pair may be absent.
LossReport train_step_semisup(NetworkSet& nets, StepContext& ctx, const SemisupBatches& batches,
                              const LossWeights& w);

/// Called with the source-set indices of every labeled batch that reaches L_sup.
using LabelAudit = std::function<void(Domain, std::span<const std::size_t>)>;

class Trainer {
public:
    Trainer(TrainConfig cfg, const DatasetPair& data);

    const TrainConfig& config() const { return cfg_; }
    std::size_t step_index() const { return step_; }
    NetworkSet& nets() { return *nets_; }
    const NetworkSet& nets() const { return *nets_; }
    Optimizers& optimizers() { return *opt_; }
    const LabelSplit& split(Domain d) const { return d == Domain::A ? split_a_ : split_b_; }

    void set_label_audit(LabelAudit audit) { audit_ = std::move(audit); }
    void set_between_phases(std::function<void()> hook) { between_ = std::move(hook); }

    /// Draws the next batches and runs one training step.
    LossReport step();

    /// `config_text` is stored verbatim in the metadata.
    Checkpoint checkpoint(const std::string& config_text = {}) const;
    void restore(const Checkpoint& ckpt);

private:
    std::vector<std::size_t> draw(std::span<const std::size_t> pool);

    TrainConfig cfg_;
    const DatasetPair& data_;
    std::unique_ptr<NetworkSet> nets_;
    std::unique_ptr<Optimizers> opt_;
    std::mt19937_64 rng_;
    std::size_t step_ = 0;
    LabelSplit split_a_, split_b_;
    std::vector<std::size_t> all_a_, all_b_;
    LabelAudit audit_;
    std::function<void()> between_;
};

/// Restores the network parameters and buffers stored in a checkpoint.
void load_network(const Checkpoint& ckpt, NetworkSet& nets);

/// Network geometry recorded in checkpoint metadata.
NetConfig checkpoint_net_config(const Checkpoint& ckpt);

/// Pulls the "config" string out of checkpoint metadata (empty if absent).
std::string checkpoint_config_text(const Checkpoint& ckpt);

struct RunOptions {
    std::filesystem::path out_dir;
    std::string config_text;
    std::optional<std::filesystem::path> resume_from;
    /// Overrides cfg.steps when set.
    std::optional<std::size_t> stop_after;
    std::function<void(std::size_t, const LossReport&)> on_step;
};

struct RunResult {
    std::size_t steps = 0;
    LossReport last;
    std::filesystem::path metrics;
    std::filesystem::path final_checkpoint;
};

/// Trains for cfg.steps steps, writing metrics.csv, periodic
/// ckpt-<step>.bin files and final.bin into out_dir. Checks that out_dir
/// is writable before the first step.
RunResult train_run(const TrainConfig& cfg, const DatasetPair& data, const RunOptions& options);

} // namespace cdaae
