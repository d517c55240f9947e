#include "cdaae/trainer.hpp"

#include "cdaae/ops.hpp"
#include "step_internal.hpp"

#include <json.hpp>

#include <cmath>
#include <fstream>
#include <sstream>

namespace cdaae {

std::string_view to_string(TrainMode mode)
{
    return mode == TrainMode::supervised ? "supervised" : "semi-supervised";
}

TrainMode parse_train_mode(std::string_view name)
{
    if (name == "supervised") return TrainMode::supervised;
    if (name == "semi-supervised" || name == "semisupervised") return TrainMode::semisupervised;
    throw std::invalid_argument("unknown training mode '" + std::string(name) + "'");
}

LossWeights TrainConfig::default_weights(TrainMode mode)
{
    LossWeights w;
    if (mode == TrainMode::semisupervised) w.beta1 = w.beta2 = 1.0;
    return w;
}

void TrainConfig::validate() const
{
    weights.validate();
    net.prior.validate();
    if (batch_size < 2) throw std::invalid_argument("batch_size must be at least 2");
    if (steps < 1) throw std::invalid_argument("steps must be at least 1");
    auto positive = [](double v, const char* name) {
        if (!std::isfinite(v) || v <= 0.0) throw std::invalid_argument(std::string(name) + " must be positive");
    };
    positive(lr_model, "lr_model");
    positive(lr_disc, "lr_disc");
    positive(net.width, "width");
    if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0)) throw std::invalid_argument("adam_beta1 must lie in [0, 1)");
    if (!(adam_beta2 >= 0.0 && adam_beta2 < 1.0)) throw std::invalid_argument("adam_beta2 must lie in [0, 1)");
}

Optimizers::Optimizers(const NetworkSet& nets, const TrainConfig& cfg)
    : model(nets.parameters(ParamGroup::model), cfg.model_adam()),
      disc(nets.parameters(ParamGroup::discriminators), cfg.disc_adam())
{
}

namespace {

void require_pair(const std::optional<DomainBatch>& a, const std::optional<DomainBatch>& b, const char* what)
{
    if (a.has_value() != b.has_value())
        throw std::invalid_argument(std::string(what) + " batches must be given for both domains or neither");
    if (a && (a->size() == 0 || b->size() == 0)) throw std::invalid_argument(std::string(what) + " batch is empty");
}

} // namespace

using namespace detail;

LossReport train_step_supervised(NetworkSet& nets, StepContext& ctx, const DomainBatch& a, const DomainBatch& b,
                                 const LossWeights& w)
{
    if (a.size() == 0 || b.size() == 0) throw std::invalid_argument("supervised step needs nonempty batches");
    const auto& la = a.require_labels();
    const auto& lb = b.require_labels();
    LossReport report;
    auto enc = encode_pair(nets, a.images, b.images, Mode::train);

    discriminator_phase(nets, ctx, enc.style_a, enc.style_b, enc.content_a, enc.content_b, a.size(), w, report);
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
        auto v = reconstruction_terms(a.images, ra, b.images, rb, w);
        report.set("rec", v.item());
        accumulate(loss, v);
    }
    if (any_sup(w)) {
        auto v = supervised_terms<float>(enc.content_a, la, enc.content_b, lb, w);
        report.set("sup", v.item());
        accumulate(loss, v);
    }
    if (any_cc(w)) {
        auto [a2b, b2a] = cross_transform(nets, enc.content_a, enc.content_b, ctx.rng, Mode::train);
        auto [ca2b, cb2a] = encode_content_pair(nets, a2b, b2a, Mode::train);
        auto v = cc_supervised_terms<float>(ca2b, la, cb2a, lb, w);
        report.set("cc_su", v.item());
        accumulate(loss, v);
    }
    if (loss.defined()) model_phase(loss, ctx);
    return report;
}

LossReport train_step_semisup(NetworkSet& nets, StepContext& ctx, const SemisupBatches& batches,
                              const LossWeights& w)
{
    require_pair(batches.labeled_a, batches.labeled_b, "labeled");
    require_pair(batches.unlabeled_a, batches.unlabeled_b, "unlabeled");
    const bool has_labeled = batches.labeled_a.has_value();
    const bool has_unlabeled = batches.unlabeled_a.has_value();
    if (!has_labeled && !has_unlabeled) throw std::invalid_argument("semi-supervised step needs at least one batch pair");

    LossReport report;
    PairEncoding<float> unl;
    if (has_unlabeled) {
        unl = encode_pair(nets, batches.unlabeled_a->images, batches.unlabeled_b->images, Mode::train);
        discriminator_phase(nets, ctx, unl.style_a, unl.style_b, unl.content_a, unl.content_b,
                            batches.unlabeled_a->size(), w, report);
    }
    if (ctx.between_phases) ctx.between_phases();

    Tensor loss;
    if (has_unlabeled) {
        const auto& ua = *batches.unlabeled_a;
        const auto& ub = *batches.unlabeled_b;
        if (any_encoder_adv(w)) {
            auto v = encoder_adv_surrogate(nets, unl.style_a, unl.style_b, unl.content_a, unl.content_b, w);
            report.set("encoder_adv", v.item());
            accumulate(loss, v);
        }
        if (any_rec(w)) {
            auto ra = nets.generate(concat_columns(unl.content_a, unl.style_a), Domain::A, Mode::train);
            auto rb = nets.generate(concat_columns(unl.content_b, unl.style_b), Domain::B, Mode::train);
            auto v = reconstruction_terms(ua.images, ra, ub.images, rb, w);
            report.set("rec", v.item());
            accumulate(loss, v);
        }
    }
    if (has_labeled && (any_sup(w) || any_cc(w))) {
        const auto& la = batches.labeled_a->require_labels();
        const auto& lb = batches.labeled_b->require_labels();
        auto [ca, cb] = encode_content_pair(nets, batches.labeled_a->images, batches.labeled_b->images, Mode::train);
        if (any_sup(w)) {
            auto v = supervised_terms<float>(ca, la, cb, lb, w);
            report.set("sup", v.item());
            accumulate(loss, v);
        }
        if (any_cc(w)) {
            auto [a2b, b2a] = cross_transform(nets, ca, cb, ctx.rng, Mode::train);
            auto [ca2b, cb2a] = encode_content_pair(nets, a2b, b2a, Mode::train);
            auto v = cc_supervised_terms<float>(ca2b, la, cb2a, lb, w);
            report.set("cc_su", v.item());
            accumulate(loss, v);
        }
    }
    if (has_unlabeled && any_cc(w)) {
        auto [a2b, b2a] = cross_transform(nets, unl.content_a, unl.content_b, ctx.rng, Mode::train);
        auto [ca2b, cb2a] = encode_content_pair(nets, a2b, b2a, Mode::train);
        auto v = cc_unsupervised_terms(unl.content_a, ca2b, unl.content_b, cb2a, w);
        report.set("cc_un", v.item());
        accumulate(loss, v);
    }
    if (loss.defined()) model_phase(loss, ctx);
    return report;
}

// ------------------------------------------------------------------ Trainer

namespace {

std::vector<std::size_t> iota_indices(std::size_t n)
{
    std::vector<std::size_t> v(n);
    for (std::size_t i = 0; i < n; ++i) v[i] = i;
    return v;
}

} // namespace

Trainer::Trainer(TrainConfig cfg, const DatasetPair& data)
    : cfg_(std::move(cfg)), data_(data), rng_(cfg_.seed)
{
    cfg_.validate();
    if (data.categories != cfg_.net.prior.categories)
        throw std::invalid_argument("dataset has " + std::to_string(data.categories) + " classes, model expects " +
                                    std::to_string(cfg_.net.prior.categories));
    for (const auto* set : {&data.a.train, &data.b.train}) {
        if (set->count == 0) throw std::invalid_argument("empty training set");
        if (!set->labeled()) throw std::invalid_argument("training sets must carry labels (withheld as configured)");
        set->check_labels(data.categories);
    }
    nets_ = std::make_unique<NetworkSet>(cfg_.net, cfg_.seed);
    opt_ = std::make_unique<Optimizers>(*nets_, cfg_);
    all_a_ = iota_indices(data.a.train.count);
    all_b_ = iota_indices(data.b.train.count);
    if (cfg_.mode == TrainMode::semisupervised) {
        split_a_ = semisup_split(data.a.train, cfg_.labels_per_class, data.categories, cfg_.seed * 2 + 1);
        split_b_ = semisup_split(data.b.train, cfg_.labels_per_class, data.categories, cfg_.seed * 2 + 2);
    } else {
        split_a_.labeled = all_a_;
        split_b_.labeled = all_b_;
    }
}

std::vector<std::size_t> Trainer::draw(std::span<const std::size_t> pool)
{
    std::vector<std::size_t> out(cfg_.batch_size);
    std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
    for (auto& i : out) i = pool[pick(rng_)];
    return out;
}

LossReport Trainer::step()
{
    StepContext ctx{*opt_, rng_, between_};
    LossReport report;
    if (cfg_.mode == TrainMode::supervised) {
        auto a = make_batch(data_.a.train, draw(all_a_), true);
        auto b = make_batch(data_.b.train, draw(all_b_), true);
        if (audit_) {
            audit_(Domain::A, a.indices);
            audit_(Domain::B, b.indices);
        }
        report = train_step_supervised(*nets_, ctx, a, b, cfg_.weights);
    } else {
        SemisupBatches batches;
        if (!split_a_.labeled.empty() && !split_b_.labeled.empty()) {
            batches.labeled_a = make_batch(data_.a.train, draw(split_a_.labeled), true);
            batches.labeled_b = make_batch(data_.b.train, draw(split_b_.labeled), true);
            if (audit_) {
                audit_(Domain::A, batches.labeled_a->indices);
                audit_(Domain::B, batches.labeled_b->indices);
            }
        }
        if (!split_a_.unlabeled.empty() && !split_b_.unlabeled.empty()) {
            batches.unlabeled_a = make_batch(data_.a.train, draw(split_a_.unlabeled), false);
            batches.unlabeled_b = make_batch(data_.b.train, draw(split_b_.unlabeled), false);
        }
        report = train_step_semisup(*nets_, ctx, batches, cfg_.weights);
    }
    ++step_;
    return report;
}

Checkpoint Trainer::checkpoint(const std::string& config_text) const
{
    Checkpoint ckpt;
    std::ostringstream rng_state;
    rng_state << rng_;
    nlohmann::json meta = {
        {"kind", "train"},
        {"step", step_},
        {"seed", cfg_.seed},
        {"rng", rng_state.str()},
        {"config", config_text},
        {"net", {{"width", cfg_.net.width},
                 {"categories", cfg_.net.prior.categories},
                 {"style_dim_a", cfg_.net.prior.style_dim_a},
                 {"style_dim_b", cfg_.net.prior.style_dim_b}}},
        {"optimizers", {{"model", {{"steps", opt_->model.steps()}, {"lr", opt_->model.options().learning_rate}}},
                        {"disc", {{"steps", opt_->disc.steps()}, {"lr", opt_->disc.options().learning_rate}}}}},
    };
    ckpt.metadata = meta.dump();
    store_tensors(ckpt, "param/", nets_->parameters(ParamGroup::all));
    store_tensors(ckpt, "buffer/", nets_->buffers());
    store_optimizer(ckpt, "model", opt_->model);
    store_optimizer(ckpt, "disc", opt_->disc);
    return ckpt;
}

void Trainer::restore(const Checkpoint& ckpt)
{
    auto meta = nlohmann::json::parse(ckpt.metadata);
    if (meta.value("seed", cfg_.seed) != cfg_.seed)
        throw CheckpointError("checkpoint seed " + std::to_string(meta.value("seed", 0ull)) +
                              " differs from the configured seed " + std::to_string(cfg_.seed));
    load_network(ckpt, *nets_);
    load_optimizer(ckpt, "model", opt_->model, meta.at("optimizers").at("model").at("steps").get<std::uint64_t>());
    load_optimizer(ckpt, "disc", opt_->disc, meta.at("optimizers").at("disc").at("steps").get<std::uint64_t>());
    std::istringstream rng_state(meta.at("rng").get<std::string>());
    rng_state >> rng_;
    if (!rng_state) throw CheckpointError("corrupt random-generator state in checkpoint");
    step_ = meta.at("step").get<std::size_t>();
}

void load_network(const Checkpoint& ckpt, NetworkSet& nets)
{
    load_tensors(ckpt, "param/", nets.parameters(ParamGroup::all));
    load_tensors(ckpt, "buffer/", nets.buffers());
}

NetConfig checkpoint_net_config(const Checkpoint& ckpt)
{
    auto meta = nlohmann::json::parse(ckpt.metadata, nullptr, false);
    if (meta.is_discarded() || !meta.contains("net")) throw CheckpointError("checkpoint metadata lacks network geometry");
    const auto& net = meta["net"];
    NetConfig cfg;
    cfg.width = net.at("width").get<double>();
    cfg.prior.categories = net.at("categories").get<std::size_t>();
    cfg.prior.style_dim_a = net.at("style_dim_a").get<std::size_t>();
    cfg.prior.style_dim_b = net.at("style_dim_b").get<std::size_t>();
    return cfg;
}

std::string checkpoint_config_text(const Checkpoint& ckpt)
{
    auto meta = nlohmann::json::parse(ckpt.metadata, nullptr, false);
    if (meta.is_discarded() || !meta.contains("config")) return {};
    return meta["config"].get<std::string>();
}

RunResult train_run(const TrainConfig& cfg, const DatasetPair& data, const RunOptions& options)
{
    namespace fs = std::filesystem;
    cfg.validate();
    std::error_code ec;
    fs::create_directories(options.out_dir, ec);
    if (ec) throw std::runtime_error("cannot create output directory " + options.out_dir.string() + ": " + ec.message());

    RunResult result;
    result.metrics = options.out_dir / "metrics.csv";
    const bool append = options.resume_from && fs::exists(result.metrics);
    std::ofstream metrics(result.metrics, append ? std::ios::app : std::ios::trunc);
    if (!metrics) throw std::runtime_error("output directory " + options.out_dir.string() + " is not writable");
    if (!append) write_metrics_header(metrics);

    Trainer trainer(cfg, data);
    if (options.resume_from) trainer.restore(read_checkpoint(*options.resume_from));

    const std::size_t target = options.stop_after.value_or(cfg.steps);
    while (trainer.step_index() < target) {
        auto report = trainer.step();
        const auto step = trainer.step_index();
        if (!report.all_finite()) throw std::runtime_error("non-finite loss at step " + std::to_string(step));
        report.write_csv(metrics, step);
        metrics.flush();
        if (options.on_step) options.on_step(step, report);
        if (cfg.checkpoint_every != 0 && step % cfg.checkpoint_every == 0)
            write_checkpoint(options.out_dir / ("ckpt-" + std::to_string(step) + ".bin"),
                             trainer.checkpoint(options.config_text));
        result.last = std::move(report);
    }
    result.steps = trainer.step_index();
    result.final_checkpoint = options.out_dir / "final.bin";
    write_checkpoint(result.final_checkpoint, trainer.checkpoint(options.config_text));
    return result;
}

} // namespace cdaae
