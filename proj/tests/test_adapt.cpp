#include "support/fixtures.hpp"

#include "cdaae/adapt.hpp"
#include "cdaae/evaluate.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

using namespace cdaae;
using namespace cdaae::testing;

namespace {

AdaptConfig small_adapt()
{
    AdaptConfig c;
    c.pretrain_steps = 6;
    c.epochs = 2;
    c.t_init = 0.3;
    c.train.batch_size = 4;
    c.train.seed = 2;
    c.train.net.width = 1.0 / 16.0;
    c.train.net.prior.categories = 4;
    c.train.lr_model = c.train.lr_disc = 1e-3;
    return c;
}

std::vector<float> flat(const std::vector<std::pair<std::string, Tensor>>& entries)
{
    std::vector<float> v;
    for (const auto& [n, t] : entries) v.insert(v.end(), t.values().begin(), t.values().end());
    return v;
}

} // namespace

TEST_CASE("pseudo-labels keep confident rows by argmax")
{
    const std::vector<float> probs{
        0.90f, 0.05f, 0.05f, // kept, label 0
        0.10f, 0.20f, 0.70f, // below threshold
        0.02f, 0.95f, 0.03f, // kept, label 1
        0.40f, 0.40f, 0.20f, // tie, below
    };
    auto set = pseudo_label(probs, 3, 0.85);
    CHECK(set.threshold == 0.85);
    REQUIRE(set.size() == 2);
    CHECK(set.items[0].index == 0);
    CHECK(set.items[0].label == 0);
    CHECK(set.items[0].confidence == 0.90f);
    CHECK(set.items[1].index == 2);
    CHECK(set.items[1].label == 1);

    auto low = pseudo_label(probs, 3, 0.3);
    REQUIRE(low.size() == 4);
    CHECK(low.items[3].label == 0); // ties go to the lowest index

    // The comparison is strict.
    CHECK(pseudo_label(std::vector<float>{0.5f, 0.5f}, 2, 0.5).empty());
    CHECK_THROWS_AS(pseudo_label(std::vector<float>{0.5f, 0.2f, 0.3f}, 2, 0.5), DimensionError);
}

TEST_CASE("raising the threshold never adds pseudo-labels")
{
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<float> u(0.0f, 1.0f);
    std::vector<float> probs(200 * 5);
    for (std::size_t r = 0; r < 200; ++r) {
        float s = 0.0f;
        for (std::size_t k = 0; k < 5; ++k) s += probs[r * 5 + k] = u(rng) * u(rng) * u(rng);
        for (std::size_t k = 0; k < 5; ++k) probs[r * 5 + k] /= s;
    }
    std::set<std::size_t> previous;
    bool first = true;
    for (double t = 0.2; t < 1.0; t += 0.05) {
        auto set = pseudo_label(probs, 5, t);
        std::set<std::size_t> now;
        for (const auto& p : set.items) {
            now.insert(p.index);
            CHECK(static_cast<double>(p.confidence) > t);
        }
        if (!first) CHECK(std::includes(previous.begin(), previous.end(), now.begin(), now.end()));
        previous = now;
        first = false;
    }
}

TEST_CASE("threshold schedule")
{
    CHECK(threshold_schedule(0.85, 1e4, 0.0) == 0.85);
    const double t1 = threshold_schedule(0.85, 1e4, 1e4);
    CHECK(std::abs(t1 - (0.85 + 0.15 * (1.0 - std::exp(-1.0)))) < 1e-6);
    CHECK(std::round(t1 * 1e5) / 1e5 == doctest::Approx(0.94482).epsilon(1e-12));
    // Linear bound from the concavity of the saturation curve.
    for (double i : {1.0, 100.0, 5000.0, 1e4, 5e4})
        CHECK(threshold_schedule(0.85, 1e4, i) - 0.85 <= 0.15 * i / 1e4 + 1e-15);
    double prev = 0.0;
    for (double i = 0.0; i <= 1e5; i += 250.0) {
        const double t = threshold_schedule(0.6, 5e3, i);
        CHECK(t >= prev);
        CHECK(t <= 1.0);
        prev = t;
    }
    CHECK(threshold_schedule(0.6, 1.0, 1e6) == doctest::Approx(1.0));
    for (double i = 0.0; i <= 100.0; i += 1.0) CHECK(std::abs(threshold_schedule(0.85, 1e12, i) - 0.85) < 1e-6);
    CHECK_THROWS(threshold_schedule(0.85, 0.0, 1.0));
    CHECK_THROWS(threshold_schedule(0.85, 1e4, -1.0));
}

TEST_CASE("adaptation config validation")
{
    auto c = small_adapt();
    CHECK_NOTHROW(c.validate());
    c.t_init = 1.5;
    CHECK_THROWS(c.validate());
    c = small_adapt();
    c.w = 0.0;
    CHECK_THROWS(c.validate());
    c = small_adapt();
    c.w = std::numeric_limits<double>::infinity();
    CHECK_THROWS(c.validate());
}

TEST_CASE("pretraining moves only the classifier path")
{
    auto data = tiny_pair(4, 2, 4, 1);
    auto cfg = small_adapt();
    cfg.epochs = 0;
    std::size_t pretrain_steps = 0;
    AdaptHooks hooks;
    hooks.on_step = [&](AdaptPhase p, std::size_t epoch, const LossReport& r) {
        CHECK(p == AdaptPhase::pretrain);
        CHECK(epoch == 0);
        CHECK(r.has("sup"));
        ++pretrain_steps;
    };
    auto result = adapt_basic(cfg, data, hooks);
    CHECK(pretrain_steps == cfg.pretrain_steps);
    NetworkSet fresh(cfg.train.net, cfg.train.seed);

    CHECK(flat(result.nets->parameters(ParamGroup::classifier)) != flat(fresh.parameters(ParamGroup::classifier)));
    CHECK(flat(result.nets->parameters(ParamGroup::generators)) == flat(fresh.parameters(ParamGroup::generators)));
    CHECK(flat(result.nets->parameters(ParamGroup::discriminators)) ==
          flat(fresh.parameters(ParamGroup::discriminators)));
    std::set<std::string> cls;
    for (auto& [n, p] : fresh.parameters(ParamGroup::classifier)) cls.insert(n);
    auto enc_now = result.nets->parameters(ParamGroup::encoders);
    auto enc_fresh = fresh.parameters(ParamGroup::encoders);
    for (std::size_t i = 0; i < enc_now.size(); ++i) {
        if (cls.count(enc_now[i].first)) continue;
        CAPTURE(enc_now[i].first);
        CHECK(std::ranges::equal(enc_now[i].second.values(), enc_fresh[i].second.values()));
    }

    // With no adaptation epochs the result is the source-only model.
    CHECK(result.trace.empty());
    CHECK(result.final_accuracy() == result.baseline_accuracy);
    CHECK(result.baseline_accuracy == content_accuracy(*result.nets, data.b.test));
}

TEST_CASE("epochs interleave joint and supervised steps")
{
    auto data = tiny_pair(4, 2, 4, 1);
    auto cfg = small_adapt();
    std::vector<AdaptPhase> phases;
    std::vector<AdaptEpoch> epochs;
    AdaptHooks hooks;
    hooks.on_step = [&](AdaptPhase p, std::size_t, const LossReport& r) {
        phases.push_back(p);
        if (p == AdaptPhase::joint) {
            CHECK(r.has("rec"));
            CHECK(r.has("cc_suun"));
            CHECK(r.has("adv_style"));
        }
    };
    hooks.on_epoch = [&](const AdaptEpoch& e) { epochs.push_back(e); };
    auto result = adapt_basic(cfg, data, hooks);
    const std::size_t per_epoch = 16 / cfg.train.batch_size;
    REQUIRE(phases.size() == cfg.pretrain_steps + 2 * per_epoch * cfg.epochs);
    for (std::size_t i = cfg.pretrain_steps; i < phases.size(); i += 2) {
        CHECK(phases[i] == AdaptPhase::joint);
        CHECK(phases[i + 1] == AdaptPhase::supervised);
    }
    REQUIRE(epochs.size() == 2);
    CHECK(result.trace.size() == 2);
    for (const auto& e : epochs) {
        CHECK(e.threshold == cfg.t_init);
        CHECK((e.accuracy >= 0.0 && e.accuracy <= 1.0));
        CHECK(e.pseudo_labeled <= data.b.train.count);
    }

    std::ostringstream os;
    write_trace_csv(os, cfg, result);
    std::istringstream lines(os.str());
    std::string line;
    std::getline(lines, line);
    CHECK(line == "epoch,t,pseudo_labeled,accuracy");
    std::getline(lines, line);
    CHECK(line.rfind("0,0.300000000,0,", 0) == 0);
    std::size_t rows = 0;
    while (std::getline(lines, line)) ++rows;
    CHECK(rows == 2);
}

TEST_CASE("target training labels are never used")
{
    auto data = tiny_pair(4, 2, 4, 1);
    auto scrambled = tiny_pair(4, 2, 4, 1);
    std::rotate(scrambled.b.train.labels.begin(), scrambled.b.train.labels.begin() + 3, scrambled.b.train.labels.end());
    auto cfg = small_adapt();
    auto r1 = adapt_basic(cfg, data);
    auto r2 = adapt_basic(cfg, scrambled);
    CHECK(flat(r1.nets->parameters(ParamGroup::all)) == flat(r2.nets->parameters(ParamGroup::all)));
    REQUIRE(r1.trace.size() == r2.trace.size());
    for (std::size_t i = 0; i < r1.trace.size(); ++i) {
        CHECK(r1.trace[i].accuracy == r2.trace[i].accuracy);
        CHECK(r1.trace[i].pseudo_labeled == r2.trace[i].pseudo_labeled);
    }
}

TEST_CASE("boosted threshold follows the schedule and a huge w reproduces basic")
{
    auto data = tiny_pair(4, 2, 4, 1);
    auto cfg = small_adapt();
    cfg.epochs = 3;
    cfg.w = 2.0;
    auto boosted = adapt_boosted(cfg, data);
    REQUIRE(boosted.trace.size() == 3);
    for (const auto& e : boosted.trace)
        CHECK(e.threshold == threshold_schedule(cfg.t_init, cfg.w, static_cast<double>(e.epoch - 1)));
    CHECK(boosted.trace[0].threshold == cfg.t_init);
    CHECK(boosted.trace[2].threshold > boosted.trace[1].threshold);

    cfg.w = 1e12;
    auto flat_boost = adapt_boosted(cfg, data);
    auto basic = adapt_basic(cfg, data);
    REQUIRE(flat_boost.trace.size() == basic.trace.size());
    for (std::size_t i = 0; i < basic.trace.size(); ++i) {
        CHECK(std::abs(flat_boost.trace[i].threshold - basic.trace[i].threshold) < 1e-6);
        CHECK(flat_boost.trace[i].pseudo_labeled == basic.trace[i].pseudo_labeled);
        CHECK(flat_boost.trace[i].accuracy == basic.trace[i].accuracy);
    }
}

TEST_CASE("adaptation rejects unusable inputs")
{
    auto data = tiny_pair(4, 2, 4, 1);
    auto cfg = small_adapt();
    cfg.train.net.prior.categories = 10;
    CHECK_THROWS(adapt_basic(cfg, data));
    cfg = small_adapt();
    data.a.train.labels.clear();
    CHECK_THROWS(adapt_basic(cfg, data));
}
