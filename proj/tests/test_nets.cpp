#include "cdaae/nets.hpp"
#include "cdaae/ops.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <set>

using namespace cdaae;
using DTensor = BasicTensor<double>;
using DNets = BasicNetworkSet<double>;

namespace {

NetConfig tiny()
{
    NetConfig c;
    c.width = 1.0 / 16.0;
    return c;
}

DTensor random_images(std::size_t n, std::uint64_t seed)
{
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> d(-1.0, 1.0);
    const Shape s{n, kImageChannels, kImageSize, kImageSize};
    std::vector<double> v(element_count(s));
    for (auto& x : v) x = d(rng);
    return DTensor(s, std::move(v));
}

double max_abs_diff(const DTensor& a, const DTensor& b)
{
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

DTensor find_param(const DNets& nets, const std::string& name)
{
    for (auto& [n, p] : nets.parameters(ParamGroup::all))
        if (n == name) return p;
    FAIL("no parameter " << name);
    return {};
}

} // namespace

TEST_CASE("reference widths and layer kinds")
{
    NetConfig cfg;
    NetworkSet nets(cfg, 1);
    std::vector<std::string> got;
    for (const auto& l : nets.describe())
        got.push_back(l.network + "." + l.layer + ":" + l.kind + ":" + std::to_string(l.out_channels));
    const std::vector<std::string> expected{
        "E_L.conv1:conv:64",           "E_L.conv2:conv:128",
        "E_H_c.conv3:conv:256",        "E_H_c.conv4:conv:128",
        "E_H_c.fc:dense:10",           "E_A_H_s.conv1:conv:128",
        "E_A_H_s.conv2:conv:256",      "E_A_H_s.conv3:conv:8",
        "E_B_H_s.conv1:conv:128",      "E_B_H_s.conv2:conv:256",
        "E_B_H_s.conv3:conv:8",        "G_A.up1:conv_transpose:256",
        "G_A.up2:conv_transpose:128",  "G_A.up3:conv_transpose:64",
        "G_A.up4:conv_transpose:3",    "G_B.up1:conv_transpose:256",
        "G_B.up2:conv_transpose:128",  "G_B.up3:conv_transpose:64",
        "G_B.up4:conv_transpose:3",    "D_c.fc1:dense:512",
        "D_c.fc2:dense:256",           "D_c.fc3:dense:128",
        "D_c.fc4:dense:1",             "D_A_s.fc1:dense:512",
        "D_A_s.fc2:dense:256",         "D_A_s.fc3:dense:128",
        "D_A_s.fc4:dense:1",           "D_B_s.fc1:dense:512",
        "D_B_s.fc2:dense:256",         "D_B_s.fc3:dense:128",
        "D_B_s.fc4:dense:1",
    };
    CHECK(got == expected);

    // Generators read [content(10), style(8)]; critics read a code each.
    CHECK(nets.describe()[11].parameters == 18u * 256u * 4u * 4u);
    CHECK(nets.describe()[19].parameters == 10u * 512u + 512u);
    CHECK(nets.describe()[23].parameters == 8u * 512u + 512u);
}

TEST_CASE("output shapes and ranges")
{
    DNets nets(tiny(), 2);
    auto x = random_images(5, 1);
    auto c = nets.encode_content(x, Mode::eval);
    REQUIRE(c.shape() == Shape{5, 10});
    for (std::size_t r = 0; r < 5; ++r) {
        double s = 0.0;
        for (std::size_t k = 0; k < 10; ++k) {
            CHECK(c[r * 10 + k] > 0.0);
            s += c[r * 10 + k];
        }
        CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
    }
    auto sa = nets.encode_style(x, Domain::A, Mode::eval);
    CHECK(sa.shape() == Shape{5, 8});

    auto img = nets.generate(concat_columns(c, sa), Domain::A, Mode::eval);
    REQUIRE(img.shape() == x.shape());
    for (double v : img.values()) CHECK((v >= -1.0 && v <= 1.0));

    auto d = nets.discriminate(sa, Critic::style_a);
    REQUIRE(d.shape() == Shape{5, 1});
    for (double v : d.values()) CHECK((v > 0.0 && v < 1.0));
    CHECK(nets.discriminate(c, Critic::content).shape() == Shape{5, 1});
    CHECK_THROWS_AS(nets.discriminate(c, Critic::style_b), DimensionError);
}

TEST_CASE("image batches must be N x 3 x 32 x 32")
{
    DNets nets(tiny(), 3);
    CHECK_THROWS_AS(nets.encode_content(DTensor({2, 1, 32, 32}), Mode::eval), DimensionError);
    CHECK_THROWS_AS(nets.encode_content(DTensor({2, 3, 28, 28}), Mode::eval), DimensionError);
    CHECK_THROWS_AS(check_image_batch(DTensor({3, 32, 32})), DimensionError);
}

TEST_CASE("one low-level encoder feeds content and both style heads")
{
    DNets nets(tiny(), 4);
    auto trunk = nets.parameters(ParamGroup::encoders);
    std::size_t trunk_entries = 0;
    for (auto& [n, p] : trunk) trunk_entries += n.rfind("E_L.", 0) == 0;
    CHECK(trunk_entries == 6);

    auto x = random_images(3, 5);
    auto c0 = nets.encode_content(x, Mode::eval);
    auto a0 = nets.encode_style(x, Domain::A, Mode::eval);
    auto b0 = nets.encode_style(x, Domain::B, Mode::eval);

    auto k = find_param(nets, "E_L.conv1.kernel");
    for (auto& v : k.mutable_values()) v *= 1.5;
    CHECK(max_abs_diff(c0, nets.encode_content(x, Mode::eval)) > 1e-9);
    CHECK(max_abs_diff(a0, nets.encode_style(x, Domain::A, Mode::eval)) > 1e-9);
    CHECK(max_abs_diff(b0, nets.encode_style(x, Domain::B, Mode::eval)) > 1e-9);

    // A style head touches nothing else.
    auto c1 = nets.encode_content(x, Mode::eval);
    auto b1 = nets.encode_style(x, Domain::B, Mode::eval);
    auto sk = find_param(nets, "E_A_H_s.conv1.kernel");
    for (auto& v : sk.mutable_values()) v = -v;
    CHECK(max_abs_diff(c1, nets.encode_content(x, Mode::eval)) == 0.0);
    CHECK(max_abs_diff(b1, nets.encode_style(x, Domain::B, Mode::eval)) == 0.0);
}

TEST_CASE("parameter groups")
{
    DNets nets(tiny(), 5);
    auto names = [&](ParamGroup g) {
        std::set<std::string> s;
        for (auto& [n, p] : nets.parameters(g)) s.insert(n);
        return s;
    };
    auto enc = names(ParamGroup::encoders), gen = names(ParamGroup::generators),
         disc = names(ParamGroup::discriminators), cls = names(ParamGroup::classifier),
         model = names(ParamGroup::model), all = names(ParamGroup::all);
    for (const auto& n : cls) CHECK(enc.count(n) == 1);
    for (const auto& n : cls) CHECK((n.rfind("E_L.", 0) == 0 || n.rfind("E_H_c.", 0) == 0));
    CHECK(model.size() == enc.size() + gen.size());
    CHECK(all.size() == model.size() + disc.size());
    for (const auto& n : disc) CHECK(model.count(n) == 0);
    CHECK(nets.parameters(ParamGroup::all).size() == all.size());

    std::size_t running = 0;
    for (auto& [n, b] : nets.buffers())
        running += n.find(".running_mean") != std::string::npos || n.find(".running_var") != std::string::npos;
    CHECK(running == nets.buffers().size());
}

TEST_CASE("latent code concatenates content before style")
{
    DNets nets(tiny(), 6);
    std::mt19937_64 rng(1);
    LatentCode<double> code;
    code.content = nets.prior().sample_content<double>(2, rng);
    code.style = nets.prior().sample_style<double>(2, Domain::B, rng);
    code.domain = Domain::B;
    auto cat = code.concatenated();
    REQUIRE(cat.shape() == Shape{2, 18});
    for (std::size_t r = 0; r < 2; ++r) {
        for (std::size_t k = 0; k < 10; ++k) CHECK(cat[r * 18 + k] == code.content[r * 10 + k]);
        for (std::size_t j = 0; j < 8; ++j) CHECK(cat[r * 18 + 10 + j] == code.style[r * 8 + j]);
    }
    CHECK(max_abs_diff(nets.generate(code, Mode::eval), nets.generate(cat, Domain::B, Mode::eval)) == 0.0);

    LatentCode<double> bad = code;
    bad.content = DTensor({2, 10}, 0.3);
    CHECK_THROWS(bad.concatenated());
}

TEST_CASE("priors")
{
    PriorSpec p;
    std::mt19937_64 rng(7);
    auto c = p.sample_content<double>(2000, rng);
    std::vector<std::size_t> counts(10, 0);
    for (std::size_t r = 0; r < 2000; ++r) {
        std::size_t ones = 0;
        for (std::size_t k = 0; k < 10; ++k) {
            const double v = c[r * 10 + k];
            CHECK((v == 0.0 || v == 1.0));
            if (v == 1.0) {
                ++ones;
                ++counts[k];
            }
        }
        CHECK(ones == 1);
    }
    for (auto n : counts) CHECK(std::abs(static_cast<double>(n) - 200.0) < 5.0 * std::sqrt(180.0));

    auto s = p.sample_style<double>(4000, Domain::A, rng);
    double mean = 0.0, sq = 0.0;
    for (double v : s.values()) {
        mean += v;
        sq += v * v;
    }
    mean /= static_cast<double>(s.size());
    sq /= static_cast<double>(s.size());
    CHECK(std::abs(mean) < 0.03);
    CHECK(std::abs(sq - 1.0) < 0.05);

    PriorSpec broken;
    broken.categories = 1;
    CHECK_THROWS(broken.validate());
}

TEST_CASE("prior-style transforms of one input are pairwise distinct")
{
    DNets nets(tiny(), 8);
    auto one = random_images(1, 9);
    std::vector<double> rep;
    for (int i = 0; i < 8; ++i) rep.insert(rep.end(), one.values().begin(), one.values().end());
    DTensor batch({8, kImageChannels, kImageSize, kImageSize}, rep);
    std::mt19937_64 rng(3);
    auto out = nets.transform(batch, Domain::B, std::nullopt, rng, Mode::eval);
    const std::size_t per = kImageChannels * kImageSize * kImageSize;
    for (std::size_t i = 0; i < 8; ++i)
        for (std::size_t j = i + 1; j < 8; ++j) {
            double d = 0.0;
            for (std::size_t q = 0; q < per; ++q) d = std::max(d, std::abs(out[i * per + q] - out[j * per + q]));
            CHECK(d > 1e-6);
        }

    // A supplied style is used verbatim.
    auto style = nets.prior().sample_style<double>(1, Domain::B, rng);
    std::vector<double> srep;
    for (int i = 0; i < 8; ++i) srep.insert(srep.end(), style.values().begin(), style.values().end());
    auto fixed = nets.transform(batch, Domain::B, DTensor({8, 8}, srep), rng, Mode::eval);
    for (std::size_t i = 1; i < 8; ++i)
        for (std::size_t q = 0; q < per; ++q) REQUIRE(fixed[i * per + q] == fixed[q]);
}

TEST_CASE("clones are equal and independent")
{
    DNets nets(tiny(), 10);
    auto twin = nets.clone();
    auto x = random_images(2, 11);
    CHECK(max_abs_diff(nets.encode_content(x, Mode::eval), twin->encode_content(x, Mode::eval)) == 0.0);
    for (auto& v : find_param(*twin, "E_H_c.fc.bias").mutable_values()) v += 1.0;
    CHECK(max_abs_diff(nets.encode_content(x, Mode::eval), twin->encode_content(x, Mode::eval)) > 0.0);
    twin->copy_values_from(nets);
    CHECK(max_abs_diff(nets.encode_content(x, Mode::eval), twin->encode_content(x, Mode::eval)) == 0.0);

    DNets same_seed(tiny(), 10);
    CHECK(max_abs_diff(nets.encode_content(x, Mode::eval), same_seed.encode_content(x, Mode::eval)) == 0.0);
}

TEST_CASE("train mode updates running statistics, eval mode does not")
{
    DNets nets(tiny(), 12);
    auto x = random_images(4, 13);
    auto snapshot = [&] {
        std::vector<double> v;
        for (auto& [n, b] : nets.buffers()) v.insert(v.end(), b.values().begin(), b.values().end());
        return v;
    };
    auto s0 = snapshot();
    (void)nets.encode_content(x, Mode::eval);
    CHECK(snapshot() == s0);
    (void)nets.encode_content(x, Mode::train);
    CHECK(snapshot() != s0);
}

TEST_CASE("stand-alone classifier mirrors the content encoder")
{
    ContentClassifier cls(tiny(), 1);
    std::set<std::string> names;
    // Same layers under its own prefixes, so nothing is shared with a NetworkSet.
    for (auto& [n, p] : cls.parameters()) names.insert(n.substr(n.find('.')));
    NetworkSet nets(tiny(), 1);
    std::set<std::string> expected;
    for (auto& [n, p] : nets.parameters(ParamGroup::classifier)) expected.insert(n.substr(n.find('.')));
    CHECK(names == expected);
    auto probs = cls.forward(random_images(3, 1).cast<float>(), Mode::eval);
    CHECK(probs.shape() == Shape{3, 10});
}
