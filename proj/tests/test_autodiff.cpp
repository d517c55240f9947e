#include "support/gradient_suite.hpp"

#include "cdaae/gradcheck.hpp"
#include "cdaae/layers.hpp"
#include "cdaae/ops.hpp"
#include "cdaae/optimizer.hpp"

#include <doctest.h>

#include <cmath>
#include <map>
#include <random>

using namespace cdaae;
using cdaae::testing::DTensor;

namespace {

std::vector<double> random_values(std::size_t n, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0)
{
    std::uniform_real_distribution<double> d(lo, hi);
    std::vector<double> v(n);
    for (auto& x : v) x = d(rng);
    return v;
}

// Direct cross-correlation with zero padding.
std::vector<double> naive_conv(const DTensor& x, const DTensor& k, std::size_t stride, std::size_t pad)
{
    const std::size_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    const std::size_t o = k.dim(0), kk = k.dim(2);
    const std::size_t oh = (h + 2 * pad - kk) / stride + 1, ow = (w + 2 * pad - kk) / stride + 1;
    std::vector<double> out(n * o * oh * ow, 0.0);
    for (std::size_t b = 0; b < n; ++b)
        for (std::size_t oc = 0; oc < o; ++oc)
            for (std::size_t y = 0; y < oh; ++y)
                for (std::size_t xx = 0; xx < ow; ++xx) {
                    double s = 0.0;
                    for (std::size_t ic = 0; ic < c; ++ic)
                        for (std::size_t dy = 0; dy < kk; ++dy)
                            for (std::size_t dx = 0; dx < kk; ++dx) {
                                const long iy = static_cast<long>(y * stride + dy) - static_cast<long>(pad);
                                const long ix = static_cast<long>(xx * stride + dx) - static_cast<long>(pad);
                                if (iy < 0 || ix < 0 || iy >= static_cast<long>(h) || ix >= static_cast<long>(w))
                                    continue;
                                s += x[((b * c + ic) * h + iy) * w + ix] * k[((oc * c + ic) * kk + dy) * kk + dx];
                            }
                    out[((b * o + oc) * oh + y) * ow + xx] = s;
                }
    return out;
}

double dot(std::span<const double> a, std::span<const double> b)
{
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

} // namespace

TEST_CASE("backward of linear and quadratic losses")
{
    auto w = DTensor::parameter({3, 2}, {0.5, -1.0, 2.0, 0.25, -0.75, 1.5});
    w.zero_grad();
    backward(sum(w));
    for (double g : w.grad()) CHECK(g == 1.0);

    w.zero_grad();
    backward(scale(sum(mul(w, w)), 0.5));
    for (std::size_t i = 0; i < w.size(); ++i) CHECK(w.grad()[i] == doctest::Approx(w[i]).epsilon(1e-6));
}

TEST_CASE("backward rejects a non-scalar loss")
{
    auto w = DTensor::parameter({2}, {1.0, 2.0});
    CHECK_THROWS_AS(backward(w), DimensionError);
}

TEST_CASE("unreachable parameters keep a zero gradient")
{
    auto a = DTensor::parameter({2}, {1.0, 2.0});
    auto b = DTensor::parameter({2}, {3.0, 4.0});
    a.zero_grad();
    b.zero_grad();
    backward(sum(a));
    CHECK(b.grad()[0] == 0.0);
    CHECK(b.grad()[1] == 0.0);
}

TEST_CASE("topological order puts inputs before their consumers")
{
    auto a = DTensor::parameter({2, 2}, {1.0, 2.0, 3.0, 4.0});
    auto loss = sum(tanh(add(mul(a, a), a)));
    auto graph = topological_order(loss);
    std::map<const void*, std::size_t> pos;
    for (std::size_t i = 0; i < graph.order.size(); ++i) pos[graph.order[i].get()] = i;
    CHECK(pos.size() == graph.order.size()); // each node once
    for (const auto& node : graph.order)
        for (const auto& in : node->inputs)
            if (pos.count(in.get())) CHECK(pos[in.get()] < pos[node.get()]);
}

TEST_CASE("conv2d window sums and output geometry")
{
    DTensor x({1, 1, 3, 3}, 1.0), k({1, 1, 2, 2}, 1.0);
    auto y = conv2d(x, k, 1, 0);
    REQUIRE(y.shape() == Shape{1, 1, 2, 2});
    for (double v : y.values()) CHECK(v == 4.0);

    DTensor x4({1, 1, 4, 4}, 0.5);
    CHECK(conv2d(x4, k, 2, 0).shape() == Shape{1, 1, 2, 2});
    CHECK_THROWS_AS(conv2d(x4, DTensor({1, 2, 2, 2}, 1.0), 1, 0), DimensionError);
}

TEST_CASE("conv2d matches a direct loop")
{
    std::mt19937_64 rng(4);
    for (std::size_t stride : {1u, 2u})
        for (std::size_t pad : {0u, 1u}) {
            DTensor x({2, 3, 7, 7}, random_values(2 * 3 * 49, rng));
            DTensor k({4, 3, 3, 3}, random_values(4 * 27, rng));
            auto got = conv2d(x, k, stride, pad);
            auto want = naive_conv(x, k, stride, pad);
            REQUIRE(got.size() == want.size());
            for (std::size_t i = 0; i < want.size(); ++i) CHECK(got[i] == doctest::Approx(want[i]).epsilon(1e-12));
        }
}

TEST_CASE("conv_transpose2d on a small hand case")
{
    DTensor x({1, 1, 2, 2}, 1.0), k({1, 1, 2, 2}, 1.0);
    auto y = conv_transpose2d(x, k, 1, 0);
    REQUIRE(y.shape() == Shape{1, 1, 3, 3});
    const std::vector<double> want{1, 2, 1, 2, 4, 2, 1, 2, 1};
    for (std::size_t i = 0; i < 9; ++i) CHECK(y[i] == want[i]);

    DTensor big({1, 2, 16, 16}, 0.1);
    CHECK(conv_transpose2d(big, DTensor({2, 3, 4, 4}, 0.1), 2, 1).shape() == Shape{1, 3, 32, 32});
}

TEST_CASE("conv_transpose2d is the adjoint of conv2d")
{
    // <conv(x, k), y> == <x, conv_transpose(y, k)>
    std::mt19937_64 rng(9);
    for (int trial = 0; trial < 6; ++trial) {
        const std::size_t stride = 1 + trial % 2, pad = trial % 3 == 0 ? 0 : 1;
        DTensor x({2, 3, 8, 8}, random_values(2 * 3 * 64, rng));
        DTensor k({5, 3, 4, 4}, random_values(5 * 3 * 16, rng));
        auto cx = conv2d(x, k, stride, pad);
        DTensor y(cx.shape(), random_values(cx.size(), rng));
        auto ty = conv_transpose2d(y, k, stride, pad);
        REQUIRE(ty.shape() == x.shape());
        CHECK(dot(cx.values(), y.values()) == doctest::Approx(dot(x.values(), ty.values())).epsilon(1e-5));
    }
}

TEST_CASE("batchnorm statistics and degenerate cases")
{
    std::mt19937_64 rng(2);
    const std::size_t c = 4;
    DTensor x({8, c, 2, 2}, random_values(8 * c * 4, rng, -3.0, 5.0));
    BatchNormStats<double> stats{DTensor({c}, 0.0), DTensor({c}, 1.0)};
    auto y = batchnorm(x, DTensor({c}, 1.0), DTensor({c}, 0.0), stats, Mode::train);
    for (std::size_t ch = 0; ch < c; ++ch) {
        double s = 0.0, ss = 0.0;
        for (std::size_t n = 0; n < 8; ++n)
            for (std::size_t j = 0; j < 4; ++j) s += y[(n * c + ch) * 4 + j];
        const double mu = s / 32.0;
        for (std::size_t n = 0; n < 8; ++n)
            for (std::size_t j = 0; j < 4; ++j) ss += std::pow(y[(n * c + ch) * 4 + j] - mu, 2);
        CHECK(std::abs(mu) < 1e-5);
        CHECK(ss / 32.0 == doctest::Approx(1.0).epsilon(1e-3));
        CHECK(stats.running_mean[ch] != 0.0); // running estimate moved
    }

    DTensor flat({4, 2, 1, 1}, 3.0);
    BatchNormStats<double> s2{DTensor({2}, 0.0), DTensor({2}, 1.0)};
    auto centred = batchnorm(flat, DTensor({2}, 1.0), DTensor({2}, 0.0), s2, Mode::train);
    for (double v : centred.values()) CHECK(std::abs(v) < 1e-6);

    BatchNormStats<double> s3{DTensor({c}, 0.0), DTensor({c}, 1.0)};
    auto annihilated = batchnorm(x, DTensor({c}, 0.0), DTensor({c}, 0.7), s3, Mode::train);
    for (double v : annihilated.values()) CHECK(v == doctest::Approx(0.7));

    BatchNormStats<double> s4{DTensor({c}, 0.0), DTensor({c}, 1.0)};
    CHECK_THROWS(batchnorm(DTensor({1, c, 2, 2}, 1.0), DTensor({c}, 1.0), DTensor({c}, 0.0), s4, Mode::train));
}

TEST_CASE("activations")
{
    DTensor logits({2, 5}, 0.3);
    auto uniform = softmax(logits);
    for (double v : uniform.values()) CHECK(v == doctest::Approx(0.2));

    std::mt19937_64 rng(5);
    DTensor big({6, 7}, random_values(42, rng, -40.0, 40.0));
    auto t = tanh(big);
    for (double v : t.values()) CHECK(std::abs(v) <= 1.0);
    auto sm = softmax(big);
    for (std::size_t r = 0; r < 6; ++r) {
        double s = 0.0;
        for (std::size_t k = 0; k < 7; ++k) {
            CHECK(sm[r * 7 + k] >= 0.0);
            s += sm[r * 7 + k];
        }
        CHECK(s == doctest::Approx(1.0).epsilon(1e-5));
    }
    auto r = relu(big);
    for (std::size_t i = 0; i < big.size(); ++i) CHECK(r[i] == (big[i] > 0 ? big[i] : 0.0));
    auto s = sigmoid(big);
    for (double v : s.values()) CHECK((v >= 0.0 && v <= 1.0));
}

TEST_CASE("cross entropy anchors and term-by-term oracle")
{
    DTensor target({1, 10}, 0.0);
    target.mutable_values()[3] = 1.0;
    CHECK(cross_entropy(DTensor({1, 10}, 0.1), target).item() == doctest::Approx(std::log(10.0)).epsilon(1e-12));
    CHECK(cross_entropy(target, target).item() == doctest::Approx(0.0));

    std::mt19937_64 rng(8);
    DTensor logits({5, 6}, random_values(30, rng, -2.0, 2.0)), tl({5, 6}, random_values(30, rng, -2.0, 2.0));
    auto p = softmax(logits), q = softmax(tl);
    double want = 0.0;
    for (std::size_t i = 0; i < 30; ++i) want -= q[i] * std::log(std::max(p[i], kLogEpsilon));
    CHECK(cross_entropy(p, q).item() == doctest::Approx(want / 5.0).epsilon(1e-6));

    CHECK_THROWS_AS(cross_entropy(p, DTensor({5, 5}, 0.2)), DimensionError);
}

TEST_CASE("one_hot rejects labels outside the category range")
{
    std::vector<int> ok{0, 9}, bad{0, 10};
    CHECK(one_hot<double>(ok, 10)[19] == 1.0);
    CHECK_THROWS_AS(one_hot<double>(bad, 10), std::out_of_range);
}

TEST_CASE("gradient checker on the identity")
{
    auto w = DTensor::parameter({3}, {0.2, -0.4, 0.9});
    CHECK(gradient_check([&] { return sum(w); }, {w}) < 1e-7);
}

TEST_CASE("gradient checker shrinks the step across a kink")
{
    // 3e-4 from the ReLU kink: a 1e-3 step straddles it.
    auto w = DTensor::parameter({1}, {3e-4});
    auto fn = [&] { return sum(relu(w)); };
    GradCheckOptions o;
    CHECK(gradient_check(fn, {w}, o) > 0.1);
    o.kink_retries = 1;
    CHECK(gradient_check(fn, {w}, o) < 1e-7);
    // A wrong gradient still fails after refinement.
    auto v = DTensor::parameter({1}, {0.5});
    CHECK(gradient_check([&] { return sum(mul(v, v)); }, {v}, o) < 1e-6);
    CHECK(gradient_check([&] { return sum(mul(v, v.detach())); }, {v}, o) > 0.3);
}

TEST_CASE("every primitive passes finite differences over 20 seeds")
{
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        cdaae::testing::GradSuite suite(seed);
        for (const auto& r : suite.primitives()) {
            INFO("primitive " << r.name << " seed " << seed);
            CHECK(r.error < 1e-3);
        }
    }
}

TEST_CASE("composite conv/batchnorm/relu/dense/cross-entropy network")
{
    std::mt19937_64 rng(13);
    ParameterStore<double> store;
    Conv2dLayer<double> conv(store, "conv", 3, 4, 3, 1, 1, true, rng);
    BatchNormLayer<double> bn(store, "bn", 4);
    DenseLayer<double> fc(store, "fc", 4 * 4 * 4, 5, rng);
    DTensor x({3, 3, 4, 4}, random_values(3 * 48, rng));
    std::vector<int> labels{0, 3, 4};
    auto target = one_hot<double>(labels, 5);
    auto fn = [&] {
        auto h = relu(bn.forward(conv.forward(x), Mode::train));
        return cross_entropy(softmax(fc.forward(reshape(h, {3, 64}))), target);
    };
    std::vector<DTensor> params;
    for (auto& [n, p] : store.parameters()) params.push_back(p);
    // Batch-normalized activations sit close to the ReLU kink; a 1e-3 step
    // straddles it for some coordinates, so this check uses a finer step.
    GradCheckOptions o;
    o.eps = 1e-6;
    CHECK(gradient_check(fn, params, o) < 1e-3);
}

TEST_CASE("adam: zero gradient, sign limit, determinism, missing grads")
{
    auto p = Tensor::parameter({3}, {1.0f, -2.0f, 0.5f});
    Adam<float> opt({{"p", p}}, {0.01, 0.9, 0.999, 1e-8});
    CHECK_THROWS(opt.step());

    p.zero_grad();
    opt.step();
    CHECK(p[0] == 1.0f);
    CHECK(p[1] == -2.0f);

    // Moments from a nonzero gradient decay once the gradient is gone.
    for (auto& g : p.mutable_grad()) g = 1.0f;
    opt.step();
    const auto m1 = opt.state().first_moment[0][0];
    p.zero_grad();
    opt.step();
    CHECK(std::abs(opt.state().first_moment[0][0]) < std::abs(m1));

    auto q = Tensor::parameter({2}, {0.0f, 0.0f});
    Adam<float> constant({{"q", q}}, {0.01, 0.5, 0.999, 1e-8});
    float before = 0.0f;
    for (int i = 0; i < 200; ++i) {
        q.mutable_grad()[0] = 3.0f;
        q.mutable_grad()[1] = -0.2f;
        before = q[0];
        constant.step();
    }
    CHECK(before - q[0] == doctest::Approx(0.01).epsilon(0.02));
    CHECK(q[1] > 0.0f);

    auto run = [] {
        auto r = Tensor::parameter({4}, {0.1f, 0.2f, 0.3f, 0.4f});
        Adam<float> o({{"r", r}}, {});
        std::mt19937_64 rng(3);
        std::normal_distribution<float> g;
        for (int i = 0; i < 10; ++i) {
            r.zero_grad();
            for (auto& v : r.mutable_grad()) v = g(rng);
            o.step();
        }
        return std::vector<float>(r.values().begin(), r.values().end());
    };
    CHECK(run() == run());
}

TEST_CASE("adam state round-trips")
{
    auto p = Tensor::parameter({2}, {1.0f, 2.0f});
    Adam<float> a({{"p", p}}, {});
    p.zero_grad();
    p.mutable_grad()[0] = 0.5f;
    a.step();
    auto st = a.state();
    CHECK(st.step == 1);
    REQUIRE(st.first_moment.size() == 1);
    CHECK(st.first_moment[0].size() == 2);
    Adam<float> b({{"p", p}}, {});
    b.restore(st);
    CHECK(b.steps() == 1);
    CHECK(b.state().second_moment == st.second_moment);
}
