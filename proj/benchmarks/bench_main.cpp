#include "cdaae/datasets.hpp"
#include "cdaae/nets.hpp"
#include "cdaae/ops.hpp"
#include "cdaae/trainer.hpp"

#include <benchmark/benchmark.h>

#include <random>

using namespace cdaae;

namespace {

std::vector<float> noise(std::size_t n, std::uint64_t seed)
{
    std::mt19937_64 rng(seed);
    std::normal_distribution<float> d(0.0f, 0.1f);
    std::vector<float> v(n);
    for (auto& x : v) x = d(rng);
    return v;
}

void BM_Conv2dForwardBackward(benchmark::State& state)
{
    const auto c = static_cast<std::size_t>(state.range(0));
    auto x = Tensor::parameter({32, c, 16, 16}, noise(32 * c * 256, 1));
    auto k = Tensor::parameter({2 * c, c, 4, 4}, noise(2 * c * c * 16, 2));
    for (auto _ : state) {
        auto y = sum(conv2d(x, k, 2, 1));
        backward(y);
        benchmark::DoNotOptimize(k.grad().data());
    }
}
BENCHMARK(BM_Conv2dForwardBackward)->Arg(16)->Arg(64)->Unit(benchmark::kMillisecond);

void BM_DenseForward(benchmark::State& state)
{
    const auto n = static_cast<std::size_t>(state.range(0));
    Tensor x({64, n}, noise(64 * n, 3));
    Tensor w({n, n}, noise(n * n, 4));
    Tensor b({n}, 0.0f);
    for (auto _ : state) benchmark::DoNotOptimize(dense(x, w, b).values().data());
    state.SetItemsProcessed(state.iterations() * 2 * 64 * n * n);
}
BENCHMARK(BM_DenseForward)->Arg(128)->Arg(512);

void BM_EncodeBatch(benchmark::State& state)
{
    NetConfig cfg;
    cfg.width = 1.0 / static_cast<double>(state.range(0));
    NetworkSet nets(cfg, 1);
    Tensor x({32, kImageChannels, kImageSize, kImageSize}, noise(32 * 3 * 1024, 5));
    for (auto _ : state) benchmark::DoNotOptimize(nets.encode_content(x, Mode::eval).values().data());
}
BENCHMARK(BM_EncodeBatch)->Arg(4)->Arg(1)->Unit(benchmark::kMillisecond);

void BM_TrainStep(benchmark::State& state)
{
    SynthOptions so;
    so.train_per_class = 10;
    so.test_per_class = 1;
    const auto data = synth_pair(so);
    TrainConfig cfg;
    cfg.net.width = 0.25;
    cfg.batch_size = 32;
    Trainer trainer(cfg, data);
    for (auto _ : state) benchmark::DoNotOptimize(trainer.step().get("rec"));
}
BENCHMARK(BM_TrainStep)->Unit(benchmark::kMillisecond);

} // namespace

BENCHMARK_MAIN();
