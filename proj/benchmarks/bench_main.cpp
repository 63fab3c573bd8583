// SPDX-License-Identifier: Apache-2.0
// Micro-benchmarks for the hot paths: conv layers, one training step, FID.
#include <benchmark/benchmark.h>

#include "maven/metrics.hpp"
#include "maven/training.hpp"

using namespace maven;

namespace {

void BM_ConvForwardBackward(benchmark::State& st) {
    const auto side = static_cast<std::size_t>(st.range(0));
    Rng init(1);
    Conv2d conv(16, 32, ConvGeometry{}, init, 0.05);
    const Tensor x = init.normal_tensor({32, side, side, 16});
    Rng rng(2);
    for (auto _ : st) {
        const Tensor y = conv.forward(x, PassContext::train(rng));
        benchmark::DoNotOptimize(conv.backward(y, true));
    }
    st.SetItemsProcessed(st.iterations() * 32);
}
BENCHMARK(BM_ConvForwardBackward)->Arg(8)->Arg(16)->Unit(benchmark::kMillisecond);

void BM_TrainStep(benchmark::State& st) {
    const auto k = static_cast<std::size_t>(st.range(0));
    auto data = std::make_shared<const DatasetSplit>(make_glyphs(512, 16, 0.15, 3));
    ModelSpec spec;
    spec.kind = ModelKind::maven;
    spec.network.latent_dim = 16;
    spec.network.image_shape = {16, 16, 1};
    spec.network.n_classes = 10;
    spec.network.widths = {8, 16};
    spec.ensemble = EnsembleConfig::uniform(k, EnsembleMode::mean);
    TrainingConfig cfg;
    cfg.batch_size = 64;
    ModelState state(spec, cfg);
    const SemiSupervisedView view = mask_labels(data, 0.1, 1);
    StreamBatchSource source(view, cfg.batch_size, 2);
    for (auto _ : st) benchmark::DoNotOptimize(train_step(state, source, cfg));
}
BENCHMARK(BM_TrainStep)->Arg(1)->Arg(3)->Unit(benchmark::kMillisecond);

void BM_Fid(benchmark::State& st) {
    const auto d = static_cast<std::size_t>(st.range(0));
    Rng rng(4);
    const GaussianStats a = compute_gaussian_stats(rng.normal_tensor({4 * d, d}));
    const GaussianStats b = compute_gaussian_stats(rng.normal_tensor({4 * d, d}));
    for (auto _ : st) benchmark::DoNotOptimize(compute_fid(a, b));
}
BENCHMARK(BM_Fid)->Arg(64)->Arg(256)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
