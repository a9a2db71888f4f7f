#include <benchmark/benchmark.h>

#include "seda/augment.hpp"

using namespace seda;

namespace {

void BM_augment_batch(benchmark::State& state) {
    const int batch = static_cast<int>(state.range(0));
    Rng rng(1);
    Tensor<float> images({batch, 16, 16, 1});
    for (auto& v : images) v = static_cast<float>(rng.normal(0.0, 1.0));
    const AugmentConfig cfg = AugmentConfig::tfa();
    std::uint64_t seed = 0;
    for (auto _ : state) {
        const Tensor<float> out = augment_batch(images, cfg, seed++);
        benchmark::DoNotOptimize(out.data());
    }
    state.SetItemsProcessed(state.iterations() * batch);
}
BENCHMARK(BM_augment_batch)->Arg(64)->Arg(256);

void BM_augment_pair_batch(benchmark::State& state) {
    Rng rng(2);
    Tensor<float> images({64, 16, 16, 1});
    for (auto& v : images) v = static_cast<float>(rng.normal(0.0, 1.0));
    const AugmentConfig cfg = AugmentConfig::tf();
    std::uint64_t seed = 0;
    for (auto _ : state) {
        auto views = augment_batch_pair(images, cfg, seed++);
        benchmark::DoNotOptimize(views.first.data());
    }
    state.SetItemsProcessed(state.iterations() * 64);
}
BENCHMARK(BM_augment_pair_batch);

void BM_apply_affine(benchmark::State& state) {
    Rng rng(3);
    Tensor<float> image({32, 32, 3});
    for (auto& v : image) v = static_cast<float>(rng.normal(0.0, 1.0));
    AugmentConfig cfg;
    cfg.affine_sigma = 0.1f;
    cfg.translate_range = 2;
    for (auto _ : state) {
        const AffineSample a = sample_affine(cfg, rng);
        const Tensor<float> out = apply_affine(image, a);
        benchmark::DoNotOptimize(out.data());
    }
}
BENCHMARK(BM_apply_affine);

} // namespace
