#include <benchmark/benchmark.h>

#include "seda/presets.hpp"
#include "seda/trainer.hpp"

using namespace seda;

namespace {

void BM_train_iteration(benchmark::State& state) {
    SyntheticSpec spec;
    spec.n_train = 128;
    spec.n_test = 16;
    spec.seed = 1;
    spec.shift.rotation_deg = 25.0;
    spec.shift.intensity_invert = true;
    spec.shift.noise_sigma = 0.1;
    const SyntheticPair pair = gen_synthetic(spec);

    TrainSetup setup;
    setup.net = make_architecture("conv_small", {16, 16, 1}, 10, 0.25);
    setup.augment_source = AugmentConfig::tf(false);
    setup.augment_target = AugmentConfig::tf(false);
    setup.train.batch_size = 64;
    setup.train.seed = 7;

    Rng init_rng(mix_seed({setup.train.seed, tag("init")}));
    ParamStore<float> student = init_params<float>(setup.net, init_rng);
    ParamStore<float> teacher = student;

    std::vector<int> idx(64);
    for (int i = 0; i < 64; ++i) idx[static_cast<std::size_t>(i)] = i;
    const Tensor<float> src = pair.source_train.gather(idx);
    std::vector<int> labels(64);
    for (int i = 0; i < 64; ++i)
        labels[static_cast<std::size_t>(i)] =
            pair.source_train.labels[static_cast<std::size_t>(i)];
    const Tensor<float> tgt = pair.target_train.gather(idx);

    std::uint64_t it = 0;
    for (auto _ : state) {
        Rng rng(mix_seed({setup.train.seed, tag("bench"), it++}));
        const IterationRecord rec =
            train_iteration(setup.net, student, teacher, src, labels, tgt, setup.train,
                            setup.augment_source, setup.augment_target, 0, rng);
        benchmark::DoNotOptimize(rec.total);
    }
    state.SetItemsProcessed(state.iterations() * 64);
}
BENCHMARK(BM_train_iteration)->Unit(benchmark::kMillisecond);

void BM_gen_synthetic(benchmark::State& state) {
    SyntheticSpec spec;
    spec.n_train = 512;
    spec.n_test = 256;
    spec.shift.rotation_deg = 25.0;
    spec.shift.intensity_invert = true;
    std::uint64_t seed = 0;
    for (auto _ : state) {
        spec.seed = seed++;
        const SyntheticPair pair = gen_synthetic(spec);
        benchmark::DoNotOptimize(pair.source_train.images.data());
    }
    state.SetItemsProcessed(state.iterations() * (spec.n_train + spec.n_test) * 2);
}
BENCHMARK(BM_gen_synthetic)->Unit(benchmark::kMillisecond);

} // namespace
