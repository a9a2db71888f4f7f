#include <benchmark/benchmark.h>

#include "seda/losses.hpp"
#include "seda/presets.hpp"

using namespace seda;

namespace {

Tensor<float> random_batch(const std::vector<int>& sample_shape, int n, Rng& rng) {
    std::vector<int> shape{n};
    shape.insert(shape.end(), sample_shape.begin(), sample_shape.end());
    Tensor<float> b(shape);
    for (auto& v : b) v = static_cast<float>(rng.normal(0.0, 1.0));
    return b;
}

void BM_forward_conv_small_eval(benchmark::State& state) {
    const int batch = static_cast<int>(state.range(0));
    const NetworkSpec net = make_architecture("conv_small", {16, 16, 1}, 10, 0.25);
    Rng rng(1);
    auto params = init_params<float>(net, rng);
    const Tensor<float> x = random_batch(net.input_shape, batch, rng);
    for (auto _ : state) {
        const Tensor<float> probs = forward(net, params, x, ForwardOptions{});
        benchmark::DoNotOptimize(probs.data());
    }
    state.SetItemsProcessed(state.iterations() * batch);
}
BENCHMARK(BM_forward_conv_small_eval)->Arg(16)->Arg(64);

void BM_forward_backward_conv_small(benchmark::State& state) {
    const int batch = static_cast<int>(state.range(0));
    const NetworkSpec net = make_architecture("conv_small", {16, 16, 1}, 10, 0.25);
    Rng rng(2);
    auto params = init_params<float>(net, rng);
    const Tensor<float> x = random_batch(net.input_shape, batch, rng);
    std::vector<int> labels(static_cast<std::size_t>(batch));
    for (auto& l : labels) l = rng.uniform_int(0, 9);
    ForwardOptions opts;
    opts.mode = Mode::Train;
    for (auto _ : state) {
        Rng drng(3);
        ForwardCache<float> cache;
        const Tensor<float> probs = forward(net, params, x, opts, &drng, &cache);
        backward(net, params, cache, cross_entropy_grad(probs, labels));
        params.zero_grads();
        benchmark::DoNotOptimize(probs.data());
    }
    state.SetItemsProcessed(state.iterations() * batch);
}
BENCHMARK(BM_forward_backward_conv_small)->Arg(64);

void BM_forward_mnist_usps(benchmark::State& state) {
    const NetworkSpec net = make_architecture("mnist_usps", {28, 28, 1}, 10, 1.0);
    Rng rng(4);
    auto params = init_params<float>(net, rng);
    const Tensor<float> x = random_batch(net.input_shape, 32, rng);
    for (auto _ : state) {
        const Tensor<float> probs = forward(net, params, x, ForwardOptions{});
        benchmark::DoNotOptimize(probs.data());
    }
    state.SetItemsProcessed(state.iterations() * 32);
}
BENCHMARK(BM_forward_mnist_usps);

} // namespace
