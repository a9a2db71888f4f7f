#include <doctest.h>

#include <cmath>

#include "seda/gradcheck.hpp"
#include "seda/gradsuite.hpp"
#include "seda/losses.hpp"

using namespace seda;

namespace {

Tensor<double> random_batch(const std::vector<int>& sample_shape, int n, Rng& rng) {
    std::vector<int> shape{n};
    shape.insert(shape.end(), sample_shape.begin(), sample_shape.end());
    Tensor<double> b(shape);
    for (auto& v : b) v = rng.normal(0.0, 1.0);
    return b;
}

} // namespace

TEST_CASE("oracle recovers the analytic softmax derivative") {
    // single head, batch of one: p = softmax(x W + b). The derivative of
    // loss(probs) = probs[0] w.r.t. W[0][0] is x0 * p0 * (1 - p0).
    NetworkSpec net;
    net.input_shape = {2};
    net.layers = {LayerSpec::softmax_head(2)};
    Rng rng(31);
    auto params = init_params<double>(net, rng);
    Tensor<double> batch({1, 2}, {2.0, -0.5});
    auto loss = [](const Tensor<double>& probs) { return probs[0]; };

    const Tensor<double> probs = forward(net, params, batch, ForwardOptions{});
    const double p0 = probs[0];
    auto grads = finite_diff_grad(net, params, batch, loss, 1e-5, Mode::Eval);
    REQUIRE(grads.names[0] == "L0.w");
    CHECK(grads.grads[0][0] == doctest::Approx(2.0 * p0 * (1.0 - p0)).epsilon(1e-8));
}

TEST_CASE("oracle reports ~zero gradient at a quadratic minimum") {
    NetworkSpec net;
    net.input_shape = {3};
    net.layers = {LayerSpec::dense(4), LayerSpec::relu(), LayerSpec::softmax_head(3)};
    Rng rng(32);
    auto params = init_params<double>(net, rng);
    const Tensor<double> batch = random_batch(net.input_shape, 2, rng);
    const Tensor<double> at_minimum = forward(net, params, batch, ForwardOptions{});
    auto loss = [&](const Tensor<double>& probs) {
        double acc = 0.0;
        for (std::size_t i = 0; i < probs.size(); ++i) {
            const double d = probs[i] - at_minimum[i];
            acc += d * d;
        }
        return acc;
    };
    auto grads = finite_diff_grad(net, params, batch, loss, 1e-5, Mode::Eval);
    for (const auto& g : grads.grads)
        for (double v : g) CHECK(std::abs(v) <= 1e-6);
}

TEST_CASE("oracle rejects out-of-range steps") {
    NetworkSpec net;
    net.input_shape = {2};
    net.layers = {LayerSpec::softmax_head(2)};
    Rng rng(33);
    auto params = init_params<double>(net, rng);
    Tensor<double> batch({1, 2}, {1.0, 1.0});
    auto loss = [](const Tensor<double>& probs) { return probs[0]; };
    CHECK_THROWS_AS((void)finite_diff_grad(net, params, batch, loss, 1e-2), ConfigError);
    CHECK_THROWS_AS((void)finite_diff_grad(net, params, batch, loss, 1e-7), ConfigError);
}

TEST_CASE("zero upstream gradient produces zero parameter gradients") {
    NetworkSpec net;
    net.input_shape = {4, 4, 1};
    net.layers = {LayerSpec::conv2d(3, 3, 2, Padding::Valid), LayerSpec::relu(),
                  LayerSpec::softmax_head(3)};
    Rng rng(34);
    auto params = init_params<float>(net, rng);
    Tensor<float> batch({2, 4, 4, 1});
    for (auto& v : batch) v = static_cast<float>(rng.normal(0.0, 1.0));
    ForwardOptions opts;
    opts.mode = Mode::Train;
    ForwardCache<float> cache;
    const Tensor<float> probs = forward(net, params, batch, opts, nullptr, &cache);
    backward(net, params, cache, Tensor<float>(probs.shape()));
    for (const auto& e : params.entries)
        for (float g : e.grad) CHECK(g == 0.0f);
}

TEST_CASE("head dense gradient matches the hand-computed outer product") {
    // W = 0, b = 0, batch of one, C = 2: probs = (1/2, 1/2).
    // With upstream dprobs = (1, 0): dlogits = p .* (dp - <dp,p>)
    //   = (1/2 (1 - 1/2), 1/2 (0 - 1/2)) = (1/4, -1/4)
    // dW = x^T dlogits, db = dlogits.
    NetworkSpec net;
    net.input_shape = {2};
    net.layers = {LayerSpec::softmax_head(2)};
    Rng rng(35);
    auto params = init_params<float>(net, rng);
    for (auto& e : params.entries) std::fill(e.value.begin(), e.value.end(), 0.0f);
    Tensor<float> batch({1, 2}, {3.0f, -2.0f});
    ForwardOptions opts;
    opts.mode = Mode::Train;
    ForwardCache<float> cache;
    (void)forward(net, params, batch, opts, nullptr, &cache);
    Tensor<float> dprobs({1, 2}, {1.0f, 0.0f});
    backward(net, params, cache, dprobs);
    const auto& dw = params.find("L0.w").grad;  // shape (2 features, 2 classes)
    CHECK(dw[0] == doctest::Approx(3.0 * 0.25));
    CHECK(dw[1] == doctest::Approx(3.0 * -0.25));
    CHECK(dw[2] == doctest::Approx(-2.0 * 0.25));
    CHECK(dw[3] == doctest::Approx(-2.0 * -0.25));
    const auto& db = params.find("L0.b").grad;
    CHECK(db[0] == doctest::Approx(0.25));
    CHECK(db[1] == doctest::Approx(-0.25));
}

TEST_CASE("backward matches the oracle on a random three-layer dense net") {
    NetworkSpec net;
    net.input_shape = {6};
    net.layers = {LayerSpec::dense(8), LayerSpec::relu(), LayerSpec::dense(5), LayerSpec::relu(),
                  LayerSpec::softmax_head(4)};
    for (int seed = 0; seed < 20; ++seed) {
        Rng rng(mix_seed({tag("dense3"), static_cast<std::uint64_t>(seed)}));
        auto params = init_params<double>(net, rng);
        const Tensor<double> batch = random_batch(net.input_shape, 3, rng);
        std::vector<int> labels(3);
        for (auto& l : labels) l = rng.uniform_int(0, 3);
        auto loss = [&](const Tensor<double>& p) { return cross_entropy<double>(p, labels); };
        auto dloss = [&](const Tensor<double>& p) { return cross_entropy_grad<double>(p, labels); };
        const auto report = gradcheck(net, params, batch, loss, dloss, 1e-5, Mode::Train, 1);
        CHECK(report.max_rel_err <= 1e-4);
    }
}

TEST_CASE("layer suite stays under tolerance (reduced seeds)") {
    for (const auto& entry : gradcheck_layer_suite(4)) {
        INFO(entry.name);
        CHECK(entry.max_rel_err <= kGradCheckTolerance);
    }
}
