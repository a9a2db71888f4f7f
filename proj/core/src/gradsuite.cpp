#include "seda/gradsuite.hpp"

#include "seda/losses.hpp"
#include "seda/presets.hpp"

namespace seda {

namespace {

Tensor<double> random_batch(const std::vector<int>& sample_shape, int n, Rng& rng) {
    std::vector<int> shape;
    shape.push_back(n);
    shape.insert(shape.end(), sample_shape.begin(), sample_shape.end());
    Tensor<double> batch(shape);
    for (auto& v : batch) v = rng.normal(0.0, 1.0);
    return batch;
}

std::vector<int> random_labels(int n, int classes, Rng& rng) {
    std::vector<int> labels(static_cast<std::size_t>(n));
    for (auto& l : labels) l = rng.uniform_int(0, classes - 1);
    return labels;
}

// Random rows on the simplex, used as a frozen teacher prediction batch.
Tensor<double> random_probs(int n, int c, Rng& rng) {
    Tensor<double> probs({n, c});
    for (int i = 0; i < n; ++i) {
        double sum = 0.0;
        for (int j = 0; j < c; ++j) {
            const double v = rng.uniform() + 1e-3;
            probs[static_cast<std::size_t>(i) * c + j] = v;
            sum += v;
        }
        for (int j = 0; j < c; ++j) probs[static_cast<std::size_t>(i) * c + j] /= sum;
    }
    return probs;
}

GradSuiteEntry run_case(const std::string& name, const NetworkSpec& net, int seeds,
                        std::size_t coords_per_tensor, bool combined_loss) {
    GradSuiteEntry entry;
    entry.name = name;
    const int n = 4;
    const int classes = net.class_count();
    for (int seed = 0; seed < seeds; ++seed) {
        Rng rng(mix_seed({tag("gradsuite"), tag(name), static_cast<std::uint64_t>(seed)}));
        ParamStore<double> params = init_params<double>(net, rng);
        const Tensor<double> batch = random_batch(net.input_shape, n, rng);
        const std::vector<int> labels = random_labels(n, classes, rng);
        const std::uint64_t dropout_seed = rng.next_u64();

        GradCheckReport report;
        if (!combined_loss) {
            auto loss = [&](const Tensor<double>& probs) { return cross_entropy<double>(probs, labels); };
            auto dloss = [&](const Tensor<double>& probs) {
                return cross_entropy_grad<double>(probs, labels);
            };
            report = gradcheck(net, params, batch, loss, dloss, kGradCheckStep, Mode::Train,
                               dropout_seed, coords_per_tensor, &rng);
        } else {
            // Frozen teacher targets and confidence mask: the full objective
            // as a function of the student probabilities alone.
            const Tensor<double> teacher = random_probs(n, classes, rng);
            ConfidenceMask mask = confidence_mask(teacher, 1.5 / classes);
            const double lambda_se = 3.0;
            const double lambda_cb = 0.005;
            const double pass_rate = mask.pass_rate;
            auto loss = [&, teacher, mask](const Tensor<double>& probs) {
                return cross_entropy<double>(probs, labels) +
                       lambda_se * self_ensembling_loss(probs, teacher, mask) +
                       lambda_cb * pass_rate * class_balance_loss(probs);
            };
            auto dloss = [&, teacher, mask](const Tensor<double>& probs) {
                Tensor<double> g = cross_entropy_grad<double>(probs, labels);
                const Tensor<double> gse = self_ensembling_grad(probs, teacher, mask);
                const Tensor<double> gcb = class_balance_grad(probs);
                for (std::size_t i = 0; i < g.size(); ++i)
                    g[i] += lambda_se * gse[i] + lambda_cb * pass_rate * gcb[i];
                return g;
            };
            report = gradcheck(net, params, batch, loss, dloss, kGradCheckStep, Mode::Train,
                               dropout_seed, coords_per_tensor, &rng);
        }
        entry.max_rel_err = std::max(entry.max_rel_err, report.max_rel_err);
        entry.coords_checked += report.coords_checked;
    }
    return entry;
}

} // namespace

std::vector<GradSuiteEntry> gradcheck_layer_suite(int seeds) {
    struct Case {
        const char* name;
        NetworkSpec net;
    };
    std::vector<Case> cases;
    auto add = [&](const char* name, std::vector<int> input, std::vector<LayerSpec> layers) {
        NetworkSpec net;
        net.input_shape = std::move(input);
        net.layers = std::move(layers);
        net.layers.push_back(LayerSpec::softmax_head(3));
        cases.push_back({name, std::move(net)});
    };
    add("dense", {5}, {LayerSpec::dense(4)});
    add("conv2d_valid", {5, 6, 2}, {LayerSpec::conv2d(3, 3, 4, Padding::Valid)});
    add("conv2d_same", {5, 6, 2}, {LayerSpec::conv2d(3, 3, 4, Padding::Same)});
    add("maxpool2x2", {6, 6, 2},
        {LayerSpec::conv2d(3, 3, 3, Padding::Valid), LayerSpec::maxpool2x2()});
    add("global_avg_pool", {6, 6, 2},
        {LayerSpec::conv2d(3, 3, 3, Padding::Valid), LayerSpec::global_avg_pool()});
    add("batch_norm_dense", {6}, {LayerSpec::dense(6), LayerSpec::batch_norm()});
    add("batch_norm_conv", {5, 5, 2},
        {LayerSpec::conv2d(3, 3, 4, Padding::Same), LayerSpec::batch_norm()});
    add("dropout", {6}, {LayerSpec::dense(6), LayerSpec::relu(), LayerSpec::dropout(0.5)});
    add("relu", {6}, {LayerSpec::dense(6), LayerSpec::relu()});
    add("softmax_head", {6}, {});

    std::vector<GradSuiteEntry> results;
    for (const auto& c : cases) results.push_back(run_case(c.name, c.net, seeds, 0, false));
    return results;
}

GradSuiteEntry gradcheck_preset(const std::string& preset, int seeds,
                                std::size_t coords_per_tensor) {
    std::vector<int> input_shape;
    double width = 0.125;
    if (preset == "mnist_usps") {
        input_shape = {28, 28, 1};
    } else if (preset == "conv_small") {
        input_shape = {12, 12, 1};
        width = 0.0625;
    } else if (preset == "mlp") {
        input_shape = {6, 6, 1};
    } else {
        throw ConfigError("gradcheck: unknown preset '" + preset + "'");
    }
    const NetworkSpec net = make_architecture(preset, input_shape, 5, width);
    return run_case(preset, net, seeds, coords_per_tensor, true);
}

} // namespace seda
