#include "seda/presets.hpp"

#include <cmath>

namespace seda {

namespace {

int scaled(int base, double w) { return std::max(1, static_cast<int>(std::lround(base * w))); }

} // namespace

double default_width_multiplier(const std::string& preset) {
    return preset == "conv_small" ? 0.25 : 1.0;
}

const std::vector<std::string>& architecture_presets() {
    static const std::vector<std::string> names = {"mnist_usps", "conv_small", "mlp"};
    return names;
}

NetworkSpec make_architecture(const std::string& preset, const std::vector<int>& input_shape,
                              int classes, double width_multiplier) {
    const double w = width_multiplier > 0.0 ? width_multiplier : default_width_multiplier(preset);
    NetworkSpec net;
    net.input_shape = input_shape;
    auto conv_bn_relu = [&](int kh, int kw, int ch, Padding pad) {
        net.layers.push_back(LayerSpec::conv2d(kh, kw, ch, pad));
        net.layers.push_back(LayerSpec::batch_norm());
        net.layers.push_back(LayerSpec::relu());
    };
    if (preset == "mnist_usps") {
        conv_bn_relu(5, 5, scaled(32, w), Padding::Valid);
        net.layers.push_back(LayerSpec::maxpool2x2());
        conv_bn_relu(3, 3, scaled(64, w), Padding::Valid);
        conv_bn_relu(3, 3, scaled(64, w), Padding::Valid);
        net.layers.push_back(LayerSpec::maxpool2x2());
        net.layers.push_back(LayerSpec::dropout(0.5));
        net.layers.push_back(LayerSpec::dense(scaled(256, w)));
        net.layers.push_back(LayerSpec::relu());
        net.layers.push_back(LayerSpec::softmax_head(classes));
    } else if (preset == "conv_small") {
        for (int i = 0; i < 3; ++i) conv_bn_relu(3, 3, scaled(128, w), Padding::Same);
        net.layers.push_back(LayerSpec::maxpool2x2());
        net.layers.push_back(LayerSpec::dropout(0.5));
        for (int i = 0; i < 3; ++i) conv_bn_relu(3, 3, scaled(256, w), Padding::Same);
        net.layers.push_back(LayerSpec::maxpool2x2());
        net.layers.push_back(LayerSpec::dropout(0.5));
        conv_bn_relu(3, 3, scaled(512, w), Padding::Valid);
        conv_bn_relu(1, 1, scaled(256, w), Padding::Valid);
        conv_bn_relu(1, 1, scaled(128, w), Padding::Valid);
        net.layers.push_back(LayerSpec::global_avg_pool());
        net.layers.push_back(LayerSpec::softmax_head(classes));
    } else if (preset == "mlp") {
        for (int i = 0; i < 2; ++i) {
            net.layers.push_back(LayerSpec::dense(scaled(256, w)));
            net.layers.push_back(LayerSpec::batch_norm());
            net.layers.push_back(LayerSpec::relu());
        }
        net.layers.push_back(LayerSpec::softmax_head(classes));
    } else {
        throw ConfigError("unknown architecture preset '" + preset + "'");
    }
    net.validate();
    return net;
}

} // namespace seda
