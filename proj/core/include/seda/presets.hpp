#pragma once

#include <string>
#include <vector>

#include "seda/net.hpp"

namespace seda {

// Architecture presets.
//   mnist_usps — the 28x28 mono digit architecture (conv 5x5x32 / 3x3x64 x2,
//                two max-pools, dropout 0.5, dense 256, softmax head).
//   conv_small — the 32x32-class conv net (three 3x3 blocks at 128/256 +
//                512-384 head via 1x1 convs and global pooling), scaled by a
//                width multiplier; the default multiplier 0.25 keeps CPU
//                training practical.
//   mlp        — two dense+batch-norm hidden layers for non-image data.
NetworkSpec make_architecture(const std::string& preset, const std::vector<int>& input_shape,
                              int classes, double width_multiplier = 0.0);

double default_width_multiplier(const std::string& preset);

const std::vector<std::string>& architecture_presets();

} // namespace seda
