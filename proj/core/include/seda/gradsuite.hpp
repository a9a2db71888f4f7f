#pragma once

#include <string>
#include <vector>

#include "seda/gradcheck.hpp"

namespace seda {

// Canned 64-bit gradient checks used by `seda gradcheck` and the acceptance
// suite: per-layer-type micro networks (every coordinate checked) and the
// architecture presets at reduced width (sampled coordinates), both against
// the central-difference oracle with h = 1e-5.

struct GradSuiteEntry {
    std::string name;
    double max_rel_err = 0.0;
    std::size_t coords_checked = 0;
};

inline constexpr double kGradCheckStep = 1e-5;
inline constexpr double kGradCheckTolerance = 1e-4;

// One tiny network per layer type, trained-mode batch statistics, fixed
// dropout masks; cross-entropy loss against random labels. Full-coordinate
// finite differences, `seeds` random instances each.
std::vector<GradSuiteEntry> gradcheck_layer_suite(int seeds);

// One entry per architecture preset at reduced width, checked under the full
// combined objective (cross-entropy + weighted self-ensembling + weighted
// class balance against a frozen teacher batch and mask).
GradSuiteEntry gradcheck_preset(const std::string& preset, int seeds,
                                std::size_t coords_per_tensor);

} // namespace seda
