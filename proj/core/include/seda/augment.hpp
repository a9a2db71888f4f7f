#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <utility>

#include "seda/rng.hpp"
#include "seda/tensor.hpp"

namespace seda {

// Stochastic input augmentation. Images are single samples in HWC layout with
// standardized float values; every operation is a pure function of
// (input, config, rng state) and never changes the tensor shape.

struct AugmentConfig {
    float noise_sigma = 0.0f;        // additive Gaussian noise, standardized units
    int translate_range = 0;         // shifts drawn from [-t, t] per axis
    bool hflip = false;              // mirror with probability 1/2
    float affine_sigma = 0.0f;       // Eq-style random affine matrix entries
    float intensity_flip_prob = 0.0f;
    std::array<float, 2> intensity_scale{1.0f, 1.0f};
    std::array<float, 2> intensity_offset{0.0f, 0.0f};

    void validate() const;
    bool identity() const;

    // Gaussian pixel noise only.
    static AugmentConfig minimal();
    // Adds translations in [-2, 2]; horizontal flips where the data allows.
    static AugmentConfig tf(bool hflip = false);
    // Adds the random affine transform with sigma 0.1.
    static AugmentConfig tfa(bool hflip = false);
    // Adds intensity flips/scales/offsets for intensity-mismatched pairs.
    static AugmentConfig tfa_intensity(bool hflip = false);

    static AugmentConfig preset(const std::string& name, bool hflip = false);

    bool operator==(const AugmentConfig&) const = default;
};

// One draw of the geometric transform: a 2x2 matrix (row-major) and a pixel
// translation, applied about the image center.
struct AffineSample {
    std::array<float, 4> matrix{1.0f, 0.0f, 0.0f, 1.0f};
    std::array<float, 2> translation{0.0f, 0.0f};

    bool is_identity() const {
        return matrix == std::array<float, 4>{1.0f, 0.0f, 0.0f, 1.0f} &&
               translation == std::array<float, 2>{0.0f, 0.0f};
    }
};

// Diagonal entries 1 + N(0, sigma), off-diagonal N(0, sigma). Translations are
// real-valued when an affine matrix is in play and integer pixel shifts when
// only translate_range is set.
AffineSample sample_affine(const AugmentConfig& config, Rng& rng);

// Inverse warp with bilinear interpolation about the image center;
// out-of-bounds samples fill with 0. Identity samples return the input
// bit-exactly, as do pure integer translations.
Tensor<float> apply_affine(const Tensor<float>& image, const AffineSample& a);

// In order: sign flip with intensity_flip_prob, multiply by U[scale range],
// add U[offset range].
void intensity_augment(Tensor<float>& image, const AugmentConfig& config, Rng& rng);

// Full view pipeline: hflip coin, affine + translation, intensity, noise.
Tensor<float> augment_view(const Tensor<float>& image, const AugmentConfig& config, Rng& rng);

// Two independent views of the same sample (student first, teacher second).
std::pair<Tensor<float>, Tensor<float>> augment_pair(const Tensor<float>& image,
                                                     const AugmentConfig& config, Rng& rng);

// Augments every sample of an NHWC batch, deriving one rng per sample from
// (base_seed, sample index) so results do not depend on evaluation order.
Tensor<float> augment_batch(const Tensor<float>& batch, const AugmentConfig& config,
                            std::uint64_t base_seed);

// As augment_batch, but produces paired student/teacher views.
std::pair<Tensor<float>, Tensor<float>> augment_batch_pair(const Tensor<float>& batch,
                                                           const AugmentConfig& config,
                                                           std::uint64_t base_seed);

} // namespace seda
