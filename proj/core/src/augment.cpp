#include "seda/augment.hpp"

#include <cmath>
#include <cstring>

namespace seda {

void AugmentConfig::validate() const {
    if (noise_sigma < 0.0f || affine_sigma < 0.0f)
        throw ConfigError("augment: sigmas must be non-negative");
    if (translate_range < 0) throw ConfigError("augment: translate_range must be non-negative");
    if (intensity_flip_prob < 0.0f || intensity_flip_prob > 1.0f)
        throw ConfigError("augment: intensity_flip_prob must lie in [0, 1]");
    if (intensity_scale[0] > intensity_scale[1])
        throw ConfigError("augment: intensity scale range is inverted");
    if (intensity_offset[0] > intensity_offset[1])
        throw ConfigError("augment: intensity offset range is inverted");
}

bool AugmentConfig::identity() const {
    return noise_sigma == 0.0f && translate_range == 0 && !hflip && affine_sigma == 0.0f &&
           intensity_flip_prob == 0.0f && intensity_scale == std::array<float, 2>{1.0f, 1.0f} &&
           intensity_offset == std::array<float, 2>{0.0f, 0.0f};
}

AugmentConfig AugmentConfig::minimal() {
    AugmentConfig c;
    c.noise_sigma = 0.1f;
    return c;
}

AugmentConfig AugmentConfig::tf(bool hflip) {
    AugmentConfig c = minimal();
    c.translate_range = 2;
    c.hflip = hflip;
    return c;
}

AugmentConfig AugmentConfig::tfa(bool hflip) {
    AugmentConfig c = tf(hflip);
    c.affine_sigma = 0.1f;
    return c;
}

AugmentConfig AugmentConfig::tfa_intensity(bool hflip) {
    AugmentConfig c = tfa(hflip);
    c.intensity_flip_prob = 0.5f;
    c.intensity_scale = {0.25f, 1.5f};
    c.intensity_offset = {-0.5f, 0.5f};
    return c;
}

AugmentConfig AugmentConfig::preset(const std::string& name, bool hflip) {
    if (name == "off") return AugmentConfig{};
    if (name == "minimal") return minimal();
    if (name == "tf") return tf(hflip);
    if (name == "tfa") return tfa(hflip);
    if (name == "tfa_intensity") return tfa_intensity(hflip);
    throw ConfigError("unknown augmentation preset '" + name + "'");
}

AffineSample sample_affine(const AugmentConfig& config, Rng& rng) {
    AffineSample a;
    if (config.affine_sigma > 0.0f) {
        const double s = config.affine_sigma;
        a.matrix[0] = static_cast<float>(1.0 + rng.normal(0.0, s));
        a.matrix[1] = static_cast<float>(rng.normal(0.0, s));
        a.matrix[2] = static_cast<float>(rng.normal(0.0, s));
        a.matrix[3] = static_cast<float>(1.0 + rng.normal(0.0, s));
    }
    if (config.translate_range > 0) {
        const int t = config.translate_range;
        if (config.affine_sigma > 0.0f) {
            a.translation[0] = static_cast<float>(rng.uniform(-t, t));
            a.translation[1] = static_cast<float>(rng.uniform(-t, t));
        } else {
            a.translation[0] = static_cast<float>(rng.uniform_int(-t, t));
            a.translation[1] = static_cast<float>(rng.uniform_int(-t, t));
        }
    }
    return a;
}

namespace {

bool integral_shift(const AffineSample& a, int& dx, int& dy) {
    if (a.matrix != std::array<float, 4>{1.0f, 0.0f, 0.0f, 1.0f}) return false;
    const float tx = a.translation[0];
    const float ty = a.translation[1];
    if (tx != std::floor(tx) || ty != std::floor(ty)) return false;
    dx = static_cast<int>(tx);
    dy = static_cast<int>(ty);
    return true;
}

// Exact pixel shift with zero fill; keeps integer translations lossless.
Tensor<float> shift_image(const Tensor<float>& image, int dx, int dy) {
    const int h = image.dim(0), w = image.dim(1), c = image.dim(2);
    Tensor<float> out(image.shape());
    for (int y = 0; y < h; ++y) {
        const int sy = y - dy;
        if (sy < 0 || sy >= h) continue;
        for (int x = 0; x < w; ++x) {
            const int sx = x - dx;
            if (sx < 0 || sx >= w) continue;
            std::memcpy(out.data() + (static_cast<std::size_t>(y) * w + x) * c,
                        image.data() + (static_cast<std::size_t>(sy) * w + sx) * c,
                        sizeof(float) * static_cast<std::size_t>(c));
        }
    }
    return out;
}

} // namespace

Tensor<float> apply_affine(const Tensor<float>& image, const AffineSample& a) {
    if (image.rank() != 3) throw ShapeError("apply_affine expects an H x W x C image");
    if (a.is_identity()) return image;
    int dx = 0, dy = 0;
    if (integral_shift(a, dx, dy)) return shift_image(image, dx, dy);

    const int h = image.dim(0), w = image.dim(1), c = image.dim(2);
    const double m00 = a.matrix[0], m01 = a.matrix[1], m10 = a.matrix[2], m11 = a.matrix[3];
    const double det = m00 * m11 - m01 * m10;
    if (std::abs(det) < 1e-8) return Tensor<float>(image.shape());  // degenerate draw: all fill
    const double i00 = m11 / det, i01 = -m01 / det, i10 = -m10 / det, i11 = m00 / det;
    const double cx = (w - 1) / 2.0, cy = (h - 1) / 2.0;

    Tensor<float> out(image.shape());
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            // dst = A (src - center) + center + t  =>  src = A^-1 (dst - center - t) + center
            const double rx = x - cx - a.translation[0];
            const double ry = y - cy - a.translation[1];
            const double sx = i00 * rx + i01 * ry + cx;
            const double sy = i10 * rx + i11 * ry + cy;
            const int x0 = static_cast<int>(std::floor(sx));
            const int y0 = static_cast<int>(std::floor(sy));
            const double fx = sx - x0;
            const double fy = sy - y0;
            for (int ci = 0; ci < c; ++ci) {
                auto sample = [&](int yy, int xx) -> double {
                    if (yy < 0 || yy >= h || xx < 0 || xx >= w) return 0.0;
                    return image[(static_cast<std::size_t>(yy) * w + xx) * c + ci];
                };
                const double v = (1.0 - fy) * ((1.0 - fx) * sample(y0, x0) + fx * sample(y0, x0 + 1)) +
                                 fy * ((1.0 - fx) * sample(y0 + 1, x0) + fx * sample(y0 + 1, x0 + 1));
                out[(static_cast<std::size_t>(y) * w + x) * c + ci] = static_cast<float>(v);
            }
        }
    }
    return out;
}

void intensity_augment(Tensor<float>& image, const AugmentConfig& config, Rng& rng) {
    float gain = 1.0f;
    if (config.intensity_flip_prob > 0.0f && rng.bernoulli(config.intensity_flip_prob)) gain = -1.0f;
    if (config.intensity_scale != std::array<float, 2>{1.0f, 1.0f})
        gain *= static_cast<float>(rng.uniform(config.intensity_scale[0], config.intensity_scale[1]));
    float offset = 0.0f;
    if (config.intensity_offset != std::array<float, 2>{0.0f, 0.0f})
        offset = static_cast<float>(
            rng.uniform(config.intensity_offset[0], config.intensity_offset[1]));
    if (gain == 1.0f && offset == 0.0f) return;
    for (auto& v : image) v = v * gain + offset;
}

Tensor<float> augment_view(const Tensor<float>& image, const AugmentConfig& config, Rng& rng) {
    config.validate();
    Tensor<float> out = image;
    if (config.hflip && rng.bernoulli(0.5)) {
        const int h = out.dim(0), w = out.dim(1), c = out.dim(2);
        Tensor<float> flipped(out.shape());
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x)
                std::memcpy(flipped.data() + (static_cast<std::size_t>(y) * w + x) * c,
                            out.data() + (static_cast<std::size_t>(y) * w + (w - 1 - x)) * c,
                            sizeof(float) * static_cast<std::size_t>(c));
        out = std::move(flipped);
    }
    if (config.affine_sigma > 0.0f || config.translate_range > 0)
        out = apply_affine(out, sample_affine(config, rng));
    intensity_augment(out, config, rng);
    if (config.noise_sigma > 0.0f)
        for (auto& v : out) v += static_cast<float>(rng.normal(0.0, config.noise_sigma));
    return out;
}

std::pair<Tensor<float>, Tensor<float>> augment_pair(const Tensor<float>& image,
                                                     const AugmentConfig& config, Rng& rng) {
    Tensor<float> student = augment_view(image, config, rng);
    Tensor<float> teacher = augment_view(image, config, rng);
    return {std::move(student), std::move(teacher)};
}

namespace {

template <typename PerSample>
void for_each_sample(const Tensor<float>& batch, PerSample&& fn) {
    const int n = batch.dim(0);
    const std::size_t stride = batch.size() / static_cast<std::size_t>(n);
    std::vector<int> sample_shape(batch.shape().begin() + 1, batch.shape().end());
#pragma omp parallel for schedule(static)
    for (int i = 0; i < n; ++i) {
        Tensor<float> sample(sample_shape);
        std::memcpy(sample.data(), batch.data() + static_cast<std::size_t>(i) * stride,
                    sizeof(float) * stride);
        fn(i, std::move(sample));
    }
}

} // namespace

Tensor<float> augment_batch(const Tensor<float>& batch, const AugmentConfig& config,
                            std::uint64_t base_seed) {
    Tensor<float> out(batch.shape());
    const std::size_t stride = batch.size() / static_cast<std::size_t>(batch.dim(0));
    for_each_sample(batch, [&](int i, Tensor<float> sample) {
        Rng rng(mix_seed({base_seed, tag("sample"), static_cast<std::uint64_t>(i)}));
        Tensor<float> view = augment_view(sample, config, rng);
        std::memcpy(out.data() + static_cast<std::size_t>(i) * stride, view.data(),
                    sizeof(float) * stride);
    });
    return out;
}

std::pair<Tensor<float>, Tensor<float>> augment_batch_pair(const Tensor<float>& batch,
                                                           const AugmentConfig& config,
                                                           std::uint64_t base_seed) {
    Tensor<float> student(batch.shape());
    Tensor<float> teacher(batch.shape());
    const std::size_t stride = batch.size() / static_cast<std::size_t>(batch.dim(0));
    for_each_sample(batch, [&](int i, Tensor<float> sample) {
        Rng rng(mix_seed({base_seed, tag("sample"), static_cast<std::uint64_t>(i)}));
        auto views = augment_pair(sample, config, rng);
        std::memcpy(student.data() + static_cast<std::size_t>(i) * stride, views.first.data(),
                    sizeof(float) * stride);
        std::memcpy(teacher.data() + static_cast<std::size_t>(i) * stride, views.second.data(),
                    sizeof(float) * stride);
    });
    return {std::move(student), std::move(teacher)};
}

} // namespace seda
