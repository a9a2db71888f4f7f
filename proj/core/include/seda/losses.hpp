#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "seda/tensor.hpp"

namespace seda {

// Loss terms of the self-ensembling objective. All functions treat their
// probability inputs as (batch x classes) tensors whose rows sum to 1, and
// come in value/gradient pairs; gradients are with respect to the *student*
// probabilities — teacher predictions are constant targets.

inline constexpr double kProbClamp = 1e-7;

// Per-sample 0/1 confidence mask plus its mean.
struct ConfidenceMask {
    std::vector<std::uint8_t> mask;
    double pass_rate = 0.0;
};

enum class WeightMode : std::uint8_t { ConfidenceThreshold, GaussianRampup };

struct LossWeights {
    double lambda_se = 3.0;
    double lambda_cb = 0.005;
    WeightMode mode = WeightMode::ConfidenceThreshold;
    double confidence_threshold = 0.968;
    int rampup_epochs = 80;

    void validate() const {
        if (lambda_se < 0.0 || lambda_cb < 0.0)
            throw ConfigError("loss weights must be non-negative");
        if (mode == WeightMode::ConfidenceThreshold &&
            (confidence_threshold <= 0.0 || confidence_threshold > 1.0))
            throw ConfigError("confidence threshold must lie in (0, 1]");
        if (mode == WeightMode::GaussianRampup && rampup_epochs < 1)
            throw ConfigError("rampup epochs must be >= 1");
    }
};

namespace detail {
template <typename T>
T clamp_prob(T p) {
    const T lo = static_cast<T>(kProbClamp);
    const T hi = T{1} - lo;
    return p < lo ? lo : (p > hi ? hi : p);
}
} // namespace detail

// Mean over the batch of -log p[i, label[i]], probabilities clamped to
// [1e-7, 1 - 1e-7].
template <typename T>
T cross_entropy(const Tensor<T>& probs, std::span<const int> labels) {
    const int n = probs.dim(0);
    const int c = probs.dim(1);
    if (static_cast<int>(labels.size()) != n)
        throw ShapeError("cross_entropy: label count does not match batch size");
    T total{0};
    for (int i = 0; i < n; ++i) {
        const int y = labels[static_cast<std::size_t>(i)];
        if (y < 0 || y >= c)
            throw ShapeError("cross_entropy: label " + std::to_string(y) + " outside [0, " +
                             std::to_string(c) + ")");
        total += -std::log(detail::clamp_prob(probs[static_cast<std::size_t>(i) * c + y]));
    }
    return total / static_cast<T>(n);
}

template <typename T>
Tensor<T> cross_entropy_grad(const Tensor<T>& probs, std::span<const int> labels) {
    const int n = probs.dim(0);
    const int c = probs.dim(1);
    Tensor<T> grad({n, c});
    const T lo = static_cast<T>(kProbClamp);
    const T hi = T{1} - lo;
    for (int i = 0; i < n; ++i) {
        const int y = labels[static_cast<std::size_t>(i)];
        const T p = probs[static_cast<std::size_t>(i) * c + y];
        if (p > lo && p < hi)  // clamped probabilities have zero slope
            grad[static_cast<std::size_t>(i) * c + y] = -T{1} / (p * static_cast<T>(n));
    }
    return grad;
}

// mask[i] = 1 iff max_j teacher_probs[i, j] > threshold (strictly greater).
template <typename T>
ConfidenceMask confidence_mask(const Tensor<T>& teacher_probs, double threshold) {
    const int n = teacher_probs.dim(0);
    const int c = teacher_probs.dim(1);
    ConfidenceMask out;
    out.mask.resize(static_cast<std::size_t>(n));
    int passed = 0;
    for (int i = 0; i < n; ++i) {
        T conf = teacher_probs[static_cast<std::size_t>(i) * c];
        for (int j = 1; j < c; ++j)
            conf = std::max(conf, teacher_probs[static_cast<std::size_t>(i) * c + j]);
        const bool pass = static_cast<double>(conf) > threshold;
        out.mask[static_cast<std::size_t>(i)] = pass ? 1 : 0;
        passed += pass ? 1 : 0;
    }
    out.pass_rate = n > 0 ? static_cast<double>(passed) / static_cast<double>(n) : 0.0;
    return out;
}

// (1/N) sum_i mask[i] * (1/C) sum_j (student_ij - teacher_ij)^2.
// Masked samples contribute zero but remain in the denominator.
template <typename T>
T self_ensembling_loss(const Tensor<T>& student_probs, const Tensor<T>& teacher_probs,
                       const ConfidenceMask& mask) {
    if (!student_probs.same_shape(teacher_probs))
        throw ShapeError("self_ensembling_loss: student/teacher shapes differ");
    const int n = student_probs.dim(0);
    const int c = student_probs.dim(1);
    T total{0};
    for (int i = 0; i < n; ++i) {
        if (!mask.mask[static_cast<std::size_t>(i)]) continue;
        T row{0};
        for (int j = 0; j < c; ++j) {
            const T d = student_probs[static_cast<std::size_t>(i) * c + j] -
                        teacher_probs[static_cast<std::size_t>(i) * c + j];
            row += d * d;
        }
        total += row;
    }
    return total / static_cast<T>(n) / static_cast<T>(c);
}

template <typename T>
Tensor<T> self_ensembling_grad(const Tensor<T>& student_probs, const Tensor<T>& teacher_probs,
                               const ConfidenceMask& mask) {
    const int n = student_probs.dim(0);
    const int c = student_probs.dim(1);
    Tensor<T> grad({n, c});
    const T scale = T{2} / (static_cast<T>(n) * static_cast<T>(c));
    for (int i = 0; i < n; ++i) {
        if (!mask.mask[static_cast<std::size_t>(i)]) continue;
        for (int j = 0; j < c; ++j) {
            const std::size_t at = static_cast<std::size_t>(i) * c + j;
            grad[at] = scale * (student_probs[at] - teacher_probs[at]);
        }
    }
    return grad;
}

// Binary cross-entropy between the batch-mean class distribution and the
// uniform distribution, averaged over classes.
template <typename T>
T class_balance_loss(const Tensor<T>& student_probs) {
    const int n = student_probs.dim(0);
    const int c = student_probs.dim(1);
    if (n < 1) throw ShapeError("class_balance_loss: empty batch");
    const T u = T{1} / static_cast<T>(c);
    T total{0};
    for (int j = 0; j < c; ++j) {
        T mean{0};
        for (int i = 0; i < n; ++i) mean += student_probs[static_cast<std::size_t>(i) * c + j];
        mean = detail::clamp_prob(mean / static_cast<T>(n));
        total += -(u * std::log(mean) + (T{1} - u) * std::log(T{1} - mean));
    }
    return total / static_cast<T>(c);
}

template <typename T>
Tensor<T> class_balance_grad(const Tensor<T>& student_probs) {
    const int n = student_probs.dim(0);
    const int c = student_probs.dim(1);
    Tensor<T> grad({n, c});
    const T u = T{1} / static_cast<T>(c);
    const T lo = static_cast<T>(kProbClamp);
    const T hi = T{1} - lo;
    for (int j = 0; j < c; ++j) {
        T mean{0};
        for (int i = 0; i < n; ++i) mean += student_probs[static_cast<std::size_t>(i) * c + j];
        mean /= static_cast<T>(n);
        if (mean <= lo || mean >= hi) continue;  // clamped: zero slope
        const T dmean = -(u / mean - (T{1} - u) / (T{1} - mean)) / static_cast<T>(c);
        const T per_sample = dmean / static_cast<T>(n);
        for (int i = 0; i < n; ++i) grad[static_cast<std::size_t>(i) * c + j] = per_sample;
    }
    return grad;
}

// Gaussian ramp-up weight exp(-5 (1 - t)^2) with t = min(epoch/ramp, 1).
inline double rampup_weight(int epoch, int ramp_epochs) {
    const double t = std::min(static_cast<double>(epoch) / static_cast<double>(ramp_epochs), 1.0);
    return std::exp(-5.0 * (1.0 - t) * (1.0 - t));
}

// Total training loss.
//   confidence_threshold: ce + lambda_se * se + lambda_cb * pass_rate * cb
//   gaussian_rampup:      ce + w(epoch) * lambda_se * se     (cb omitted)
inline double combine_losses(double ce, double se, double cb, const LossWeights& weights,
                             double pass_rate, int epoch) {
    if (weights.mode == WeightMode::GaussianRampup)
        return ce + rampup_weight(epoch, weights.rampup_epochs) * weights.lambda_se * se;
    return ce + weights.lambda_se * se + weights.lambda_cb * pass_rate * cb;
}

} // namespace seda
