#pragma once

#include <cmath>

#include "seda/net.hpp"

namespace seda {

struct AdamConfig {
    double lr = 0.001;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

// Bias-corrected Adam over the trainable entries. Gradients are left intact;
// callers zero them between iterations.
template <typename T>
void adam_step(ParamStore<T>& params, const AdamConfig& cfg) {
    params.step_count += 1;
    const double t = static_cast<double>(params.step_count);
    const T bc1 = static_cast<T>(1.0 - std::pow(cfg.beta1, t));
    const T bc2 = static_cast<T>(1.0 - std::pow(cfg.beta2, t));
    const T b1 = static_cast<T>(cfg.beta1);
    const T b2 = static_cast<T>(cfg.beta2);
    const T lr = static_cast<T>(cfg.lr);
    const T eps = static_cast<T>(cfg.epsilon);
    for (auto& e : params.entries) {
        if (!e.trainable) continue;
        for (std::size_t i = 0; i < e.value.size(); ++i) {
            const T g = e.grad[i];
            e.adam_m[i] = b1 * e.adam_m[i] + (T{1} - b1) * g;
            e.adam_v[i] = b2 * e.adam_v[i] + (T{1} - b2) * g * g;
            const T mhat = e.adam_m[i] / bc1;
            const T vhat = e.adam_v[i] / bc2;
            const T update = lr * mhat / (std::sqrt(vhat) + eps);
            if (!std::isfinite(static_cast<double>(update)))
                throw NumericError("non-finite Adam update for parameter " + e.name);
            e.value[i] -= update;
        }
    }
}

// teacher = alpha * teacher + (1 - alpha) * student, applied to every entry
// value: learnable weights and batch-norm running statistics alike. Adam
// moments and step counts are not blended; the teacher is never optimized.
template <typename T>
void ema_update(ParamStore<T>& teacher, const ParamStore<T>& student, double alpha) {
    if (alpha < 0.0 || alpha >= 1.0) throw ConfigError("EMA alpha must lie in [0, 1)");
    if (!teacher.layout_matches(student))
        throw ShapeError("teacher/student parameter layouts differ");
    const T a = static_cast<T>(alpha);
    for (std::size_t k = 0; k < teacher.entries.size(); ++k) {
        auto& tv = teacher.entries[k].value;
        const auto& sv = student.entries[k].value;
        for (std::size_t i = 0; i < tv.size(); ++i)
            tv[i] = a * tv[i] + (T{1} - a) * sv[i];
    }
}

} // namespace seda
