#pragma once

#include <algorithm>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "seda/rng.hpp"
#include "seda/tensor.hpp"

namespace seda {

enum class LayerKind : std::uint8_t {
    Dense,
    Conv2d,
    MaxPool2x2,
    GlobalAvgPool,
    BatchNorm,
    Dropout,
    Relu,
    SoftmaxHead,
};

enum class Padding : std::uint8_t { Valid, Same };

const char* layer_kind_name(LayerKind kind);

// One layer descriptor. Only the fields relevant to `kind` are meaningful.
struct LayerSpec {
    LayerKind kind = LayerKind::Relu;
    int units = 0;     // dense
    int kh = 0;        // conv kernel height
    int kw = 0;        // conv kernel width
    int channels = 0;  // conv output channels
    Padding padding = Padding::Valid;
    double rate = 0.0;          // dropout
    int classes = 0;            // softmax head
    double bn_momentum = 0.01;  // weight of the fresh batch statistic
    double bn_epsilon = 1e-5;

    static LayerSpec dense(int units);
    static LayerSpec conv2d(int kh, int kw, int channels, Padding padding = Padding::Valid);
    static LayerSpec maxpool2x2();
    static LayerSpec global_avg_pool();
    static LayerSpec batch_norm(double momentum = 0.01);
    static LayerSpec dropout(double rate);
    static LayerSpec relu();
    static LayerSpec softmax_head(int classes);

    bool operator==(const LayerSpec&) const = default;
};

// Ordered layer list plus the per-sample input shape (H, W, C).
// validate() chains shapes through every layer and requires exactly one
// softmax head in the final position.
struct NetworkSpec {
    std::vector<int> input_shape;
    std::vector<LayerSpec> layers;

    void validate() const;
    // Per-layer output shape of a single sample (batch dimension omitted).
    std::vector<std::vector<int>> layer_output_shapes() const;
    int class_count() const;

    bool operator==(const NetworkSpec&) const = default;
};

// One named parameter tensor with its gradient and Adam moments.
// Non-trainable entries (batch-norm running statistics) participate in EMA
// updates and checkpoints but are skipped by the optimizer.
template <typename T>
struct ParamEntry {
    std::string name;
    bool trainable = true;
    Tensor<T> value;
    Tensor<T> grad;
    Tensor<T> adam_m;
    Tensor<T> adam_v;
};

template <typename T>
struct ParamStore {
    std::vector<ParamEntry<T>> entries;
    std::int64_t step_count = 0;

    ParamEntry<T>& find(std::string_view name) {
        for (auto& e : entries)
            if (e.name == name) return e;
        throw ShapeError("no parameter named '" + std::string(name) + "'");
    }

    const ParamEntry<T>& find(std::string_view name) const {
        for (const auto& e : entries)
            if (e.name == name) return e;
        throw ShapeError("no parameter named '" + std::string(name) + "'");
    }

    bool layout_matches(const ParamStore& other) const {
        if (entries.size() != other.entries.size()) return false;
        for (std::size_t i = 0; i < entries.size(); ++i) {
            if (entries[i].name != other.entries[i].name) return false;
            if (entries[i].trainable != other.entries[i].trainable) return false;
            if (entries[i].value.shape() != other.entries[i].value.shape()) return false;
        }
        return true;
    }

    void zero_grads() {
        for (auto& e : entries)
            std::fill(e.grad.begin(), e.grad.end(), T{0});
    }

    template <typename U>
    ParamStore<U> astype() const {
        ParamStore<U> out;
        out.step_count = step_count;
        out.entries.reserve(entries.size());
        for (const auto& e : entries)
            out.entries.push_back({e.name, e.trainable, e.value.template astype<U>(),
                                   e.grad.template astype<U>(), e.adam_m.template astype<U>(),
                                   e.adam_v.template astype<U>()});
        return out;
    }
};

// He-uniform weights, gamma=1/beta=0, running stats (0, 1), zero moments.
template <typename T>
ParamStore<T> init_params(const NetworkSpec& spec, Rng& rng);

enum class Mode : std::uint8_t { Train, Eval };

struct ForwardOptions {
    Mode mode = Mode::Eval;
    // Train-mode batch norm writes momentum-blended batch statistics into the
    // running entries unless this is cleared (teacher passes, gradient checks).
    bool update_running_stats = true;
};

// Per-layer forward records needed by backward().
template <typename T>
struct LayerTrace {
    Tensor<T> a;             // primary saved tensor (layer input / im2col / xhat / probs)
    Tensor<T> b;             // secondary saved tensor (dropout multipliers, bn invstd, ...)
    std::vector<int> in_shape;
    std::vector<int> out_shape;
    std::vector<std::int64_t> indices;  // maxpool argmax positions
};

template <typename T>
struct ForwardCache {
    const void* params_id = nullptr;
    Mode mode = Mode::Eval;
    std::vector<LayerTrace<T>> traces;
};

// Runs the network on an NHWC batch (or (N,F) for dense-only nets) and
// returns class probabilities of shape (N, classes). A cache is recorded only
// when `cache` is non-null; backward() requires a train-mode cache.
// `rng` supplies dropout masks and must be non-null for train mode when the
// network contains dropout with rate > 0.
template <typename T>
Tensor<T> forward(const NetworkSpec& spec, ParamStore<T>& params, const Tensor<T>& batch,
                  const ForwardOptions& opts, Rng* rng = nullptr,
                  ForwardCache<T>* cache = nullptr);

// Accumulates dLoss/dparam into params.grad for every trainable entry, given
// the gradient of the loss with respect to the returned probabilities.
template <typename T>
void backward(const NetworkSpec& spec, ParamStore<T>& params, const ForwardCache<T>& cache,
              const Tensor<T>& dprobs);

extern template Tensor<float> forward<float>(const NetworkSpec&, ParamStore<float>&,
                                             const Tensor<float>&, const ForwardOptions&, Rng*,
                                             ForwardCache<float>*);
extern template Tensor<double> forward<double>(const NetworkSpec&, ParamStore<double>&,
                                               const Tensor<double>&, const ForwardOptions&, Rng*,
                                               ForwardCache<double>*);
extern template void backward<float>(const NetworkSpec&, ParamStore<float>&,
                                     const ForwardCache<float>&, const Tensor<float>&);
extern template void backward<double>(const NetworkSpec&, ParamStore<double>&,
                                      const ForwardCache<double>&, const Tensor<double>&);
extern template ParamStore<float> init_params<float>(const NetworkSpec&, Rng&);
extern template ParamStore<double> init_params<double>(const NetworkSpec&, Rng&);

} // namespace seda
