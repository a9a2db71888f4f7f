#include "seda/net.hpp"

#define EIGEN_DONT_PARALLELIZE 1
#include <Eigen/Dense>

#include <cmath>
#include <cstring>

namespace seda {

namespace {

template <typename T>
using MatCM = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::ColMajor>;
template <typename T>
using MatRM = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using VecX = Eigen::Matrix<T, Eigen::Dynamic, 1>;

template <typename T>
using MapCM = Eigen::Map<MatCM<T>>;
template <typename T>
using MapRM = Eigen::Map<MatRM<T>>;
template <typename T>
using CMapCM = Eigen::Map<const MatCM<T>>;
template <typename T>
using CMapRM = Eigen::Map<const MatRM<T>>;

int conv_out_extent(int in, int k, Padding pad) {
    return pad == Padding::Same ? in : in - k + 1;
}

int pad_before(int k, Padding pad) { return pad == Padding::Same ? (k - 1) / 2 : 0; }

std::int64_t volume(const std::vector<int>& shape) {
    std::int64_t v = 1;
    for (int d : shape) v *= d;
    return v;
}

// Flattened per-sample feature count, i.e. everything but the batch axis.
int feature_count(const std::vector<int>& batch_shape) {
    std::int64_t f = 1;
    for (std::size_t i = 1; i < batch_shape.size(); ++i) f *= batch_shape[i];
    return static_cast<int>(f);
}

template <typename T>
void check_layer_finite(const Tensor<T>& t, int layer_index, LayerKind kind) {
    if (!t.all_finite())
        throw NumericError("non-finite activations after layer " + std::to_string(layer_index) +
                           " (" + layer_kind_name(kind) + ")");
}

// ---- im2col ----------------------------------------------------------------
//
// Patch matrix layout: K = kh*kw*Cin rows, one column per output position,
// columns ordered sample-major (column n*P + p). Row index (ky*kw + kx)*Cin + c
// matches the (kh, kw, Cin, Cout) weight layout, so W maps to a col-major
// (Cout x K) matrix and the whole batch convolution is one GEMM.

template <typename T>
void im2col(const T* in, int h, int w, int c, int kh, int kw, int ph, int pw, int out_h, int out_w,
            T* cols) {
    const int K = kh * kw * c;
    std::int64_t col = 0;
    for (int oy = 0; oy < out_h; ++oy) {
        for (int ox = 0; ox < out_w; ++ox, ++col) {
            T* dst = cols + col * K;
            for (int ky = 0; ky < kh; ++ky) {
                const int iy = oy + ky - ph;
                for (int kx = 0; kx < kw; ++kx) {
                    const int ix = ox + kx - pw;
                    if (iy >= 0 && iy < h && ix >= 0 && ix < w) {
                        std::memcpy(dst, in + (static_cast<std::int64_t>(iy) * w + ix) * c,
                                    sizeof(T) * static_cast<std::size_t>(c));
                    } else {
                        std::memset(dst, 0, sizeof(T) * static_cast<std::size_t>(c));
                    }
                    dst += c;
                }
            }
        }
    }
}

template <typename T>
void col2im_add(const T* cols, int h, int w, int c, int kh, int kw, int ph, int pw, int out_h,
                int out_w, T* grad_in) {
    const int K = kh * kw * c;
    std::int64_t col = 0;
    for (int oy = 0; oy < out_h; ++oy) {
        for (int ox = 0; ox < out_w; ++ox, ++col) {
            const T* src = cols + col * K;
            for (int ky = 0; ky < kh; ++ky) {
                const int iy = oy + ky - ph;
                for (int kx = 0; kx < kw; ++kx) {
                    const int ix = ox + kx - pw;
                    if (iy >= 0 && iy < h && ix >= 0 && ix < w) {
                        T* dst = grad_in + (static_cast<std::int64_t>(iy) * w + ix) * c;
                        for (int ci = 0; ci < c; ++ci) dst[ci] += src[ci];
                    }
                    src += c;
                }
            }
        }
    }
}

// ---- per-layer parameter naming --------------------------------------------

std::string param_name(int layer_index, const char* role) {
    return "L" + std::to_string(layer_index) + "." + role;
}

} // namespace

const char* layer_kind_name(LayerKind kind) {
    switch (kind) {
        case LayerKind::Dense: return "dense";
        case LayerKind::Conv2d: return "conv2d";
        case LayerKind::MaxPool2x2: return "maxpool2x2";
        case LayerKind::GlobalAvgPool: return "global_avg_pool";
        case LayerKind::BatchNorm: return "batch_norm";
        case LayerKind::Dropout: return "dropout";
        case LayerKind::Relu: return "relu";
        case LayerKind::SoftmaxHead: return "softmax_head";
    }
    return "unknown";
}

LayerSpec LayerSpec::dense(int units) {
    LayerSpec s;
    s.kind = LayerKind::Dense;
    s.units = units;
    return s;
}

LayerSpec LayerSpec::conv2d(int kh, int kw, int channels, Padding padding) {
    LayerSpec s;
    s.kind = LayerKind::Conv2d;
    s.kh = kh;
    s.kw = kw;
    s.channels = channels;
    s.padding = padding;
    return s;
}

LayerSpec LayerSpec::maxpool2x2() {
    LayerSpec s;
    s.kind = LayerKind::MaxPool2x2;
    return s;
}

LayerSpec LayerSpec::global_avg_pool() {
    LayerSpec s;
    s.kind = LayerKind::GlobalAvgPool;
    return s;
}

LayerSpec LayerSpec::batch_norm(double momentum) {
    LayerSpec s;
    s.kind = LayerKind::BatchNorm;
    s.bn_momentum = momentum;
    return s;
}

LayerSpec LayerSpec::dropout(double rate) {
    LayerSpec s;
    s.kind = LayerKind::Dropout;
    s.rate = rate;
    return s;
}

LayerSpec LayerSpec::relu() {
    LayerSpec s;
    s.kind = LayerKind::Relu;
    return s;
}

LayerSpec LayerSpec::softmax_head(int classes) {
    LayerSpec s;
    s.kind = LayerKind::SoftmaxHead;
    s.classes = classes;
    return s;
}

std::vector<std::vector<int>> NetworkSpec::layer_output_shapes() const {
    if (input_shape.empty()) throw ShapeError("network input shape is empty");
    std::vector<std::vector<int>> shapes;
    shapes.reserve(layers.size());
    std::vector<int> cur = input_shape;
    for (std::size_t i = 0; i < layers.size(); ++i) {
        const LayerSpec& l = layers[i];
        const std::string where = "layer " + std::to_string(i) + " (" + layer_kind_name(l.kind) + ")";
        switch (l.kind) {
            case LayerKind::Dense: {
                if (l.units <= 0) throw ShapeError(where + ": units must be positive");
                cur = {l.units};
                break;
            }
            case LayerKind::Conv2d: {
                if (cur.size() != 3) throw ShapeError(where + ": needs an H x W x C input");
                if (l.kh <= 0 || l.kw <= 0 || l.channels <= 0)
                    throw ShapeError(where + ": bad kernel/channel sizes");
                const int oh = conv_out_extent(cur[0], l.kh, l.padding);
                const int ow = conv_out_extent(cur[1], l.kw, l.padding);
                if (oh <= 0 || ow <= 0)
                    throw ShapeError(where + ": kernel larger than input " +
                                     Tensor<float>::shape_string(cur));
                cur = {oh, ow, l.channels};
                break;
            }
            case LayerKind::MaxPool2x2: {
                if (cur.size() != 3) throw ShapeError(where + ": needs an H x W x C input");
                if (cur[0] < 2 || cur[1] < 2) throw ShapeError(where + ": input smaller than 2x2");
                cur = {cur[0] / 2, cur[1] / 2, cur[2]};
                break;
            }
            case LayerKind::GlobalAvgPool: {
                if (cur.size() != 3) throw ShapeError(where + ": needs an H x W x C input");
                cur = {cur[2]};
                break;
            }
            case LayerKind::BatchNorm:
            case LayerKind::Dropout:
            case LayerKind::Relu:
                break;  // shape preserved
            case LayerKind::SoftmaxHead: {
                if (l.classes < 2) throw ShapeError(where + ": needs at least 2 classes");
                cur = {l.classes};
                break;
            }
        }
        shapes.push_back(cur);
    }
    return shapes;
}

void NetworkSpec::validate() const {
    if (layers.empty()) throw ShapeError("network has no layers");
    int heads = 0;
    for (const auto& l : layers)
        if (l.kind == LayerKind::SoftmaxHead) ++heads;
    if (heads != 1) throw ShapeError("network must contain exactly one softmax_head");
    if (layers.back().kind != LayerKind::SoftmaxHead)
        throw ShapeError("softmax_head must be the final layer");
    for (const auto& l : layers) {
        if (l.kind == LayerKind::Dropout && (l.rate < 0.0 || l.rate >= 1.0))
            throw ShapeError("dropout rate must lie in [0, 1)");
        if (l.kind == LayerKind::BatchNorm && (l.bn_momentum <= 0.0 || l.bn_momentum >= 1.0))
            throw ShapeError("batch norm momentum must lie in (0, 1)");
    }
    (void)layer_output_shapes();  // throws on any chaining problem
}

int NetworkSpec::class_count() const {
    for (const auto& l : layers)
        if (l.kind == LayerKind::SoftmaxHead) return l.classes;
    throw ShapeError("network has no softmax_head");
}

template <typename T>
ParamStore<T> init_params(const NetworkSpec& spec, Rng& rng) {
    spec.validate();
    ParamStore<T> store;
    const auto shapes = spec.layer_output_shapes();
    std::vector<int> cur = spec.input_shape;
    for (std::size_t i = 0; i < spec.layers.size(); ++i) {
        const LayerSpec& l = spec.layers[i];
        const int idx = static_cast<int>(i);
        auto he_uniform = [&](Tensor<T>& w, int fan_in) {
            const double limit = std::sqrt(6.0 / static_cast<double>(fan_in));
            for (auto& v : w) v = static_cast<T>(rng.uniform(-limit, limit));
        };
        auto add_entry = [&](const char* role, std::vector<int> shape, bool trainable) -> Tensor<T>& {
            ParamEntry<T> e;
            e.name = param_name(idx, role);
            e.trainable = trainable;
            e.value = Tensor<T>(shape);
            e.grad = Tensor<T>(shape);
            e.adam_m = Tensor<T>(shape);
            e.adam_v = Tensor<T>(shape);
            store.entries.push_back(std::move(e));
            return store.entries.back().value;
        };
        switch (l.kind) {
            case LayerKind::Dense: {
                const int f = static_cast<int>(volume(cur));
                he_uniform(add_entry("w", {f, l.units}, true), f);
                add_entry("b", {l.units}, true);
                break;
            }
            case LayerKind::Conv2d: {
                const int cin = cur[2];
                he_uniform(add_entry("w", {l.kh, l.kw, cin, l.channels}, true), l.kh * l.kw * cin);
                add_entry("b", {l.channels}, true);
                break;
            }
            case LayerKind::BatchNorm: {
                const int c = cur.back();
                Tensor<T>& gamma = add_entry("gamma", {c}, true);
                std::fill(gamma.begin(), gamma.end(), T{1});
                add_entry("beta", {c}, true);
                add_entry("running_mean", {c}, false);
                Tensor<T>& rv = add_entry("running_var", {c}, false);
                std::fill(rv.begin(), rv.end(), T{1});
                break;
            }
            case LayerKind::SoftmaxHead: {
                const int f = static_cast<int>(volume(cur));
                he_uniform(add_entry("w", {f, l.classes}, true), f);
                add_entry("b", {l.classes}, true);
                break;
            }
            default:
                break;
        }
        cur = shapes[i];
    }
    return store;
}

namespace {

// ---- forward helpers --------------------------------------------------------

template <typename T>
Tensor<T> dense_forward(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b) {
    const int n = x.dim(0);
    const int f = feature_count(x.shape());
    const int units = w.dim(1);
    if (w.dim(0) != f)
        throw ShapeError("dense input features " + std::to_string(f) + " != weight rows " +
                         std::to_string(w.dim(0)));
    Tensor<T> out({n, units});
    CMapRM<T> xm(x.data(), n, f);
    CMapRM<T> wm(w.data(), f, units);
    MapRM<T> om(out.data(), n, units);
    om.noalias() = xm * wm;
    CMapRM<T> bm(b.data(), 1, units);
    om.rowwise() += bm.row(0);
    return out;
}

template <typename T>
void softmax_rows_inplace(Tensor<T>& logits) {
    const int n = logits.dim(0);
    const int c = logits.dim(1);
    for (int i = 0; i < n; ++i) {
        T* row = logits.data() + static_cast<std::int64_t>(i) * c;
        T mx = row[0];
        for (int j = 1; j < c; ++j) mx = std::max(mx, row[j]);
        T sum{0};
        for (int j = 0; j < c; ++j) {
            row[j] = std::exp(row[j] - mx);
            sum += row[j];
        }
        const T inv = T{1} / sum;
        for (int j = 0; j < c; ++j) row[j] *= inv;
    }
}

// Channel-wise batch statistics over every axis except the trailing one.
template <typename T>
void batch_channel_stats(const Tensor<T>& x, int channels, std::vector<T>& mean,
                         std::vector<T>& var) {
    const std::int64_t rows = static_cast<std::int64_t>(x.size()) / channels;
    mean.assign(static_cast<std::size_t>(channels), T{0});
    var.assign(static_cast<std::size_t>(channels), T{0});
    const T* p = x.data();
    for (std::int64_t r = 0; r < rows; ++r, p += channels)
        for (int c = 0; c < channels; ++c) mean[static_cast<std::size_t>(c)] += p[c];
    const T inv = T{1} / static_cast<T>(rows);
    for (auto& m : mean) m *= inv;
    p = x.data();
    for (std::int64_t r = 0; r < rows; ++r, p += channels)
        for (int c = 0; c < channels; ++c) {
            const T d = p[c] - mean[static_cast<std::size_t>(c)];
            var[static_cast<std::size_t>(c)] += d * d;
        }
    for (auto& v : var) v *= inv;
}

} // namespace

template <typename T>
Tensor<T> forward(const NetworkSpec& spec, ParamStore<T>& params, const Tensor<T>& batch,
                  const ForwardOptions& opts, Rng* rng, ForwardCache<T>* cache) {
    spec.validate();
    if (batch.rank() < 2) throw ShapeError("forward expects a batched input");
    {
        std::vector<int> sample_shape(batch.shape().begin() + 1, batch.shape().end());
        if (sample_shape != spec.input_shape)
            throw ShapeError("batch sample shape " + Tensor<T>::shape_string(sample_shape) +
                             " does not match network input " +
                             Tensor<T>::shape_string(spec.input_shape));
    }
    require_finite(batch, "network input");
    const bool train = opts.mode == Mode::Train;
    if (cache) {
        cache->params_id = &params;
        cache->mode = opts.mode;
        cache->traces.clear();
        cache->traces.resize(spec.layers.size());
    }

    const int n = batch.dim(0);
    Tensor<T> cur = batch;
    for (std::size_t li = 0; li < spec.layers.size(); ++li) {
        const LayerSpec& l = spec.layers[li];
        const int idx = static_cast<int>(li);
        LayerTrace<T>* tr = cache ? &cache->traces[li] : nullptr;
        if (tr) tr->in_shape = cur.shape();
        switch (l.kind) {
            case LayerKind::Dense:
            case LayerKind::SoftmaxHead: {
                const Tensor<T>& w = params.find(param_name(idx, "w")).value;
                const Tensor<T>& b = params.find(param_name(idx, "b")).value;
                Tensor<T> flat = cur.rank() == 2
                                     ? std::move(cur)
                                     : cur.reshaped({n, feature_count(cur.shape())});
                Tensor<T> out = dense_forward(flat, w, b);
                if (l.kind == LayerKind::SoftmaxHead) softmax_rows_inplace(out);
                if (tr) {
                    tr->a = std::move(flat);
                    if (l.kind == LayerKind::SoftmaxHead) tr->b = out;  // probs
                }
                cur = std::move(out);
                break;
            }
            case LayerKind::Conv2d: {
                const Tensor<T>& w = params.find(param_name(idx, "w")).value;
                const Tensor<T>& b = params.find(param_name(idx, "b")).value;
                const int h = cur.dim(1), wd = cur.dim(2), cin = cur.dim(3);
                const int ph = pad_before(l.kh, l.padding), pw = pad_before(l.kw, l.padding);
                const int oh = conv_out_extent(h, l.kh, l.padding);
                const int ow = conv_out_extent(wd, l.kw, l.padding);
                const int K = l.kh * l.kw * cin;
                const std::int64_t P = static_cast<std::int64_t>(oh) * ow;
                Tensor<T> cols({static_cast<int>(P * n), K});  // stored column-major as (K, n*P)
#pragma omp parallel for schedule(static)
                for (int s = 0; s < n; ++s)
                    im2col(cur.data() + static_cast<std::int64_t>(s) * h * wd * cin, h, wd, cin,
                           l.kh, l.kw, ph, pw, oh, ow, cols.data() + s * P * K);
                Tensor<T> out({n, oh, ow, l.channels});
                CMapCM<T> wm(w.data(), l.channels, K);
                CMapCM<T> cm(cols.data(), K, P * n);
                MapCM<T> om(out.data(), l.channels, P * n);
                om.noalias() = wm * cm;
                Eigen::Map<const VecX<T>> bv(b.data(), l.channels);
                om.colwise() += bv;
                if (tr) tr->a = std::move(cols);
                cur = std::move(out);
                break;
            }
            case LayerKind::MaxPool2x2: {
                const int h = cur.dim(1), wd = cur.dim(2), c = cur.dim(3);
                const int oh = h / 2, ow = wd / 2;
                Tensor<T> out({n, oh, ow, c});
                std::vector<std::int64_t> arg(out.size());
#pragma omp parallel for schedule(static)
                for (int s = 0; s < n; ++s) {
                    const std::int64_t in_base = static_cast<std::int64_t>(s) * h * wd * c;
                    const std::int64_t out_base = static_cast<std::int64_t>(s) * oh * ow * c;
                    for (int oy = 0; oy < oh; ++oy)
                        for (int ox = 0; ox < ow; ++ox)
                            for (int ci = 0; ci < c; ++ci) {
                                T best{};
                                std::int64_t best_at = -1;
                                for (int dy = 0; dy < 2; ++dy)
                                    for (int dx = 0; dx < 2; ++dx) {
                                        const std::int64_t at =
                                            in_base +
                                            ((static_cast<std::int64_t>(2 * oy + dy) * wd) +
                                             (2 * ox + dx)) * c + ci;
                                        if (best_at < 0 || cur[static_cast<std::size_t>(at)] > best) {
                                            best = cur[static_cast<std::size_t>(at)];
                                            best_at = at;
                                        }
                                    }
                                const std::int64_t oi =
                                    out_base + ((static_cast<std::int64_t>(oy) * ow) + ox) * c + ci;
                                out[static_cast<std::size_t>(oi)] = best;
                                arg[static_cast<std::size_t>(oi)] = best_at;
                            }
                }
                if (tr) tr->indices = std::move(arg);
                cur = std::move(out);
                break;
            }
            case LayerKind::GlobalAvgPool: {
                const int h = cur.dim(1), wd = cur.dim(2), c = cur.dim(3);
                const T inv = T{1} / static_cast<T>(h * wd);
                Tensor<T> out({n, c});
                for (int s = 0; s < n; ++s) {
                    const T* in = cur.data() + static_cast<std::int64_t>(s) * h * wd * c;
                    T* po = out.data() + static_cast<std::int64_t>(s) * c;
                    for (int p = 0; p < h * wd; ++p)
                        for (int ci = 0; ci < c; ++ci) po[ci] += in[p * c + ci];
                    for (int ci = 0; ci < c; ++ci) po[ci] *= inv;
                }
                cur = std::move(out);
                break;
            }
            case LayerKind::BatchNorm: {
                const int c = cur.shape().back();
                const Tensor<T>& gamma = params.find(param_name(idx, "gamma")).value;
                const Tensor<T>& beta = params.find(param_name(idx, "beta")).value;
                Tensor<T> out(cur.shape());
                const std::int64_t rows = static_cast<std::int64_t>(cur.size()) / c;
                if (train) {
                    std::vector<T> mean, var;
                    batch_channel_stats(cur, c, mean, var);
                    std::vector<T> invstd(static_cast<std::size_t>(c));
                    for (int ci = 0; ci < c; ++ci)
                        invstd[static_cast<std::size_t>(ci)] =
                            T{1} / std::sqrt(var[static_cast<std::size_t>(ci)] +
                                             static_cast<T>(l.bn_epsilon));
                    Tensor<T> xhat(cur.shape());
                    const T* pi = cur.data();
                    T* ph = xhat.data();
                    T* po = out.data();
                    for (std::int64_t r = 0; r < rows; ++r, pi += c, ph += c, po += c)
                        for (int ci = 0; ci < c; ++ci) {
                            const auto u = static_cast<std::size_t>(ci);
                            ph[ci] = (pi[ci] - mean[u]) * invstd[u];
                            po[ci] = gamma[u] * ph[ci] + beta[u];
                        }
                    if (opts.update_running_stats) {
                        Tensor<T>& rm = params.find(param_name(idx, "running_mean")).value;
                        Tensor<T>& rv = params.find(param_name(idx, "running_var")).value;
                        const T m = static_cast<T>(l.bn_momentum);
                        for (int ci = 0; ci < c; ++ci) {
                            const auto u = static_cast<std::size_t>(ci);
                            rm[u] = (T{1} - m) * rm[u] + m * mean[u];
                            rv[u] = (T{1} - m) * rv[u] + m * var[u];
                        }
                    }
                    if (tr) {
                        tr->a = std::move(xhat);
                        tr->b = Tensor<T>({c}, std::move(invstd));
                    }
                } else {
                    const Tensor<T>& rm = params.find(param_name(idx, "running_mean")).value;
                    const Tensor<T>& rv = params.find(param_name(idx, "running_var")).value;
                    std::vector<T> scale(static_cast<std::size_t>(c)), shift(static_cast<std::size_t>(c));
                    for (int ci = 0; ci < c; ++ci) {
                        const auto u = static_cast<std::size_t>(ci);
                        scale[u] = gamma[u] / std::sqrt(rv[u] + static_cast<T>(l.bn_epsilon));
                        shift[u] = beta[u] - scale[u] * rm[u];
                    }
                    const T* pi = cur.data();
                    T* po = out.data();
                    for (std::int64_t r = 0; r < rows; ++r, pi += c, po += c)
                        for (int ci = 0; ci < c; ++ci) {
                            const auto u = static_cast<std::size_t>(ci);
                            po[ci] = scale[u] * pi[ci] + shift[u];
                        }
                }
                cur = std::move(out);
                break;
            }
            case LayerKind::Dropout: {
                if (train && l.rate > 0.0) {
                    if (!rng)
                        throw ShapeError("train-mode forward through dropout requires an rng");
                    const T keep_scale = static_cast<T>(1.0 / (1.0 - l.rate));
                    Tensor<T> mask(cur.shape());
                    for (auto& m : mask) m = rng->uniform() >= l.rate ? keep_scale : T{0};
                    for (std::size_t i = 0; i < cur.size(); ++i) cur[i] *= mask[i];
                    if (tr) tr->a = std::move(mask);
                }
                break;
            }
            case LayerKind::Relu: {
                if (tr) tr->a = cur;  // pre-activation, used to mask the gradient
                for (auto& v : cur) v = v > T{0} ? v : T{0};
                break;
            }
        }
        if (tr) tr->out_shape = cur.shape();
        check_layer_finite(cur, idx, l.kind);
    }
    return cur;
}

template <typename T>
void backward(const NetworkSpec& spec, ParamStore<T>& params, const ForwardCache<T>& cache,
              const Tensor<T>& dprobs) {
    if (cache.params_id != &params)
        throw ShapeError("backward called with a cache built for a different parameter store");
    if (cache.mode != Mode::Train)
        throw ShapeError("backward requires a train-mode forward cache");
    if (cache.traces.size() != spec.layers.size())
        throw ShapeError("forward cache does not match network spec");

    Tensor<T> grad = dprobs;
    for (int li = static_cast<int>(spec.layers.size()) - 1; li >= 0; --li) {
        const LayerSpec& l = spec.layers[static_cast<std::size_t>(li)];
        const LayerTrace<T>& tr = cache.traces[static_cast<std::size_t>(li)];
        const int n = tr.in_shape.empty() ? 0 : tr.in_shape[0];
        switch (l.kind) {
            case LayerKind::SoftmaxHead:
            case LayerKind::Dense: {
                Tensor<T> dy = std::move(grad);
                if (l.kind == LayerKind::SoftmaxHead) {
                    // d/dlogits through the softmax: p .* (dp - <dp, p>)
                    const Tensor<T>& probs = tr.b;
                    const int c = probs.dim(1);
                    Tensor<T> dlogits({n, c});
                    for (int i = 0; i < n; ++i) {
                        const T* p = probs.data() + static_cast<std::int64_t>(i) * c;
                        const T* dp = dy.data() + static_cast<std::int64_t>(i) * c;
                        T dot{0};
                        for (int j = 0; j < c; ++j) dot += dp[j] * p[j];
                        T* dl = dlogits.data() + static_cast<std::int64_t>(i) * c;
                        for (int j = 0; j < c; ++j) dl[j] = p[j] * (dp[j] - dot);
                    }
                    dy = std::move(dlogits);
                }
                auto& w_entry = params.find(param_name(li, "w"));
                auto& b_entry = params.find(param_name(li, "b"));
                const Tensor<T>& x = tr.a;  // flattened input
                const int f = x.dim(1);
                const int units = w_entry.value.dim(1);
                CMapRM<T> xm(x.data(), n, f);
                CMapRM<T> dym(dy.data(), n, units);
                MapRM<T> dwm(w_entry.grad.data(), f, units);
                dwm.noalias() += xm.transpose() * dym;
                Eigen::Map<VecX<T>> dbv(b_entry.grad.data(), units);
                dbv.noalias() += dym.colwise().sum().transpose();
                Tensor<T> dx({n, f});
                MapRM<T> dxm(dx.data(), n, f);
                CMapRM<T> wm(w_entry.value.data(), f, units);
                dxm.noalias() = dym * wm.transpose();
                grad = dx.reshaped(tr.in_shape);
                break;
            }
            case LayerKind::Conv2d: {
                const int h = tr.in_shape[1], wd = tr.in_shape[2], cin = tr.in_shape[3];
                const int ph = pad_before(l.kh, l.padding), pw = pad_before(l.kw, l.padding);
                const int oh = tr.out_shape[1], ow = tr.out_shape[2];
                const int K = l.kh * l.kw * cin;
                const std::int64_t P = static_cast<std::int64_t>(oh) * ow;
                auto& w_entry = params.find(param_name(li, "w"));
                auto& b_entry = params.find(param_name(li, "b"));
                CMapCM<T> dym(grad.data(), l.channels, P * n);
                CMapCM<T> cm(tr.a.data(), K, P * n);
                MapCM<T> dwm(w_entry.grad.data(), l.channels, K);
                dwm.noalias() += dym * cm.transpose();
                Eigen::Map<VecX<T>> dbv(b_entry.grad.data(), l.channels);
                dbv.noalias() += dym.rowwise().sum();
                Tensor<T> dcols({static_cast<int>(P * n), K});
                MapCM<T> dcm(dcols.data(), K, P * n);
                CMapCM<T> wm(w_entry.value.data(), l.channels, K);
                dcm.noalias() = wm.transpose() * dym;
                Tensor<T> dx(tr.in_shape);
#pragma omp parallel for schedule(static)
                for (int s = 0; s < n; ++s)
                    col2im_add(dcols.data() + s * P * K, h, wd, cin, l.kh, l.kw, ph, pw, oh, ow,
                               dx.data() + static_cast<std::int64_t>(s) * h * wd * cin);
                grad = std::move(dx);
                break;
            }
            case LayerKind::MaxPool2x2: {
                Tensor<T> dx(tr.in_shape);
                for (std::size_t i = 0; i < grad.size(); ++i)
                    dx[static_cast<std::size_t>(tr.indices[i])] += grad[i];
                grad = std::move(dx);
                break;
            }
            case LayerKind::GlobalAvgPool: {
                const int h = tr.in_shape[1], wd = tr.in_shape[2], c = tr.in_shape[3];
                const T inv = T{1} / static_cast<T>(h * wd);
                Tensor<T> dx(tr.in_shape);
                for (int s = 0; s < n; ++s) {
                    const T* g = grad.data() + static_cast<std::int64_t>(s) * c;
                    T* d = dx.data() + static_cast<std::int64_t>(s) * h * wd * c;
                    for (int p = 0; p < h * wd; ++p)
                        for (int ci = 0; ci < c; ++ci) d[p * c + ci] = g[ci] * inv;
                }
                grad = std::move(dx);
                break;
            }
            case LayerKind::BatchNorm: {
                const int c = tr.in_shape.back();
                const std::int64_t rows = static_cast<std::int64_t>(grad.size()) / c;
                const Tensor<T>& xhat = tr.a;
                const Tensor<T>& invstd = tr.b;
                auto& gamma_entry = params.find(param_name(li, "gamma"));
                auto& beta_entry = params.find(param_name(li, "beta"));
                std::vector<T> sum_dy(static_cast<std::size_t>(c), T{0});
                std::vector<T> sum_dy_xhat(static_cast<std::size_t>(c), T{0});
                {
                    const T* g = grad.data();
                    const T* xh = xhat.data();
                    for (std::int64_t r = 0; r < rows; ++r, g += c, xh += c)
                        for (int ci = 0; ci < c; ++ci) {
                            const auto u = static_cast<std::size_t>(ci);
                            sum_dy[u] += g[ci];
                            sum_dy_xhat[u] += g[ci] * xh[ci];
                        }
                }
                for (int ci = 0; ci < c; ++ci) {
                    const auto u = static_cast<std::size_t>(ci);
                    gamma_entry.grad[u] += sum_dy_xhat[u];
                    beta_entry.grad[u] += sum_dy[u];
                }
                const T invrows = T{1} / static_cast<T>(rows);
                Tensor<T> dx(tr.in_shape);
                {
                    const T* g = grad.data();
                    const T* xh = xhat.data();
                    T* d = dx.data();
                    for (std::int64_t r = 0; r < rows; ++r, g += c, xh += c, d += c)
                        for (int ci = 0; ci < c; ++ci) {
                            const auto u = static_cast<std::size_t>(ci);
                            d[ci] = gamma_entry.value[u] * invstd[u] *
                                    (g[ci] - sum_dy[u] * invrows - xh[ci] * sum_dy_xhat[u] * invrows);
                        }
                }
                grad = std::move(dx);
                break;
            }
            case LayerKind::Dropout: {
                if (!tr.a.empty())
                    for (std::size_t i = 0; i < grad.size(); ++i) grad[i] *= tr.a[i];
                break;
            }
            case LayerKind::Relu: {
                const Tensor<T>& pre = tr.a;
                for (std::size_t i = 0; i < grad.size(); ++i)
                    if (!(pre[i] > T{0})) grad[i] = T{0};
                break;
            }
        }
    }
}

template Tensor<float> forward<float>(const NetworkSpec&, ParamStore<float>&, const Tensor<float>&,
                                      const ForwardOptions&, Rng*, ForwardCache<float>*);
template Tensor<double> forward<double>(const NetworkSpec&, ParamStore<double>&,
                                        const Tensor<double>&, const ForwardOptions&, Rng*,
                                        ForwardCache<double>*);
template void backward<float>(const NetworkSpec&, ParamStore<float>&, const ForwardCache<float>&,
                              const Tensor<float>&);
template void backward<double>(const NetworkSpec&, ParamStore<double>&,
                               const ForwardCache<double>&, const Tensor<double>&);
template ParamStore<float> init_params<float>(const NetworkSpec&, Rng&);
template ParamStore<double> init_params<double>(const NetworkSpec&, Rng&);

} // namespace seda
