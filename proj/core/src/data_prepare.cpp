#include "seda/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

namespace seda {

namespace {

Tensor<float> pad_images(const Tensor<float>& images, int th, int tw) {
    const int n = images.dim(0), h = images.dim(1), w = images.dim(2), c = images.dim(3);
    if (th < h || tw < w)
        throw ShapeError("pad_to target " + std::to_string(th) + "x" + std::to_string(tw) +
                         " smaller than image " + std::to_string(h) + "x" + std::to_string(w));
    const int oy = (th - h) / 2;
    const int ox = (tw - w) / 2;
    Tensor<float> out({n, th, tw, c});
    for (int s = 0; s < n; ++s)
        for (int y = 0; y < h; ++y)
            std::memcpy(out.data() + ((static_cast<std::size_t>(s) * th + (y + oy)) * tw + ox) * c,
                        images.data() + (static_cast<std::size_t>(s) * h + y) * w * c,
                        sizeof(float) * static_cast<std::size_t>(w) * c);
    return out;
}

// Half-pixel-center sampling; resizing to the input size is the identity.
Tensor<float> resize_images(const Tensor<float>& images, int th, int tw) {
    const int n = images.dim(0), h = images.dim(1), w = images.dim(2), c = images.dim(3);
    Tensor<float> out({n, th, tw, c});
    const double sy = static_cast<double>(h) / th;
    const double sx = static_cast<double>(w) / tw;
    for (int s = 0; s < n; ++s) {
        const float* in = images.data() + static_cast<std::size_t>(s) * h * w * c;
        float* o = out.data() + static_cast<std::size_t>(s) * th * tw * c;
        for (int y = 0; y < th; ++y) {
            const double fy = (y + 0.5) * sy - 0.5;
            const int y0 = static_cast<int>(std::floor(fy));
            const double wy = fy - y0;
            const int ya = std::clamp(y0, 0, h - 1);
            const int yb = std::clamp(y0 + 1, 0, h - 1);
            for (int x = 0; x < tw; ++x) {
                const double fx = (x + 0.5) * sx - 0.5;
                const int x0 = static_cast<int>(std::floor(fx));
                const double wx = fx - x0;
                const int xa = std::clamp(x0, 0, w - 1);
                const int xb = std::clamp(x0 + 1, 0, w - 1);
                for (int ci = 0; ci < c; ++ci) {
                    const double v00 = in[(static_cast<std::size_t>(ya) * w + xa) * c + ci];
                    const double v01 = in[(static_cast<std::size_t>(ya) * w + xb) * c + ci];
                    const double v10 = in[(static_cast<std::size_t>(yb) * w + xa) * c + ci];
                    const double v11 = in[(static_cast<std::size_t>(yb) * w + xb) * c + ci];
                    o[(static_cast<std::size_t>(y) * tw + x) * c + ci] = static_cast<float>(
                        (1.0 - wy) * ((1.0 - wx) * v00 + wx * v01) +
                        wy * ((1.0 - wx) * v10 + wx * v11));
                }
            }
        }
    }
    return out;
}

} // namespace

DomainDataset prepare(const DomainDataset& input, const std::vector<PrepareStep>& steps) {
    DomainDataset ds = input;
    for (const PrepareStep& step : steps) {
        if (const auto* pad = std::get_if<PadTo>(&step)) {
            ds.images = pad_images(ds.images, pad->h, pad->w);
        } else if (const auto* rs = std::get_if<ResizeBilinear>(&step)) {
            ds.images = resize_images(ds.images, rs->h, rs->w);
        } else if (const auto* rep = std::get_if<ReplicateChannels>(&step)) {
            const int n = ds.images.dim(0), h = ds.images.dim(1), w = ds.images.dim(2),
                      c = ds.images.dim(3);
            if (c != 1) throw ShapeError("replicate_channels requires a mono input");
            Tensor<float> out({n, h, w, rep->channels});
            const std::size_t pixels = static_cast<std::size_t>(n) * h * w;
            for (std::size_t p = 0; p < pixels; ++p)
                for (int ci = 0; ci < rep->channels; ++ci)
                    out[p * rep->channels + ci] = ds.images[p];
            ds.images = std::move(out);
            // stats apply per channel; replicate them alongside the data
            ds.stats.mean.assign(static_cast<std::size_t>(rep->channels), ds.stats.mean.at(0));
            ds.stats.stddev.assign(static_cast<std::size_t>(rep->channels), ds.stats.stddev.at(0));
        } else if (const auto* fc = std::get_if<FilterClasses>(&step)) {
            if (!ds.labeled()) throw ShapeError("filter_classes requires a labeled dataset");
            std::vector<int> sorted_keep = fc->keep;
            std::sort(sorted_keep.begin(), sorted_keep.end());
            std::vector<int> remap(static_cast<std::size_t>(ds.class_count), -1);
            int next = 0;
            for (int k : sorted_keep) {
                if (k < 0 || k >= ds.class_count)
                    throw ShapeError("filter_classes: class " + std::to_string(k) +
                                     " outside [0, " + std::to_string(ds.class_count) + ")");
                remap[static_cast<std::size_t>(k)] = next++;
            }
            std::vector<int> indices;
            std::vector<int> labels;
            for (int i = 0; i < ds.size(); ++i) {
                const int m = remap[static_cast<std::size_t>(ds.labels[static_cast<std::size_t>(i)])];
                if (m >= 0) {
                    indices.push_back(i);
                    labels.push_back(m);
                }
            }
            ds.images = ds.gather(indices);
            ds.labels = std::move(labels);
            ds.class_count = next;
        } else if (std::get_if<Standardize>(&step)) {
            const ChannelStats fresh = compute_channel_stats(ds.images);
            const int c = ds.images.shape().back();
            const std::size_t rows = ds.images.size() / static_cast<std::size_t>(c);
            float* p = ds.images.data();
            for (std::size_t r = 0; r < rows; ++r, p += c)
                for (int ci = 0; ci < c; ++ci) {
                    const auto u = static_cast<std::size_t>(ci);
                    p[ci] = (p[ci] - fresh.mean[u]) / fresh.stddev[u];
                }
            // compose with the existing raw->current map
            if (static_cast<int>(ds.stats.mean.size()) == c) {
                for (int ci = 0; ci < c; ++ci) {
                    const auto u = static_cast<std::size_t>(ci);
                    ds.stats.mean[u] = ds.stats.mean[u] + ds.stats.stddev[u] * fresh.mean[u];
                    ds.stats.stddev[u] = ds.stats.stddev[u] * fresh.stddev[u];
                }
            } else {
                ds.stats = fresh;
            }
            ds.standardized = true;
        }
    }
    ds.validate();
    return ds;
}

} // namespace seda
