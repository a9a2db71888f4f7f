#include "seda/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>

namespace seda {

namespace {

constexpr std::uint32_t kImageMagic = 0x00000803;  // 3-D uint8
constexpr std::uint32_t kLabelMagic = 0x00000801;  // 1-D uint8

std::uint32_t read_be32(std::ifstream& f, const std::string& path, const char* what) {
    unsigned char buf[4];
    f.read(reinterpret_cast<char*>(buf), 4);
    if (!f)
        throw IoError(path + ": truncated while reading " + std::string(what) + " at offset " +
                      std::to_string(static_cast<long long>(f.tellg())));
    return (std::uint32_t(buf[0]) << 24) | (std::uint32_t(buf[1]) << 16) |
           (std::uint32_t(buf[2]) << 8) | std::uint32_t(buf[3]);
}

void write_be32(std::ofstream& f, std::uint32_t v) {
    const unsigned char buf[4] = {static_cast<unsigned char>(v >> 24),
                                  static_cast<unsigned char>(v >> 16),
                                  static_cast<unsigned char>(v >> 8),
                                  static_cast<unsigned char>(v)};
    f.write(reinterpret_cast<const char*>(buf), 4);
}

} // namespace

RawImages read_idx_images(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open IDX image file " + path);
    const std::uint32_t magic = read_be32(f, path, "magic");
    if (magic != kImageMagic) {
        char hex[16];
        std::snprintf(hex, sizeof hex, "0x%08x", magic);
        throw IoError(path + ": bad image magic " + hex + " at offset 0 (expected 0x00000803)");
    }
    RawImages out;
    out.n = static_cast<int>(read_be32(f, path, "count"));
    out.h = static_cast<int>(read_be32(f, path, "rows"));
    out.w = static_cast<int>(read_be32(f, path, "cols"));
    if (out.n < 0 || out.h <= 0 || out.w <= 0)
        throw IoError(path + ": nonsensical dimensions in header");
    const std::size_t payload = static_cast<std::size_t>(out.n) * out.h * out.w;
    out.pixels.resize(payload);
    f.read(reinterpret_cast<char*>(out.pixels.data()), static_cast<std::streamsize>(payload));
    if (static_cast<std::size_t>(f.gcount()) != payload)
        throw IoError(path + ": truncated payload, expected " + std::to_string(payload) +
                      " bytes, got " + std::to_string(f.gcount()));
    return out;
}

std::vector<int> read_idx_labels(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open IDX label file " + path);
    const std::uint32_t magic = read_be32(f, path, "magic");
    if (magic != kLabelMagic) {
        char hex[16];
        std::snprintf(hex, sizeof hex, "0x%08x", magic);
        throw IoError(path + ": bad label magic " + hex + " at offset 0 (expected 0x00000801)");
    }
    const std::uint32_t n = read_be32(f, path, "count");
    std::vector<std::uint8_t> raw(n);
    f.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(n));
    if (static_cast<std::uint32_t>(f.gcount()) != n)
        throw IoError(path + ": truncated label payload");
    return std::vector<int>(raw.begin(), raw.end());
}

void write_idx_images(const std::string& path, const RawImages& images) {
    if (images.pixels.size() != static_cast<std::size_t>(images.n) * images.h * images.w)
        throw IoError("write_idx_images: pixel buffer does not match header dimensions");
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot create " + path);
    write_be32(f, kImageMagic);
    write_be32(f, static_cast<std::uint32_t>(images.n));
    write_be32(f, static_cast<std::uint32_t>(images.h));
    write_be32(f, static_cast<std::uint32_t>(images.w));
    f.write(reinterpret_cast<const char*>(images.pixels.data()),
            static_cast<std::streamsize>(images.pixels.size()));
    if (!f) throw IoError("failed writing " + path);
}

void write_idx_labels(const std::string& path, const std::vector<int>& labels) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot create " + path);
    write_be32(f, kLabelMagic);
    write_be32(f, static_cast<std::uint32_t>(labels.size()));
    for (int v : labels) {
        if (v < 0 || v > 255) throw IoError("label " + std::to_string(v) + " not a uint8");
        const auto b = static_cast<unsigned char>(v);
        f.write(reinterpret_cast<const char*>(&b), 1);
    }
    if (!f) throw IoError("failed writing " + path);
}

Tensor<float> DomainDataset::sample(int i) const {
    const int h = images.dim(1), w = images.dim(2), c = images.dim(3);
    Tensor<float> out({h, w, c});
    std::memcpy(out.data(), images.data() + static_cast<std::size_t>(i) * h * w * c,
                sizeof(float) * out.size());
    return out;
}

Tensor<float> DomainDataset::gather(const std::vector<int>& indices) const {
    const int h = images.dim(1), w = images.dim(2), c = images.dim(3);
    const std::size_t stride = static_cast<std::size_t>(h) * w * c;
    Tensor<float> out({static_cast<int>(indices.size()), h, w, c});
    for (std::size_t k = 0; k < indices.size(); ++k)
        std::memcpy(out.data() + k * stride,
                    images.data() + static_cast<std::size_t>(indices[k]) * stride,
                    sizeof(float) * stride);
    return out;
}

void DomainDataset::validate() const {
    if (images.rank() != 4) throw ShapeError("dataset images must be N x H x W x C");
    if (labeled()) {
        if (static_cast<int>(labels.size()) != size())
            throw ShapeError("dataset " + name + ": image/label count mismatch (" +
                             std::to_string(size()) + " images, " +
                             std::to_string(labels.size()) + " labels)");
        for (int v : labels)
            if (v < 0 || v >= class_count)
                throw ShapeError("dataset " + name + ": label " + std::to_string(v) +
                                 " outside [0, " + std::to_string(class_count) + ")");
    }
}

ChannelStats compute_channel_stats(const Tensor<float>& images) {
    const int c = images.shape().back();
    const std::size_t rows = images.size() / static_cast<std::size_t>(c);
    ChannelStats out;
    out.mean.assign(static_cast<std::size_t>(c), 0.0f);
    out.stddev.assign(static_cast<std::size_t>(c), 0.0f);
    std::vector<double> mean(static_cast<std::size_t>(c), 0.0), var(static_cast<std::size_t>(c), 0.0);
    const float* p = images.data();
    for (std::size_t r = 0; r < rows; ++r, p += c)
        for (int ci = 0; ci < c; ++ci) mean[static_cast<std::size_t>(ci)] += p[ci];
    for (auto& m : mean) m /= static_cast<double>(rows);
    p = images.data();
    for (std::size_t r = 0; r < rows; ++r, p += c)
        for (int ci = 0; ci < c; ++ci) {
            const double d = p[ci] - mean[static_cast<std::size_t>(ci)];
            var[static_cast<std::size_t>(ci)] += d * d;
        }
    for (int ci = 0; ci < c; ++ci) {
        const auto u = static_cast<std::size_t>(ci);
        var[u] /= static_cast<double>(rows);
        out.mean[u] = static_cast<float>(mean[u]);
        out.stddev[u] = static_cast<float>(std::max(std::sqrt(var[u]), 1e-8));
    }
    return out;
}

DomainDataset dataset_from_raw(const std::string& name, const RawImages& raw,
                               std::vector<int> labels, int class_count,
                               const ChannelStats* stats) {
    DomainDataset ds;
    ds.name = name;
    ds.images = Tensor<float>({raw.n, raw.h, raw.w, 1});
    for (std::size_t i = 0; i < raw.pixels.size(); ++i)
        ds.images[i] = static_cast<float>(raw.pixels[i]) / 255.0f;
    ds.labels = std::move(labels);
    ds.class_count = class_count;
    ds.stats = stats ? *stats : compute_channel_stats(ds.images);
    const float mean = ds.stats.mean.at(0);
    const float inv = 1.0f / ds.stats.stddev.at(0);
    for (auto& v : ds.images) v = (v - mean) * inv;
    ds.standardized = true;
    ds.validate();
    return ds;
}

DomainDataset load_idx(const std::string& images_path, const std::string& labels_path,
                       const ChannelStats* stats, int class_count) {
    RawImages raw = read_idx_images(images_path);
    std::vector<int> labels;
    if (!labels_path.empty()) {
        labels = read_idx_labels(labels_path);
        if (static_cast<int>(labels.size()) != raw.n)
            throw IoError(images_path + ": " + std::to_string(raw.n) + " images but " +
                          std::to_string(labels.size()) + " labels in " + labels_path);
    }
    int classes = class_count;
    if (classes == 0 && !labels.empty())
        classes = *std::max_element(labels.begin(), labels.end()) + 1;
    return dataset_from_raw(images_path, raw, std::move(labels), classes, stats);
}

Tensor<float> destandardize(const DomainDataset& ds) {
    const int c = ds.images.shape().back();
    Tensor<float> out(ds.images.shape());
    const float* in = ds.images.data();
    float* o = out.data();
    const std::size_t rows = ds.images.size() / static_cast<std::size_t>(c);
    for (std::size_t r = 0; r < rows; ++r, in += c, o += c)
        for (int ci = 0; ci < c; ++ci) {
            const auto u = static_cast<std::size_t>(ci);
            o[ci] = in[ci] * ds.stats.stddev[u] + ds.stats.mean[u];
        }
    return out;
}

std::vector<std::vector<int>> batch_iter(const DomainDataset& ds, int batch_size, Rng& rng,
                                         std::int64_t epoch_size) {
    const int n = ds.size();
    if (n == 0) throw ShapeError("batch_iter: empty dataset");
    if (batch_size < 1) throw ConfigError("batch_iter: batch_size must be >= 1");
    const std::int64_t total = epoch_size < 0 ? n : epoch_size;

    std::vector<int> order;
    order.reserve(static_cast<std::size_t>(total) + static_cast<std::size_t>(n));
    while (static_cast<std::int64_t>(order.size()) < total) {
        std::vector<int> pass(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i) pass[static_cast<std::size_t>(i)] = i;
        // Fisher-Yates, fresh shuffle per pass
        for (int i = n - 1; i > 0; --i) std::swap(pass[i], pass[rng.uniform_int(0, i)]);
        order.insert(order.end(), pass.begin(), pass.end());
    }
    order.resize(static_cast<std::size_t>(total));

    std::vector<std::vector<int>> batches;
    for (std::int64_t at = 0; at < total; at += batch_size) {
        const std::int64_t end = std::min<std::int64_t>(at + batch_size, total);
        batches.emplace_back(order.begin() + at, order.begin() + end);
    }
    return batches;
}

} // namespace seda
