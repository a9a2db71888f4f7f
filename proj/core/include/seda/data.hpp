#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "seda/rng.hpp"
#include "seda/tensor.hpp"

namespace seda {

// ---- raw IDX-format storage --------------------------------------------------

// Raw uint8 image stack as stored in an IDX file (N x H x W, mono).
struct RawImages {
    int n = 0;
    int h = 0;
    int w = 0;
    std::vector<std::uint8_t> pixels;
};

RawImages read_idx_images(const std::string& path);
std::vector<int> read_idx_labels(const std::string& path);
void write_idx_images(const std::string& path, const RawImages& images);
void write_idx_labels(const std::string& path, const std::vector<int>& labels);

// ---- standardized datasets ----------------------------------------------------

// Per-channel affine map raw -> standardized: z = (p - mean) / std.
struct ChannelStats {
    std::vector<float> mean;
    std::vector<float> stddev;
};

// A named stack of image samples (N x H x W x C standardized floats) with
// optional labels. An empty label vector marks an unlabeled dataset.
struct DomainDataset {
    std::string name;
    Tensor<float> images;
    std::vector<int> labels;
    int class_count = 0;
    ChannelStats stats;  // raw->standardized map currently in effect
    bool standardized = false;

    int size() const { return images.empty() ? 0 : images.dim(0); }
    bool labeled() const { return !labels.empty(); }
    Tensor<float> sample(int i) const;
    Tensor<float> gather(const std::vector<int>& indices) const;
    void validate() const;
};

ChannelStats compute_channel_stats(const Tensor<float>& images);

// Builds a dataset from raw [0,255] pixels: scales to [0,1] and standardizes
// with `stats` when given, else with statistics computed from this data.
DomainDataset dataset_from_raw(const std::string& name, const RawImages& raw,
                               std::vector<int> labels, int class_count,
                               const ChannelStats* stats = nullptr);

// Loads an IDX image file (and optional label file), scales pixels to [0,1]
// and standardizes. `stats` overrides self-computed statistics so that a
// target domain can reuse the source mapping.
DomainDataset load_idx(const std::string& images_path, const std::string& labels_path = "",
                       const ChannelStats* stats = nullptr, int class_count = 0);

// ---- preparation steps ----------------------------------------------------------

struct PadTo {
    int h = 0, w = 0;
};
struct ResizeBilinear {
    int h = 0, w = 0;
};
struct ReplicateChannels {
    int channels = 0;
};
struct FilterClasses {
    std::vector<int> keep;
};
struct Standardize {};

using PrepareStep = std::variant<PadTo, ResizeBilinear, ReplicateChannels, FilterClasses, Standardize>;

// Applies the steps in order. pad_to centers with zero fill;
// filter_classes re-indexes the kept labels densely, preserving order;
// standardize recomputes statistics on the current images.
DomainDataset prepare(const DomainDataset& ds, const std::vector<PrepareStep>& steps);

// Inverts the standardization map using the stored statistics.
Tensor<float> destandardize(const DomainDataset& ds);

// ---- synthetic two-domain generator ------------------------------------------------

struct DomainShift {
    double rotation_deg = 0.0;
    bool intensity_invert = false;
    double noise_sigma = 0.0;  // raw [0,1] pixel units
    std::optional<std::vector<double>> class_weights;
};

struct SyntheticSpec {
    enum class Kind : std::uint8_t { Glyphs, Blobs };
    Kind kind = Kind::Glyphs;
    int n_train = 1000;
    int n_test = 200;
    int class_count = 10;
    DomainShift shift;
    std::uint64_t seed = 0;

    void validate() const;
};

struct SyntheticPair {
    DomainDataset source_train, source_test;
    DomainDataset target_train, target_test;
};

// Renders procedural 16x16 datasets for both domains. Target applies the
// domain shift; both domains carry labels (target labels are for evaluation
// only). Rendering goes through uint8 quantization so that writing the raw
// images to IDX and reloading them reproduces the exact same tensors.
SyntheticPair gen_synthetic(const SyntheticSpec& spec);

// The raw uint8 images and labels behind gen_synthetic, for gen-data.
struct RawSynthetic {
    RawImages source_train, source_test, target_train, target_test;
    std::vector<int> source_train_labels, source_test_labels;
    std::vector<int> target_train_labels, target_test_labels;
};
RawSynthetic gen_synthetic_raw(const SyntheticSpec& spec);

// ---- batching ---------------------------------------------------------------------

// Shuffled index batches without replacement. One full pass by default; an
// explicit epoch_size (in samples) reshuffles and continues past N, so a
// smaller dataset can cycle while a larger one completes its pass.
std::vector<std::vector<int>> batch_iter(const DomainDataset& ds, int batch_size, Rng& rng,
                                         std::int64_t epoch_size = -1);

} // namespace seda
