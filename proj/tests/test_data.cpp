#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "seda/data.hpp"

using namespace seda;

namespace {

std::string tmp_path(const char* name) {
    const auto dir = std::filesystem::temp_directory_path() / "seda_data_tests";
    std::filesystem::create_directories(dir);
    return (dir / name).string();
}

} // namespace

TEST_CASE("idx image round trip is exact") {
    RawImages raw;
    raw.n = 2;
    raw.h = 4;
    raw.w = 4;
    raw.pixels.resize(32);
    for (std::size_t i = 0; i < raw.pixels.size(); ++i)
        raw.pixels[i] = static_cast<std::uint8_t>(i * 7 % 256);
    const std::string path = tmp_path("roundtrip-images");
    write_idx_images(path, raw);
    const RawImages back = read_idx_images(path);
    CHECK(back.n == 2);
    CHECK(back.h == 4);
    CHECK(back.w == 4);
    CHECK(back.pixels == raw.pixels);

    const std::string lpath = tmp_path("roundtrip-labels");
    const std::vector<int> labels{3, 9};
    write_idx_labels(lpath, labels);
    CHECK(read_idx_labels(lpath) == labels);
}

TEST_CASE("idx parser rejects bad magics and truncation") {
    const std::string path = tmp_path("bad-magic");
    {
        std::ofstream f(path, std::ios::binary | std::ios::trunc);
        const char zeros[16] = {};
        f.write(zeros, sizeof zeros);
    }
    CHECK_THROWS_WITH_AS(read_idx_images(path),
                         doctest::Contains("bad image magic 0x00000000 at offset 0"), IoError);

    const std::string trunc = tmp_path("truncated");
    {
        RawImages raw;
        raw.n = 2;
        raw.h = 4;
        raw.w = 4;
        raw.pixels.assign(32, 1);
        write_idx_images(trunc, raw);
        std::filesystem::resize_file(trunc, 20);  // header + 4 pixels only
    }
    CHECK_THROWS_AS(read_idx_images(trunc), IoError);

    CHECK_THROWS_AS(read_idx_images(tmp_path("missing-file")), IoError);
}

TEST_CASE("load_idx validates label ranges and counts") {
    RawImages raw;
    raw.n = 2;
    raw.h = 2;
    raw.w = 2;
    raw.pixels.assign(8, 100);
    const std::string ipath = tmp_path("val-images");
    const std::string lpath = tmp_path("val-labels");
    write_idx_images(ipath, raw);
    write_idx_labels(lpath, {4, 10});

    // label value 10 with class_count 10 is out of range
    CHECK_THROWS_AS((void)load_idx(ipath, lpath, nullptr, 10), ShapeError);
    CHECK_NOTHROW((void)load_idx(ipath, lpath, nullptr, 11));

    write_idx_labels(lpath, {1, 2, 3});
    CHECK_THROWS_AS((void)load_idx(ipath, lpath), IoError);  // count mismatch
}

TEST_CASE("standardization invariants") {
    SyntheticSpec spec;
    spec.n_train = 400;
    spec.n_test = 50;
    spec.seed = 7;
    const SyntheticPair pair = gen_synthetic(spec);

    // post-standardization source-train statistics: mean ~0, std ~1
    const ChannelStats stats = compute_channel_stats(pair.source_train.images);
    CHECK(std::abs(stats.mean[0]) <= 1e-6);
    CHECK(std::abs(stats.stddev[0] - 1.0f) <= 1e-6);

    // destandardize recovers raw [0,1] pixels
    const Tensor<float> raw = destandardize(pair.source_train);
    for (float v : raw) {
        CHECK(v >= -1e-4f);
        CHECK(v <= 1.0001f);
    }
    // standardize(destandardize(x)) == x within float tolerance
    const auto& m = pair.source_train.stats;
    for (std::size_t i = 0; i < raw.size(); ++i) {
        const float z = (raw[i] - m.mean[0]) / m.stddev[0];
        CHECK(std::abs(z - pair.source_train.images[i]) <= 1e-5f);
    }
}

TEST_CASE("prepare: pad centers with zero fill") {
    RawImages raw;
    raw.n = 1;
    raw.h = 28;
    raw.w = 28;
    raw.pixels.assign(28 * 28, 200);
    DomainDataset ds = dataset_from_raw("t", raw, {}, 0);
    const DomainDataset padded = prepare(ds, {PadTo{32, 32}});
    CHECK(padded.images.shape() == std::vector<int>{1, 32, 32, 1});
    // two-pixel border on each side is exactly zero
    for (int x = 0; x < 32; ++x) {
        CHECK(padded.images[static_cast<std::size_t>(0) * 32 + x] == 0.0f);
        CHECK(padded.images[static_cast<std::size_t>(1) * 32 + x] == 0.0f);
        CHECK(padded.images[static_cast<std::size_t>(30) * 32 + x] == 0.0f);
        CHECK(padded.images[static_cast<std::size_t>(31) * 32 + x] == 0.0f);
    }
    // interior is the original (constant) value
    CHECK(padded.images[static_cast<std::size_t>(2) * 32 + 2] == ds.images[0]);
}

TEST_CASE("prepare: replicate_channels copies the mono channel") {
    RawImages raw;
    raw.n = 2;
    raw.h = 3;
    raw.w = 3;
    raw.pixels.resize(18);
    for (std::size_t i = 0; i < raw.pixels.size(); ++i)
        raw.pixels[i] = static_cast<std::uint8_t>(i);
    DomainDataset ds = dataset_from_raw("t", raw, {}, 0);
    const DomainDataset rgb = prepare(ds, {ReplicateChannels{3}});
    CHECK(rgb.images.shape() == std::vector<int>{2, 3, 3, 3});
    for (std::size_t p = 0; p < 18; ++p) {
        CHECK(rgb.images[p * 3 + 0] == ds.images[p]);
        CHECK(rgb.images[p * 3 + 1] == ds.images[p]);
        CHECK(rgb.images[p * 3 + 2] == ds.images[p]);
    }
}

TEST_CASE("prepare: resize to own size is the identity") {
    SyntheticSpec spec;
    spec.n_train = 20;
    spec.n_test = 5;
    const SyntheticPair pair = gen_synthetic(spec);
    const DomainDataset resized = prepare(pair.source_train, {ResizeBilinear{16, 16}});
    for (std::size_t i = 0; i < resized.images.size(); ++i)
        CHECK(std::abs(resized.images[i] - pair.source_train.images[i]) <= 1e-6f);

    const DomainDataset up = prepare(pair.source_train, {ResizeBilinear{28, 28}});
    CHECK(up.images.shape() == std::vector<int>{20, 28, 28, 1});
}

TEST_CASE("prepare: filter_classes re-indexes densely and preserves order") {
    SyntheticSpec spec;
    spec.n_train = 2000;
    spec.n_test = 10;
    spec.class_count = 10;
    spec.seed = 3;
    const SyntheticPair pair = gen_synthetic(spec);
    std::vector<int> keep{0, 1, 2, 3, 4, 5, 6, 8, 9};  // drop class 7
    const DomainDataset filtered = prepare(pair.source_train, {FilterClasses{keep}});
    CHECK(filtered.class_count == 9);
    // balanced data: dropping 1 of 10 classes shrinks N by roughly 10%
    CHECK(filtered.size() < 2000 * 0.95);
    CHECK(filtered.size() > 2000 * 0.85);
    for (int l : filtered.labels) {
        CHECK(l >= 0);
        CHECK(l < 9);
    }
    // original class 8 maps to new index 7 (order preserved over kept ids)
    int idx = 0;
    for (int i = 0; i < pair.source_train.size() && idx < filtered.size(); ++i) {
        const int orig = pair.source_train.labels[static_cast<std::size_t>(i)];
        if (orig == 7) continue;
        const int expected = orig < 7 ? orig : orig - 1;
        CHECK(filtered.labels[static_cast<std::size_t>(idx)] == expected);
        ++idx;
    }
}

TEST_CASE("gen_synthetic is deterministic and balanced") {
    SyntheticSpec spec;
    spec.n_train = 10000;
    spec.n_test = 10;
    spec.seed = 11;
    const SyntheticPair a = gen_synthetic(spec);
    const SyntheticPair b = gen_synthetic(spec);
    CHECK(a.source_train.images.vec() == b.source_train.images.vec());
    CHECK(a.target_train.labels == b.target_train.labels);

    std::vector<int> counts(10, 0);
    for (int l : a.source_train.labels) counts[static_cast<std::size_t>(l)] += 1;
    for (int c : counts) CHECK(c == doctest::Approx(1000).epsilon(0.12));
}

TEST_CASE("gen_synthetic: class weights bias the target label distribution") {
    SyntheticSpec spec;
    spec.n_train = 10000;
    spec.n_test = 10;
    spec.seed = 5;
    std::vector<double> weights(10, 0.5 / 9);
    weights[0] = 0.5;
    spec.shift.class_weights = weights;
    const SyntheticPair pair = gen_synthetic(spec);
    int zero_count = 0;
    for (int l : pair.target_train.labels) zero_count += l == 0 ? 1 : 0;
    CHECK(std::abs(zero_count / 10000.0 - 0.5) <= 0.02);
    // the source stays balanced
    int src_zero = 0;
    for (int l : pair.source_train.labels) src_zero += l == 0 ? 1 : 0;
    CHECK(std::abs(src_zero / 10000.0 - 0.1) <= 0.02);
}

TEST_CASE("gen_synthetic: intensity inversion negates standardized means") {
    SyntheticSpec spec;
    spec.n_train = 4000;
    spec.n_test = 100;
    spec.seed = 13;
    spec.shift.intensity_invert = true;
    const SyntheticPair pair = gen_synthetic(spec);
    double src_mean = 0.0, tgt_mean = 0.0;
    for (float v : pair.source_train.images) src_mean += v;
    for (float v : pair.target_train.images) tgt_mean += v;
    src_mean /= static_cast<double>(pair.source_train.images.size());
    tgt_mean /= static_cast<double>(pair.target_train.images.size());
    CHECK(std::abs(tgt_mean - (-src_mean)) <= 0.05);

    // the inversion is a real sign flip sample-wise, not a no-op
    SyntheticSpec plain = spec;
    plain.shift.intensity_invert = false;
    const SyntheticPair straight = gen_synthetic(plain);
    double corr = 0.0;
    for (std::size_t i = 0; i < straight.target_train.images.size(); ++i)
        corr += straight.target_train.images[i] * pair.target_train.images[i];
    CHECK(corr < 0.0);
}

TEST_CASE("gen_synthetic validates its spec") {
    SyntheticSpec spec;
    spec.class_count = 11;
    CHECK_THROWS_AS((void)gen_synthetic(spec), ConfigError);
    spec.class_count = 1;
    CHECK_THROWS_AS((void)gen_synthetic(spec), ConfigError);
    spec = SyntheticSpec{};
    spec.shift.class_weights = std::vector<double>{0.5, 0.5};
    CHECK_THROWS_AS((void)gen_synthetic(spec), ConfigError);  // wrong length
}

TEST_CASE("blobs generator renders distinct classes") {
    SyntheticSpec spec;
    spec.kind = SyntheticSpec::Kind::Blobs;
    spec.class_count = 4;
    spec.n_train = 50;
    spec.n_test = 10;
    const SyntheticPair pair = gen_synthetic(spec);
    CHECK(pair.source_train.images.shape() == std::vector<int>{50, 16, 16, 1});
}

TEST_CASE("batch_iter covers every index and honors epoch_size") {
    SyntheticSpec spec;
    spec.n_train = 10;
    spec.n_test = 2;
    const SyntheticPair pair = gen_synthetic(spec);
    const DomainDataset& ds = pair.source_train;

    Rng rng(1);
    const auto batches = batch_iter(ds, 3, rng);
    REQUIRE(batches.size() == 4);
    CHECK(batches[0].size() == 3);
    CHECK(batches[3].size() == 1);
    std::vector<int> seen(10, 0);
    for (const auto& b : batches)
        for (int i : b) seen[static_cast<std::size_t>(i)] += 1;
    for (int s : seen) CHECK(s == 1);

    Rng rng2(2);
    const auto doubled = batch_iter(ds, 4, rng2, 20);
    std::vector<int> twice(10, 0);
    for (const auto& b : doubled)
        for (int i : b) twice[static_cast<std::size_t>(i)] += 1;
    for (int s : twice) CHECK(s == 2);

    Rng r3(3), r4(3);
    CHECK(batch_iter(ds, 3, r3) == batch_iter(ds, 3, r4));

    DomainDataset empty;
    empty.images = Tensor<float>({0, 4, 4, 1});
    CHECK_THROWS_AS((void)batch_iter(empty, 3, rng), ShapeError);
}
