#include "seda/data.hpp"

#include <algorithm>
#include <cmath>

namespace seda {

namespace {

constexpr int kGlyphSize = 16;
constexpr int kGlyphInventory = 10;
// Rendering constants, chosen so that a source-only classifier lands
// mid-range on the default shift. Strokes carry both polarities (bright and
// dark halves about a glyph-local axis) on a mid-grey background: a source
// model therefore learns filters for both stroke polarities, which keeps the
// intensity-inverted target recognizable instead of degenerate, and the
// inversion about the source mean stays inside [0, 1].
constexpr double kBackground = 0.5;
constexpr double kAmplitude = 0.45;     // peak stroke deviation from background
constexpr double kGlyphScale = 6.2;     // pixels per local unit
constexpr double kStrokeHalfWidth = 0.11;
constexpr double kEdgeSoftness = 0.14;
constexpr double kPolaritySoftness = 0.18;  // width of the bright/dark blend
constexpr double kJitterPixels = 2.0;   // position jitter, +/- px
constexpr double kJitterDegrees = 10.0; // rotation jitter, +/- deg
constexpr double kGainLo = 0.7;         // stroke intensity range
constexpr double kGainHi = 1.0;

struct Vec2 {
    double x, y;
};

double seg_dist(Vec2 p, Vec2 a, Vec2 b) {
    const double abx = b.x - a.x, aby = b.y - a.y;
    const double apx = p.x - a.x, apy = p.y - a.y;
    const double len2 = abx * abx + aby * aby;
    double t = len2 > 0.0 ? (apx * abx + apy * aby) / len2 : 0.0;
    t = std::clamp(t, 0.0, 1.0);
    const double dx = apx - t * abx, dy = apy - t * aby;
    return std::sqrt(dx * dx + dy * dy);
}

// Distance from a point in glyph-local coordinates ([-1, 1]^2) to the stroke
// skeleton of glyph `cls`.
double glyph_distance(int cls, Vec2 p) {
    auto segs = [&](std::initializer_list<std::array<double, 4>> list) {
        double d = 1e9;
        for (const auto& s : list) d = std::min(d, seg_dist(p, {s[0], s[1]}, {s[2], s[3]}));
        return d;
    };
    // The inventory avoids pairs that collide under the rotation range of the
    // default shift (plus/X and bar/diagonal are ~45 degrees apart, closer
    // than jitter + shift allows).
    switch (cls) {
        case 0: return segs({{-0.7, 0.0, 0.7, 0.0}});                     // horizontal bar
        case 1: return segs({{0.0, -0.7, 0.0, 0.7}});                     // vertical bar
        case 2: return segs({{-0.7, 0.0, 0.7, 0.0}, {0.0, -0.7, 0.0, 0.7}});  // plus
        case 3:                                                           // double bar
            return segs({{-0.6, -0.35, 0.6, -0.35}, {-0.6, 0.35, 0.6, 0.35}});
        case 4:                                                           // box outline
            return segs({{-0.55, -0.55, 0.55, -0.55},
                         {0.55, -0.55, 0.55, 0.55},
                         {0.55, 0.55, -0.55, 0.55},
                         {-0.55, 0.55, -0.55, -0.55}});
        case 5: {                                                         // filled disc
            const double r = std::sqrt(p.x * p.x + p.y * p.y);
            return std::max(0.0, r - 0.4);
        }
        case 6: return segs({{-0.6, -0.55, 0.6, -0.55}, {0.0, -0.55, 0.0, 0.65}}); // T
        case 7: {                                                         // ring
            const double r = std::sqrt(p.x * p.x + p.y * p.y);
            return std::abs(r - 0.55);
        }
        case 8: return segs({{-0.45, -0.65, -0.45, 0.6}, {-0.45, 0.6, 0.6, 0.6}});  // L
        case 9:                                                           // triangle outline
            return segs({{0.0, -0.65, 0.6, 0.55}, {0.6, 0.55, -0.6, 0.55}, {-0.6, 0.55, 0.0, -0.65}});
        default:
            throw ConfigError("glyph class " + std::to_string(cls) + " outside inventory");
    }
}

// Signed stroke polarity: +1 on one side of a glyph-local half-plane, -1 on
// the other, so every sample shows both bright and dark strokes. The boundary
// sits off-center to keep glyph centers at full contrast.
double stroke_polarity(Vec2 p) {
    const double d = (p.x + p.y) / 1.4142135623730951 - 0.18;
    return std::clamp(d / kPolaritySoftness, -1.0, 1.0);
}

// Gaussian blob inventory: class centers evenly spaced on a circle.
double blob_value(int cls, int class_count, Vec2 p) {
    const double ang = 2.0 * 3.14159265358979323846 * cls / class_count;
    const double cx = 0.45 * std::cos(ang);
    const double cy = 0.45 * std::sin(ang);
    const double dx = p.x - cx, dy = p.y - cy;
    return std::exp(-(dx * dx + dy * dy) / (2.0 * 0.22 * 0.22));
}

double stroke_coverage(double dist) {
    return std::clamp(0.5 + (kStrokeHalfWidth - dist) / kEdgeSoftness, 0.0, 1.0);
}

int draw_class(const SyntheticSpec& spec, bool target, Rng& rng) {
    if (target && spec.shift.class_weights) {
        const auto& w = *spec.shift.class_weights;
        const double u = rng.uniform();
        double acc = 0.0;
        for (int c = 0; c < spec.class_count; ++c) {
            acc += w[static_cast<std::size_t>(c)];
            if (u < acc) return c;
        }
        return spec.class_count - 1;
    }
    return rng.uniform_int(0, spec.class_count - 1);
}

// One raw glyph image. All randomness comes from `rng`; the shift rotation
// and noise apply to target samples only. Inversion happens later, once the
// source mean is known.
void render_sample(const SyntheticSpec& spec, bool target, Rng& rng, int& label_out,
                   std::uint8_t* pixels) {
    const int cls = draw_class(spec, target, rng);
    label_out = cls;
    const double jx = rng.uniform(-kJitterPixels, kJitterPixels);
    const double jy = rng.uniform(-kJitterPixels, kJitterPixels);
    const double deg = rng.uniform(-kJitterDegrees, kJitterDegrees) +
                       (target ? spec.shift.rotation_deg : 0.0);
    const double theta = deg * 3.14159265358979323846 / 180.0;
    const double ct = std::cos(theta), st = std::sin(theta);
    const double gain = rng.uniform(kGainLo, kGainHi);
    const double center = (kGlyphSize - 1) / 2.0;

    std::array<double, kGlyphSize * kGlyphSize> vals{};
    for (int y = 0; y < kGlyphSize; ++y)
        for (int x = 0; x < kGlyphSize; ++x) {
            const double rx = (x - center - jx) / kGlyphScale;
            const double ry = (y - center - jy) / kGlyphScale;
            // rotate by -theta into glyph-local coordinates
            const Vec2 local{ct * rx + st * ry, -st * rx + ct * ry};
            double cov;
            if (spec.kind == SyntheticSpec::Kind::Blobs)
                cov = blob_value(cls, spec.class_count, local);
            else
                cov = stroke_coverage(glyph_distance(cls, local));
            vals[static_cast<std::size_t>(y * kGlyphSize + x)] =
                kBackground + gain * cov * stroke_polarity(local) * kAmplitude;
        }
    if (target && spec.shift.noise_sigma > 0.0)
        for (auto& v : vals) v += rng.normal(0.0, spec.shift.noise_sigma);
    for (std::size_t i = 0; i < vals.size(); ++i)
        pixels[i] = static_cast<std::uint8_t>(
            std::lround(std::clamp(vals[i], 0.0, 1.0) * 255.0));
}

RawImages render_split(const SyntheticSpec& spec, bool target, std::uint64_t split_tag, int count,
                       std::vector<int>& labels) {
    RawImages out;
    out.n = count;
    out.h = kGlyphSize;
    out.w = kGlyphSize;
    out.pixels.resize(static_cast<std::size_t>(count) * kGlyphSize * kGlyphSize);
    labels.resize(static_cast<std::size_t>(count));
    const std::uint64_t domain_tag = target ? tag("target") : tag("source");
#pragma omp parallel for schedule(static)
    for (int i = 0; i < count; ++i) {
        Rng rng(mix_seed({spec.seed, domain_tag, split_tag, static_cast<std::uint64_t>(i)}));
        render_sample(spec, target, rng, labels[static_cast<std::size_t>(i)],
                      out.pixels.data() + static_cast<std::size_t>(i) * kGlyphSize * kGlyphSize);
    }
    return out;
}

double raw_mean(const RawImages& images) {
    double acc = 0.0;
    for (std::uint8_t p : images.pixels) acc += p / 255.0;
    return acc / static_cast<double>(images.pixels.size());
}

void invert_about(RawImages& images, double mean) {
    for (auto& p : images.pixels) {
        const double v = 2.0 * mean - p / 255.0;
        p = static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
    }
}

} // namespace

void SyntheticSpec::validate() const {
    if (class_count < 2) throw ConfigError("synthetic: class_count must be >= 2");
    if (kind == Kind::Glyphs && class_count > kGlyphInventory)
        throw ConfigError("synthetic: glyph inventory supports at most " +
                          std::to_string(kGlyphInventory) + " classes, got " +
                          std::to_string(class_count));
    if (n_train < 1 || n_test < 1) throw ConfigError("synthetic: n_train and n_test must be >= 1");
    if (shift.noise_sigma < 0.0) throw ConfigError("synthetic: noise_sigma must be >= 0");
    if (shift.class_weights) {
        const auto& w = *shift.class_weights;
        if (static_cast<int>(w.size()) != class_count)
            throw ConfigError("synthetic: class_weights length must equal class_count");
        double sum = 0.0;
        for (double v : w) {
            if (v < 0.0) throw ConfigError("synthetic: class_weights must be non-negative");
            sum += v;
        }
        if (std::abs(sum - 1.0) > 1e-6)
            throw ConfigError("synthetic: class_weights must sum to 1");
    }
}

RawSynthetic gen_synthetic_raw(const SyntheticSpec& spec) {
    spec.validate();
    RawSynthetic out;
    out.source_train = render_split(spec, false, tag("train"), spec.n_train, out.source_train_labels);
    out.source_test = render_split(spec, false, tag("test"), spec.n_test, out.source_test_labels);
    out.target_train = render_split(spec, true, tag("train"), spec.n_train, out.target_train_labels);
    out.target_test = render_split(spec, true, tag("test"), spec.n_test, out.target_test_labels);
    if (spec.shift.intensity_invert) {
        // invert about the source training mean so standardized target values
        // are the negation of their uninverted counterparts
        const double mean = raw_mean(out.source_train);
        invert_about(out.target_train, mean);
        invert_about(out.target_test, mean);
    }
    return out;
}

SyntheticPair gen_synthetic(const SyntheticSpec& spec) {
    RawSynthetic raw = gen_synthetic_raw(spec);
    SyntheticPair pair;
    pair.source_train = dataset_from_raw("source-train", raw.source_train,
                                         std::move(raw.source_train_labels), spec.class_count);
    const ChannelStats stats = pair.source_train.stats;
    pair.source_test = dataset_from_raw("source-test", raw.source_test,
                                        std::move(raw.source_test_labels), spec.class_count, &stats);
    pair.target_train = dataset_from_raw("target-train", raw.target_train,
                                         std::move(raw.target_train_labels), spec.class_count, &stats);
    pair.target_test = dataset_from_raw("target-test", raw.target_test,
                                        std::move(raw.target_test_labels), spec.class_count, &stats);
    return pair;
}

} // namespace seda
