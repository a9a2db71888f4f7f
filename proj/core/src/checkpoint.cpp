#include "seda/checkpoint.hpp"

#include <cstring>
#include <fstream>

namespace seda {

namespace {

constexpr char kMagic[8] = {'S', 'E', 'D', 'A', 'C', 'K', 'P', 'T'};

struct Writer {
    std::ofstream f;

    explicit Writer(const std::string& path) : f(path, std::ios::binary | std::ios::trunc) {
        if (!f) throw IoError("cannot create checkpoint " + path);
    }

    void bytes(const void* p, std::size_t n) {
        f.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
    }
    void u8(std::uint8_t v) { bytes(&v, 1); }
    void u32(std::uint32_t v) { bytes(&v, 4); }
    void u64(std::uint64_t v) { bytes(&v, 8); }
    void i32(std::int32_t v) { bytes(&v, 4); }
    void i64(std::int64_t v) { bytes(&v, 8); }
    void f64(double v) { bytes(&v, 8); }
    void str(const std::string& s) {
        u32(static_cast<std::uint32_t>(s.size()));
        bytes(s.data(), s.size());
    }
    void shape(const std::vector<int>& s) {
        u32(static_cast<std::uint32_t>(s.size()));
        for (int d : s) i32(d);
    }
    void tensor(const Tensor<float>& t) {
        shape(t.shape());
        bytes(t.data(), t.size() * sizeof(float));
    }
    void floats(const std::vector<float>& v) {
        u32(static_cast<std::uint32_t>(v.size()));
        bytes(v.data(), v.size() * sizeof(float));
    }
};

struct Reader {
    std::ifstream f;
    std::string path;

    explicit Reader(const std::string& p) : f(p, std::ios::binary), path(p) {
        if (!f) throw IoError("cannot open checkpoint " + p);
    }

    void bytes(void* p, std::size_t n) {
        f.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
        if (static_cast<std::size_t>(f.gcount()) != n)
            throw IoError(path + ": truncated checkpoint");
    }
    std::uint8_t u8() {
        std::uint8_t v;
        bytes(&v, 1);
        return v;
    }
    std::uint32_t u32() {
        std::uint32_t v;
        bytes(&v, 4);
        return v;
    }
    std::uint64_t u64() {
        std::uint64_t v;
        bytes(&v, 8);
        return v;
    }
    std::int32_t i32() {
        std::int32_t v;
        bytes(&v, 4);
        return v;
    }
    std::int64_t i64() {
        std::int64_t v;
        bytes(&v, 8);
        return v;
    }
    double f64() {
        double v;
        bytes(&v, 8);
        return v;
    }
    std::string str() {
        const std::uint32_t n = u32();
        std::string s(n, '\0');
        bytes(s.data(), n);
        return s;
    }
    std::vector<int> shape() {
        const std::uint32_t n = u32();
        std::vector<int> s(n);
        for (auto& d : s) d = i32();
        return s;
    }
    Tensor<float> tensor() {
        Tensor<float> t(shape());
        bytes(t.data(), t.size() * sizeof(float));
        return t;
    }
    std::vector<float> floats() {
        std::vector<float> v(u32());
        bytes(v.data(), v.size() * sizeof(float));
        return v;
    }
};

void write_spec(Writer& w, const NetworkSpec& spec) {
    w.shape(spec.input_shape);
    w.u32(static_cast<std::uint32_t>(spec.layers.size()));
    for (const auto& l : spec.layers) {
        w.u8(static_cast<std::uint8_t>(l.kind));
        w.i32(l.units);
        w.i32(l.kh);
        w.i32(l.kw);
        w.i32(l.channels);
        w.u8(static_cast<std::uint8_t>(l.padding));
        w.f64(l.rate);
        w.i32(l.classes);
        w.f64(l.bn_momentum);
        w.f64(l.bn_epsilon);
    }
}

NetworkSpec read_spec(Reader& r) {
    NetworkSpec spec;
    spec.input_shape = r.shape();
    spec.layers.resize(r.u32());
    for (auto& l : spec.layers) {
        l.kind = static_cast<LayerKind>(r.u8());
        l.units = r.i32();
        l.kh = r.i32();
        l.kw = r.i32();
        l.channels = r.i32();
        l.padding = static_cast<Padding>(r.u8());
        l.rate = r.f64();
        l.classes = r.i32();
        l.bn_momentum = r.f64();
        l.bn_epsilon = r.f64();
    }
    return spec;
}

void write_store(Writer& w, const ParamStore<float>& store) {
    w.i64(store.step_count);
    w.u32(static_cast<std::uint32_t>(store.entries.size()));
    for (const auto& e : store.entries) {
        w.str(e.name);
        w.u8(e.trainable ? 1 : 0);
        w.tensor(e.value);
        w.tensor(e.adam_m);
        w.tensor(e.adam_v);
    }
}

ParamStore<float> read_store(Reader& r) {
    ParamStore<float> store;
    store.step_count = r.i64();
    store.entries.resize(r.u32());
    for (auto& e : store.entries) {
        e.name = r.str();
        e.trainable = r.u8() != 0;
        e.value = r.tensor();
        e.adam_m = r.tensor();
        e.adam_v = r.tensor();
        e.grad = Tensor<float>(e.value.shape());
    }
    return store;
}

} // namespace

void checkpoint_save(const std::string& path, const Checkpoint& ckpt) {
    Writer w(path);
    w.bytes(kMagic, sizeof kMagic);
    w.u32(kCheckpointVersion);
    write_spec(w, ckpt.spec);
    write_store(w, ckpt.student);
    write_store(w, ckpt.teacher);
    w.floats(ckpt.stats.mean);
    w.floats(ckpt.stats.stddev);
    w.u64(ckpt.seed);
    w.i32(ckpt.epoch);
    w.str(ckpt.config_json);
    if (!w.f) throw IoError("failed writing checkpoint " + path);
}

Checkpoint checkpoint_load(const std::string& path) {
    Reader r(path);
    char magic[8];
    r.bytes(magic, sizeof magic);
    if (std::memcmp(magic, kMagic, sizeof magic) != 0)
        throw IoError(path + ": not a checkpoint file (bad magic)");
    const std::uint32_t version = r.u32();
    if (version != kCheckpointVersion)
        throw IoError(path + ": unsupported checkpoint version " + std::to_string(version) +
                      " (expected " + std::to_string(kCheckpointVersion) + ")");
    Checkpoint ckpt;
    ckpt.spec = read_spec(r);
    ckpt.student = read_store(r);
    ckpt.teacher = read_store(r);
    ckpt.stats.mean = r.floats();
    ckpt.stats.stddev = r.floats();
    ckpt.seed = r.u64();
    ckpt.epoch = r.i32();
    ckpt.config_json = r.str();
    ckpt.spec.validate();
    return ckpt;
}

} // namespace seda
