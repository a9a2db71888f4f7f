#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

namespace {

namespace fs = std::filesystem;

const std::string kCli = SEDA_CLI_PATH;
const fs::path kTmp = SEDA_TEST_TMP;

struct CmdResult {
    int exit_code = -1;
    std::string stderr_text;
};

CmdResult run_cli(const std::string& args, const fs::path& dir) {
    fs::create_directories(dir);
    const fs::path err = dir / "stderr.txt";
    const std::string cmd = kCli + " " + args + " >/dev/null 2>" + err.string();
    const int status = std::system(cmd.c_str());
    CmdResult r;
    r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    std::ifstream f(err);
    std::stringstream ss;
    ss << f.rdbuf();
    r.stderr_text = ss.str();
    return r;
}

std::string read_file(const fs::path& path) {
    std::ifstream f(path, std::ios::binary);
    REQUIRE(f.good());
    std::stringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

void write_file(const fs::path& path, const std::string& text) {
    fs::create_directories(path.parent_path());
    std::ofstream f(path, std::ios::trunc);
    f << text;
}

std::string glyph_config(const std::string& out_dir, int epochs = 2, int seed = 3,
                         const std::string& augment_preset = "minimal",
                         const std::string& lr = "0.001") {
    return std::string("{\n")
        + "  \"data\": {\"synthetic\": {\"kind\": \"glyphs\", \"n_train\": 200, \"n_test\": 64,\n"
        + "    \"class_count\": 10, \"seed\": 77,\n"
        + "    \"shift\": {\"rotation_deg\": 10.0, \"noise_sigma\": 0.05}}},\n"
        + "  \"model\": {\"arch\": \"mlp\", \"width_multiplier\": 0.125},\n"
        + "  \"augment\": {\"preset\": \"" + augment_preset + "\"},\n"
        + "  \"train\": {\"epochs\": " + std::to_string(epochs) + ", \"batch_size\": 32,\n"
        + "    \"lr\": " + lr + ", \"seed\": " + std::to_string(seed) + "},\n"
        + "  \"output\": {\"dir\": \"" + out_dir + "\"}\n}\n";
}

int count_lines(const std::string& text) {
    int n = 0;
    for (char c : text)
        if (c == '\n') ++n;
    return n;
}

} // namespace

TEST_CASE("cli: missing config file exits 2 and names the path") {
    const fs::path dir = kTmp / "missing";
    const CmdResult r = run_cli("train --config /nonexistent/conf.json", dir);
    CHECK(r.exit_code == 2);
    CHECK(r.stderr_text.find("/nonexistent/conf.json") != std::string::npos);
}

TEST_CASE("cli: unknown config keys are rejected") {
    const fs::path dir = kTmp / "strict";
    write_file(dir / "conf.json",
               "{\"data\": {\"synthetic\": {}}, \"train\": {\"learning_rate\": 0.1}}");
    const CmdResult r = run_cli("train --config " + (dir / "conf.json").string(), dir);
    CHECK(r.exit_code == 2);
    CHECK(r.stderr_text.find("learning_rate") != std::string::npos);
}

TEST_CASE("cli: train writes metrics, checkpoints and the resolved config") {
    const fs::path dir = kTmp / "train_basic";
    const fs::path out = dir / "run";
    write_file(dir / "conf.json", glyph_config(out.string()));
    const CmdResult r = run_cli("train --quiet --config " + (dir / "conf.json").string(), dir);
    REQUIRE(r.exit_code == 0);

    const std::string metrics = read_file(out / "metrics.csv");
    CHECK(count_lines(metrics) == 3);  // header + one row per epoch
    CHECK(fs::exists(out / "final.ckpt"));
    CHECK(fs::exists(out / "early_stop.ckpt"));
    CHECK(fs::exists(out / "resolved-config.json"));
}

TEST_CASE("cli: identical config and seed give byte-identical metrics") {
    const fs::path dir = kTmp / "determinism";
    write_file(dir / "conf.json", glyph_config((dir / "a").string()));
    REQUIRE(run_cli("train --quiet --config " + (dir / "conf.json").string(), dir).exit_code == 0);
    REQUIRE(run_cli("train --quiet --config " + (dir / "conf.json").string() + " --out " +
                    (dir / "b").string(), dir).exit_code == 0);
    CHECK(read_file(dir / "a" / "metrics.csv") == read_file(dir / "b" / "metrics.csv"));
}

TEST_CASE("cli: the resolved config reproduces the run exactly") {
    const fs::path dir = kTmp / "resolved";
    write_file(dir / "conf.json", glyph_config((dir / "a").string()));
    REQUIRE(run_cli("train --quiet --config " + (dir / "conf.json").string(), dir).exit_code == 0);
    REQUIRE(run_cli("train --quiet --config " + (dir / "a" / "resolved-config.json").string() +
                    " --out " + (dir / "b").string(), dir).exit_code == 0);
    CHECK(read_file(dir / "a" / "metrics.csv") == read_file(dir / "b" / "metrics.csv"));
}

TEST_CASE("cli: eval prints accuracy json for both networks") {
    const fs::path dir = kTmp / "eval";
    const fs::path out = dir / "run";
    write_file(dir / "conf.json", glyph_config(out.string()));
    REQUIRE(run_cli("train --quiet --config " + (dir / "conf.json").string(), dir).exit_code == 0);
    write_file(dir / "data.json",
               "{\"synthetic\": {\"kind\": \"glyphs\", \"n_train\": 200, \"n_test\": 64, "
               "\"class_count\": 10, \"seed\": 77, \"shift\": {\"rotation_deg\": 10.0, "
               "\"noise_sigma\": 0.05}}, \"domain\": \"source\", \"split\": \"test\"}");

    for (const char* network : {"teacher", "student"}) {
        const fs::path json_out = dir / (std::string("out_") + network + ".json");
        const std::string cmd = kCli + " eval --checkpoint " + (out / "final.ckpt").string() +
                                " --data " + (dir / "data.json").string() + " --network " +
                                network + " >" + json_out.string() + " 2>/dev/null";
        REQUIRE(std::system(cmd.c_str()) == 0);
        const std::string text = read_file(json_out);
        CHECK(text.find("\"accuracy\"") != std::string::npos);
        CHECK(text.find("\"confusion\"") != std::string::npos);
        CHECK(text.find("\"mean_class_accuracy\"") != std::string::npos);
    }

    write_file(dir / "corrupt.ckpt", "this is not a checkpoint");
    const CmdResult bad = run_cli("eval --checkpoint " + (dir / "corrupt.ckpt").string() +
                                  " --data " + (dir / "data.json").string(), dir);
    CHECK(bad.exit_code == 2);
}

TEST_CASE("cli: gen-data then training from idx matches the in-memory run") {
    const fs::path dir = kTmp / "gendata";
    write_file(dir / "spec.json",
               "{\"kind\": \"glyphs\", \"n_train\": 200, \"n_test\": 64, \"class_count\": 10, "
               "\"seed\": 77, \"shift\": {\"rotation_deg\": 10.0, \"noise_sigma\": 0.05}}");
    REQUIRE(run_cli("gen-data --spec " + (dir / "spec.json").string() + " --out " +
                    (dir / "idx").string(), dir).exit_code == 0);
    for (const char* stem : {"source-train", "source-test", "target-train", "target-test"}) {
        CHECK(fs::exists(dir / "idx" / (std::string(stem) + "-images-idx3-ubyte")));
        CHECK(fs::exists(dir / "idx" / (std::string(stem) + "-labels-idx1-ubyte")));
    }

    write_file(dir / "mem.json", glyph_config((dir / "mem").string()));
    const std::string idx_dir = (dir / "idx").string();
    std::string idx_cfg = std::string("{\n")
        + "  \"data\": {\n"
        + "    \"source\": {\"train_images\": \"" + idx_dir + "/source-train-images-idx3-ubyte\",\n"
        + "      \"train_labels\": \"" + idx_dir + "/source-train-labels-idx1-ubyte\",\n"
        + "      \"test_images\": \"" + idx_dir + "/source-test-images-idx3-ubyte\",\n"
        + "      \"test_labels\": \"" + idx_dir + "/source-test-labels-idx1-ubyte\"},\n"
        + "    \"target\": {\"train_images\": \"" + idx_dir + "/target-train-images-idx3-ubyte\",\n"
        + "      \"train_labels\": \"" + idx_dir + "/target-train-labels-idx1-ubyte\",\n"
        + "      \"test_images\": \"" + idx_dir + "/target-test-images-idx3-ubyte\",\n"
        + "      \"test_labels\": \"" + idx_dir + "/target-test-labels-idx1-ubyte\"}},\n"
        + "  \"model\": {\"arch\": \"mlp\", \"width_multiplier\": 0.125},\n"
        + "  \"augment\": {\"preset\": \"minimal\"},\n"
        + "  \"train\": {\"epochs\": 2, \"batch_size\": 32, \"seed\": 3},\n"
        + "  \"output\": {\"dir\": \"" + (dir / "fromidx").string() + "\"}\n}\n";
    write_file(dir / "idx.json", idx_cfg);

    REQUIRE(run_cli("train --quiet --config " + (dir / "mem.json").string(), dir).exit_code == 0);
    REQUIRE(run_cli("train --quiet --config " + (dir / "idx.json").string(), dir).exit_code == 0);
    CHECK(read_file(dir / "mem" / "metrics.csv") == read_file(dir / "fromidx" / "metrics.csv"));
}

TEST_CASE("cli: preview-aug with augmentation off produces identical halves") {
    const fs::path dir = kTmp / "preview";
    write_file(dir / "conf.json", glyph_config((dir / "run").string(), 1, 3, "off"));
    REQUIRE(run_cli("preview-aug --config " + (dir / "conf.json").string() + " --out " +
                    (dir / "grid.pgm").string() + " --count 4", dir).exit_code == 0);
    const std::string pgm = read_file(dir / "grid.pgm");
    // header: P5\n<w> <h>\n255\n
    REQUIRE(pgm.rfind("P5\n", 0) == 0);
    std::istringstream header(pgm.substr(3));
    int w = 0, h = 0;
    header >> w >> h;
    REQUIRE(w == 32);
    REQUIRE(h == 64);
    const std::size_t data_at = pgm.find("255\n") + 4;
    REQUIRE(pgm.size() - data_at == static_cast<std::size_t>(w) * h);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w / 2; ++x)
            CHECK(pgm[data_at + static_cast<std::size_t>(y) * w + x] ==
                  pgm[data_at + static_cast<std::size_t>(y) * w + w / 2 + x]);
}

TEST_CASE("cli: numeric aborts exit with code 3") {
    const fs::path dir = kTmp / "numeric";
    write_file(dir / "conf.json", glyph_config((dir / "run").string(), 3, 3, "minimal", "1e30"));
    const CmdResult r = run_cli("train --quiet --config " + (dir / "conf.json").string(), dir);
    CHECK(r.exit_code == 3);
    CHECK(r.stderr_text.find("non-finite") != std::string::npos);
}

TEST_CASE("cli: gradcheck smoke test on the mlp preset") {
    const fs::path dir = kTmp / "gradcheck";
    const CmdResult r = run_cli("gradcheck --arch mlp --seeds 2 --coords 8", dir);
    CHECK(r.exit_code == 0);
}
