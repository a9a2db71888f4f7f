#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "seda/checkpoint.hpp"
#include "seda/gradsuite.hpp"
#include "seda/pgm.hpp"
#include "seda/runconfig.hpp"

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

std::string slurp(const std::string& path, const char* what) {
    std::ifstream f(path);
    if (!f) throw seda::ConfigError(std::string("cannot open ") + what + " " + path);
    std::stringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

seda::Checkpoint make_checkpoint(const seda::ResolvedRun& run, const seda::ParamStore<float>& student,
                                 const seda::ParamStore<float>& teacher, int epoch,
                                 const std::string& resolved_json) {
    seda::Checkpoint ckpt;
    ckpt.spec = run.setup.net;
    ckpt.student = student;
    ckpt.teacher = teacher;
    ckpt.stats = run.stats;
    ckpt.seed = run.setup.train.seed;
    ckpt.epoch = epoch;
    ckpt.config_json = resolved_json;
    return ckpt;
}

int cmd_train(const std::string& config_path, long long seed_override, std::string out_dir,
              bool quiet) {
    seda::RunConfig cfg = seda::load_run_config(config_path);
    if (seed_override >= 0) cfg.train.seed = static_cast<std::uint64_t>(seed_override);
    if (!out_dir.empty()) cfg.output_dir = out_dir;
    const std::string resolved = seda::resolved_config_json(cfg);

    seda::ResolvedRun run = seda::build_run(cfg);
    fs::create_directories(cfg.output_dir);
    {
        std::ofstream f(cfg.output_dir + "/resolved-config.json", std::ios::trunc);
        f << resolved;
    }

    const seda::EpochCallback on_epoch = [&](const seda::EpochMetrics& m) {
        if (quiet) return;
        std::printf(
            "epoch %3d  ce %.4f  se %.4f  cb %.4f  pass %.3f  student %.4f/%.4f  teacher %.4f/%.4f\n",
            m.epoch, m.ce_loss, m.se_loss, m.cb_loss, m.pass_rate, m.student_src_acc,
            m.student_tgt_acc, m.teacher_src_acc, m.teacher_tgt_acc);
        std::fflush(stdout);
    };

    const seda::RunResult result = seda::run_training(run.data, run.setup, nullptr, on_epoch);
    seda::write_metrics_csv(cfg.output_dir + "/metrics.csv", result.history);
    seda::checkpoint_save(cfg.output_dir + "/final.ckpt",
                          make_checkpoint(run, result.student, result.teacher,
                                          result.epochs_completed, resolved));
    seda::checkpoint_save(cfg.output_dir + "/early_stop.ckpt",
                          make_checkpoint(run, result.best_student, result.best_teacher,
                                          result.best_epoch + 1, resolved));
    if (!quiet) {
        const seda::EpochMetrics& best = result.history[static_cast<std::size_t>(result.best_epoch)];
        const bool teacher = run.setup.train.eval_network != seda::EvalNetwork::Student;
        std::printf("early stop at epoch %d (pass rate %.3f): target accuracy %.4f (%s)\n",
                    result.best_epoch, best.pass_rate,
                    teacher ? best.teacher_tgt_acc : best.student_tgt_acc,
                    teacher ? "teacher" : "student");
    }
    return 0;
}

int cmd_eval(const std::string& ckpt_path, const std::string& data_path,
             const std::string& network) {
    const seda::Checkpoint ckpt = seda::checkpoint_load(ckpt_path);
    seda::DomainDataset ds = seda::parse_eval_dataset(slurp(data_path, "eval data spec"),
                                                      &ckpt.stats);
    if (!ds.labeled()) throw seda::ConfigError("eval dataset has no labels");
    seda::ParamStore<float> params = network == "student" ? ckpt.student : ckpt.teacher;
    const seda::EvalResult r = seda::evaluate(ckpt.spec, params, ds);
    json out = {{"network", network},
                {"samples", ds.size()},
                {"accuracy", r.accuracy},
                {"mean_class_accuracy", r.mean_class_accuracy},
                {"confusion", r.confusion}};
    std::cout << out.dump(2) << "\n";
    return 0;
}

int cmd_gen_data(const std::string& spec_path, const std::string& out_dir) {
    const seda::SyntheticSpec spec = seda::parse_synthetic_spec(slurp(spec_path, "synthetic spec"));
    const seda::RawSynthetic raw = seda::gen_synthetic_raw(spec);
    fs::create_directories(out_dir);
    auto emit = [&](const char* stem, const seda::RawImages& images,
                    const std::vector<int>& labels) {
        seda::write_idx_images(out_dir + "/" + stem + "-images-idx3-ubyte", images);
        seda::write_idx_labels(out_dir + "/" + stem + "-labels-idx1-ubyte", labels);
    };
    emit("source-train", raw.source_train, raw.source_train_labels);
    emit("source-test", raw.source_test, raw.source_test_labels);
    emit("target-train", raw.target_train, raw.target_train_labels);
    emit("target-test", raw.target_test, raw.target_test_labels);
    std::printf("wrote 8 IDX files to %s\n", out_dir.c_str());
    return 0;
}

int cmd_preview_aug(const std::string& config_path, const std::string& out_path, int count) {
    const seda::RunConfig cfg = seda::load_run_config(config_path);
    const seda::ResolvedRun run = seda::build_run(cfg);
    const int n = std::min(count, run.data.source_train.size());
    if (n < 1) throw seda::ConfigError("preview-aug: no samples available");
    std::vector<seda::Tensor<float>> tiles;
    for (int i = 0; i < n; ++i) {
        const seda::Tensor<float> original = run.data.source_train.sample(i);
        seda::Rng rng(seda::mix_seed({cfg.train.seed, seda::tag("preview"),
                                      static_cast<std::uint64_t>(i)}));
        tiles.push_back(original);
        tiles.push_back(seda::augment_view(original, run.setup.augment_source, rng));
    }
    seda::write_pgm(out_path, seda::tile_grid(tiles, 2));
    std::printf("wrote %d before/after pairs to %s\n", n, out_path.c_str());
    return 0;
}

int cmd_gradcheck(const std::string& arch, int seeds, int coords) {
    bool ok = true;
    auto report = [&](const seda::GradSuiteEntry& e) {
        const bool pass = e.max_rel_err <= seda::kGradCheckTolerance;
        ok = ok && pass;
        std::printf("%-18s max rel err %.3e over %zu coords  [%s]\n", e.name.c_str(),
                    e.max_rel_err, e.coords_checked, pass ? "ok" : "FAIL");
    };
    if (arch.empty() || arch == "layers")
        for (const auto& e : seda::gradcheck_layer_suite(seeds)) report(e);
    if (arch.empty()) {
        for (const auto& preset : seda::architecture_presets())
            report(seda::gradcheck_preset(preset, seeds, static_cast<std::size_t>(coords)));
    } else if (arch != "layers") {
        report(seda::gradcheck_preset(arch, seeds, static_cast<std::size_t>(coords)));
    }
    if (!ok) std::fprintf(stderr, "error: gradient check exceeded tolerance %.1e\n",
                          seda::kGradCheckTolerance);
    return ok ? 0 : 1;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Self-ensembling domain adaptation trainer"};
    app.require_subcommand(1);

    auto* train = app.add_subcommand("train", "Train from a JSON run config");
    std::string train_config, train_out;
    long long train_seed = -1;
    bool train_quiet = false;
    train->add_option("--config", train_config, "Run config JSON")->required();
    train->add_option("--seed", train_seed, "Override train.seed");
    train->add_option("--out", train_out, "Override output.dir");
    train->add_flag("--quiet", train_quiet, "Suppress per-epoch output");

    auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on a dataset");
    std::string eval_ckpt, eval_data, eval_network = "teacher";
    eval->add_option("--checkpoint", eval_ckpt, "Checkpoint file")->required();
    eval->add_option("--data", eval_data, "Dataset spec JSON")->required();
    eval->add_option("--network", eval_network, "student or teacher")
        ->check(CLI::IsMember({"student", "teacher"}));

    auto* gen = app.add_subcommand("gen-data", "Write a synthetic dataset pair as IDX files");
    std::string gen_spec, gen_out;
    gen->add_option("--spec", gen_spec, "Synthetic spec JSON")->required();
    gen->add_option("--out", gen_out, "Output directory")->required();

    auto* preview = app.add_subcommand("preview-aug", "Dump a before/after augmentation grid");
    std::string prev_config, prev_out;
    int prev_count = 8;
    preview->add_option("--config", prev_config, "Run config JSON")->required();
    preview->add_option("--out", prev_out, "Output PGM path")->required();
    preview->add_option("--count", prev_count, "Sample count");

    auto* grad = app.add_subcommand("gradcheck", "Finite-difference gradient checks");
    std::string grad_arch;
    int grad_seeds = 20, grad_coords = 16;
    grad->add_option("--arch", grad_arch, "Preset (default: layer suite + all presets)");
    grad->add_option("--seeds", grad_seeds, "Random instances per case");
    grad->add_option("--coords", grad_coords, "Sampled coordinates per tensor (presets)");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*train) return cmd_train(train_config, train_seed, train_out, train_quiet);
        if (*eval) return cmd_eval(eval_ckpt, eval_data, eval_network);
        if (*gen) return cmd_gen_data(gen_spec, gen_out);
        if (*preview) return cmd_preview_aug(prev_config, prev_out, prev_count);
        if (*grad) return cmd_gradcheck(grad_arch, grad_seeds, grad_coords);
    } catch (const seda::NumericError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 3;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
    return 2;
}
