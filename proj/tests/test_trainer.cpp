#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "seda/checkpoint.hpp"
#include "seda/presets.hpp"
#include "seda/trainer.hpp"

using namespace seda;

namespace {

// Small, fast setup: mlp on glyphs.
SyntheticPair small_glyphs(int n_train = 96, int n_test = 64, std::uint64_t seed = 21,
                           bool shifted = false) {
    SyntheticSpec spec;
    spec.n_train = n_train;
    spec.n_test = n_test;
    spec.class_count = 10;
    spec.seed = seed;
    if (shifted) {
        spec.shift.rotation_deg = 25.0;
        spec.shift.intensity_invert = true;
        spec.shift.noise_sigma = 0.1;
    }
    return gen_synthetic(spec);
}

TrainSetup mlp_setup(int epochs, double lambda_se, double lambda_cb, std::uint64_t seed) {
    TrainSetup setup;
    setup.net = make_architecture("mlp", {16, 16, 1}, 10, 0.125);
    setup.augment_source = AugmentConfig::minimal();
    setup.augment_target = AugmentConfig::minimal();
    setup.train.epochs = epochs;
    setup.train.batch_size = 32;
    setup.train.seed = seed;
    setup.train.weights.lambda_se = lambda_se;
    setup.train.weights.lambda_cb = lambda_cb;
    setup.train.epoch_definition = EpochDefinition::SourcePass;
    return setup;
}

TrainData pair_to_data(SyntheticPair pair) {
    TrainData data;
    data.source_train = std::move(pair.source_train);
    data.source_test = std::move(pair.source_test);
    data.target_train = std::move(pair.target_train);
    data.target_test = std::move(pair.target_test);
    return data;
}

bool stores_bitwise_equal(const ParamStore<float>& a, const ParamStore<float>& b) {
    if (a.entries.size() != b.entries.size()) return false;
    for (std::size_t k = 0; k < a.entries.size(); ++k) {
        if (a.entries[k].name != b.entries[k].name) return false;
        if (a.entries[k].value.vec() != b.entries[k].value.vec()) return false;
        if (a.entries[k].adam_m.vec() != b.entries[k].adam_m.vec()) return false;
        if (a.entries[k].adam_v.vec() != b.entries[k].adam_v.vec()) return false;
    }
    return a.step_count == b.step_count;
}

std::string tmp_file(const char* name) {
    const auto dir = std::filesystem::temp_directory_path() / "seda_trainer_tests";
    std::filesystem::create_directories(dir);
    return (dir / name).string();
}

} // namespace

TEST_CASE("disabled unsupervised losses reproduce a plain supervised loop bitwise") {
    const TrainData data = pair_to_data(small_glyphs());
    const TrainSetup setup = mlp_setup(3, 0.0, 0.0, 5);
    const RunResult full = run_training(data, setup);

    // Independent supervised loop over the source batches, using the same
    // published stream-derivation scheme.
    const TrainConfig& cfg = setup.train;
    Rng init_rng(mix_seed({cfg.seed, tag("init")}));
    ParamStore<float> student = init_params<float>(setup.net, init_rng);
    std::vector<double> ce_history;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        Rng shuffle(mix_seed({cfg.seed, tag("shuffle-src"), static_cast<std::uint64_t>(epoch)}));
        const auto batches = batch_iter(data.source_train, cfg.batch_size, shuffle);
        double ce_sum = 0.0;
        for (std::size_t it = 0; it < batches.size(); ++it) {
            Rng iter_rng(mix_seed({cfg.seed, tag("iter"), static_cast<std::uint64_t>(epoch),
                                   static_cast<std::uint64_t>(it)}));
            const std::uint64_t aug_seed = iter_rng.next_u64();
            Rng dropout = iter_rng.fork();
            const Tensor<float> images = data.source_train.gather(batches[it]);
            std::vector<int> labels(batches[it].size());
            for (std::size_t k = 0; k < labels.size(); ++k)
                labels[k] = data.source_train.labels[static_cast<std::size_t>(batches[it][k])];
            const Tensor<float> views = augment_batch(images, setup.augment_source, aug_seed);
            ForwardOptions opts;
            opts.mode = Mode::Train;
            ForwardCache<float> cache;
            const Tensor<float> probs = forward(setup.net, student, views, opts, &dropout, &cache);
            ce_sum += static_cast<double>(cross_entropy(probs, labels));
            backward(setup.net, student, cache, cross_entropy_grad(probs, labels));
            adam_step(student, AdamConfig{cfg.lr, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_epsilon});
            student.zero_grads();
        }
        ce_history.push_back(ce_sum / static_cast<double>(batches.size()));
    }

    CHECK(stores_bitwise_equal(full.student, student));
    REQUIRE(full.history.size() == ce_history.size());
    for (std::size_t e = 0; e < ce_history.size(); ++e) {
        CHECK(full.history[e].ce_loss == ce_history[e]);
        CHECK(full.history[e].se_loss == 0.0);
        CHECK(full.history[e].cb_loss == 0.0);
        CHECK(full.history[e].pass_rate == 0.0);
    }
}

TEST_CASE("an impossible confidence threshold masks the unsupervised losses") {
    const TrainData data = pair_to_data(small_glyphs());
    TrainSetup setup = mlp_setup(2, 3.0, 0.005, 6);
    setup.train.weights.confidence_threshold = 1.0;  // strictly-greater: nothing passes
    const RunResult result = run_training(data, setup);
    for (const auto& m : result.history) {
        CHECK(m.pass_rate == 0.0);
        CHECK(m.se_loss == 0.0);
    }
}

TEST_CASE("train_iteration: ema_alpha=0 makes the teacher the post-step student") {
    const TrainData data = pair_to_data(small_glyphs(48, 16));
    TrainSetup setup = mlp_setup(1, 3.0, 0.005, 7);
    setup.train.ema_alpha = 0.0;
    Rng init_rng(mix_seed({setup.train.seed, tag("init")}));
    ParamStore<float> student = init_params<float>(setup.net, init_rng);
    ParamStore<float> teacher = student;
    std::vector<int> idx;
    for (int i = 0; i < 32; ++i) idx.push_back(i);
    const Tensor<float> src = data.source_train.gather(idx);
    std::vector<int> labels(32);
    for (int i = 0; i < 32; ++i)
        labels[static_cast<std::size_t>(i)] = data.source_train.labels[static_cast<std::size_t>(i)];
    const Tensor<float> tgt = data.target_train.gather(idx);
    Rng rng(9);
    (void)train_iteration(setup.net, student, teacher, src, labels, tgt, setup.train,
                          setup.augment_source, setup.augment_target, 0, rng);
    for (std::size_t k = 0; k < student.entries.size(); ++k)
        CHECK(teacher.entries[k].value.vec() == student.entries[k].value.vec());
}

TEST_CASE("the teacher moves only through the ema update") {
    const TrainData data = pair_to_data(small_glyphs(48, 16));
    TrainSetup setup = mlp_setup(1, 3.0, 0.005, 8);
    Rng init_rng(mix_seed({setup.train.seed, tag("init")}));
    ParamStore<float> student = init_params<float>(setup.net, init_rng);
    ParamStore<float> teacher = student;
    const ParamStore<float> teacher_before = teacher;

    std::vector<int> idx;
    for (int i = 0; i < 24; ++i) idx.push_back(i);
    const Tensor<float> src = data.source_train.gather(idx);
    std::vector<int> labels(24);
    for (int i = 0; i < 24; ++i)
        labels[static_cast<std::size_t>(i)] = data.source_train.labels[static_cast<std::size_t>(i)];
    const Tensor<float> tgt = data.target_train.gather(idx);
    Rng rng(10);
    (void)train_iteration(setup.net, student, teacher, src, labels, tgt, setup.train,
                          setup.augment_source, setup.augment_target, 0, rng);

    // teacher_after must equal exactly alpha*teacher_before + (1-alpha)*student_after
    const float a = static_cast<float>(setup.train.ema_alpha);
    for (std::size_t k = 0; k < teacher.entries.size(); ++k) {
        const auto& tb = teacher_before.entries[k].value;
        const auto& sa = student.entries[k].value;
        const auto& ta = teacher.entries[k].value;
        for (std::size_t i = 0; i < ta.size(); ++i)
            CHECK(ta[i] == a * tb[i] + (1.0f - a) * sa[i]);
        CHECK(teacher.entries[k].adam_m.vec() == teacher_before.entries[k].adam_m.vec());
    }
    CHECK(teacher.step_count == 0);
    CHECK(student.step_count == 1);
}

TEST_CASE("evaluate: perfect predictions, argmax recount, random-baseline accuracy") {
    const SyntheticPair pair = small_glyphs(64, 400, 23);
    NetworkSpec net = make_architecture("mlp", {16, 16, 1}, 10, 0.125);
    Rng rng(3);
    auto params = init_params<float>(net, rng);

    // brute-force recount oracle on an untrained network
    const EvalResult r = evaluate(net, params, pair.source_test);
    const Tensor<float> probs =
        forward(net, params, pair.source_test.images, ForwardOptions{});
    int correct = 0;
    for (int i = 0; i < pair.source_test.size(); ++i) {
        int pred = 0;
        for (int j = 1; j < 10; ++j)
            if (probs[static_cast<std::size_t>(i) * 10 + j] >
                probs[static_cast<std::size_t>(i) * 10 + pred])
                pred = j;
        correct += pred == pair.source_test.labels[static_cast<std::size_t>(i)] ? 1 : 0;
    }
    CHECK(r.accuracy == doctest::Approx(static_cast<double>(correct) / pair.source_test.size())
                            .epsilon(1e-12));
    std::int64_t trace = 0, total = 0;
    for (int t = 0; t < 10; ++t)
        for (int p = 0; p < 10; ++p) {
            total += r.confusion[static_cast<std::size_t>(t)][static_cast<std::size_t>(p)];
            if (t == p) trace += r.confusion[static_cast<std::size_t>(t)][static_cast<std::size_t>(p)];
        }
    CHECK(total == pair.source_test.size());
    CHECK(r.accuracy == doctest::Approx(static_cast<double>(trace) / total).epsilon(1e-12));

    // a constant predictor against shuffled labels lands near chance
    for (auto& e : params.entries)
        if (e.name.find(".w") != std::string::npos || e.name.find(".b") != std::string::npos)
            std::fill(e.value.begin(), e.value.end(), 0.0f);
    const EvalResult chance = evaluate(net, params, pair.source_test);
    CHECK(chance.accuracy == doctest::Approx(0.1).epsilon(0.35));
    CHECK(chance.top_class_freq == 1.0);  // uniform probs, lowest-index tie break

    DomainDataset unlabeled = pair.source_test;
    unlabeled.labels.clear();
    CHECK_THROWS_AS((void)evaluate(net, params, unlabeled), ConfigError);
}

TEST_CASE("run_training is deterministic and tracks the best pass rate") {
    const TrainData data = pair_to_data(small_glyphs(96, 48, 29, true));
    const TrainSetup setup = mlp_setup(4, 3.0, 0.005, 11);
    const RunResult a = run_training(data, setup);
    const RunResult b = run_training(data, setup);
    REQUIRE(a.history.size() == b.history.size());
    for (std::size_t e = 0; e < a.history.size(); ++e) {
        CHECK(a.history[e].ce_loss == b.history[e].ce_loss);
        CHECK(a.history[e].se_loss == b.history[e].se_loss);
        CHECK(a.history[e].pass_rate == b.history[e].pass_rate);
        CHECK(a.history[e].teacher_tgt_acc == b.history[e].teacher_tgt_acc);
    }
    CHECK(stores_bitwise_equal(a.student, b.student));
    CHECK(stores_bitwise_equal(a.teacher, b.teacher));

    // early stop: argmax of pass rate, first occurrence on ties
    int best = 0;
    for (std::size_t e = 1; e < a.history.size(); ++e)
        if (a.history[e].pass_rate > a.history[static_cast<std::size_t>(best)].pass_rate)
            best = static_cast<int>(e);
    CHECK(a.best_epoch == best);
}

TEST_CASE("checkpoint round trip is byte-exact and resume continues bitwise") {
    const TrainData data = pair_to_data(small_glyphs(96, 48, 31, true));
    TrainSetup setup = mlp_setup(4, 3.0, 0.005, 13);

    const RunResult uninterrupted = run_training(data, setup);

    TrainSetup half = setup;
    half.train.epochs = 2;
    const RunResult first_half = run_training(data, half);

    // save -> load -> save produces identical bytes
    Checkpoint ckpt;
    ckpt.spec = setup.net;
    ckpt.student = first_half.student;
    ckpt.teacher = first_half.teacher;
    ckpt.stats = data.source_train.stats;
    ckpt.seed = setup.train.seed;
    ckpt.epoch = 2;
    ckpt.config_json = "{\"train\":{\"epochs\":4}}";
    const std::string p1 = tmp_file("a.ckpt");
    const std::string p2 = tmp_file("b.ckpt");
    checkpoint_save(p1, ckpt);
    const Checkpoint loaded = checkpoint_load(p1);
    checkpoint_save(p2, loaded);
    std::ifstream f1(p1, std::ios::binary), f2(p2, std::ios::binary);
    const std::string bytes1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
    const std::string bytes2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
    CHECK(bytes1 == bytes2);
    CHECK(loaded.spec == setup.net);
    CHECK(loaded.epoch == 2);
    CHECK(loaded.config_json == ckpt.config_json);
    CHECK(stores_bitwise_equal(loaded.student, first_half.student));

    // resume from the loaded state and compare against the uninterrupted run
    ResumeState resume;
    resume.student = loaded.student;
    resume.teacher = loaded.teacher;
    resume.start_epoch = loaded.epoch;
    const RunResult second_half = run_training(data, setup, &resume);
    REQUIRE(second_half.history.size() == 2);
    for (std::size_t e = 0; e < 2; ++e) {
        const auto& got = second_half.history[e];
        const auto& want = uninterrupted.history[e + 2];
        CHECK(got.epoch == want.epoch);
        CHECK(got.ce_loss == want.ce_loss);
        CHECK(got.se_loss == want.se_loss);
        CHECK(got.cb_loss == want.cb_loss);
        CHECK(got.pass_rate == want.pass_rate);
        CHECK(got.teacher_tgt_acc == want.teacher_tgt_acc);
    }
    CHECK(stores_bitwise_equal(second_half.student, uninterrupted.student));
    CHECK(stores_bitwise_equal(second_half.teacher, uninterrupted.teacher));
}

TEST_CASE("checkpoint load rejects unknown versions and corrupt files") {
    const TrainData data = pair_to_data(small_glyphs(48, 16));
    TrainSetup setup = mlp_setup(1, 0.0, 0.0, 17);
    const RunResult r = run_training(data, setup);
    Checkpoint ckpt;
    ckpt.spec = setup.net;
    ckpt.student = r.student;
    ckpt.teacher = r.teacher;
    ckpt.stats = data.source_train.stats;
    const std::string path = tmp_file("version.ckpt");
    checkpoint_save(path, ckpt);
    {
        std::fstream f(path, std::ios::binary | std::ios::in | std::ios::out);
        f.seekp(8);  // version field follows the 8-byte magic
        const std::uint32_t bogus = 99;
        f.write(reinterpret_cast<const char*>(&bogus), 4);
    }
    CHECK_THROWS_WITH_AS(checkpoint_load(path), doctest::Contains("version"), IoError);

    const std::string garbage = tmp_file("garbage.ckpt");
    {
        std::ofstream f(garbage, std::ios::binary | std::ios::trunc);
        f << "not a checkpoint";
    }
    CHECK_THROWS_AS(checkpoint_load(garbage), IoError);
}

TEST_CASE("metrics csv carries the documented schema") {
    EpochMetrics m;
    m.epoch = 0;
    m.ce_loss = 1.5;
    m.pass_rate = 0.25;
    const std::string csv = metrics_csv({m});
    CHECK(csv.find("epoch,ce_loss,se_loss,cb_loss,pass_rate,student_src_acc,student_tgt_acc,"
                   "teacher_src_acc,teacher_tgt_acc\n") == 0);
    CHECK(csv.find("0,1.5,0,0,0.25,0,0,0,0\n") != std::string::npos);
}

TEST_CASE("null shift: source-trained model scores comparably on both domains") {
    // identical generator for both domains; a supervised source model should
    // not separate them
    const TrainData data = pair_to_data(small_glyphs(384, 512, 41, false));
    TrainSetup setup = mlp_setup(8, 0.0, 0.0, 19);
    setup.train.batch_size = 64;
    const RunResult r = run_training(data, setup);
    const auto& last = r.history.back();
    CHECK(std::abs(last.student_src_acc - last.student_tgt_acc) <= 0.03);
}

TEST_CASE("self-ensembling on the same labeled dataset does not hurt") {
    SyntheticPair pair = small_glyphs(512, 256, 43, false);
    TrainData data;
    data.source_train = pair.source_train;
    data.source_test = pair.source_test;
    data.target_train = pair.source_train;  // same dataset in both roles
    data.target_test = pair.source_test;

    // batch 8 over 10 epochs gives the EMA teacher enough updates to track
    // the student (alpha 0.99 needs a few hundred steps)
    TrainSetup baseline = mlp_setup(10, 0.0, 0.0, 23);
    baseline.train.batch_size = 8;
    baseline.train.lr = 0.002;
    TrainSetup ensembled = mlp_setup(10, 3.0, 0.005, 23);
    ensembled.train.batch_size = 8;
    ensembled.train.lr = 0.002;

    const RunResult base = run_training(data, baseline);
    const RunResult self = run_training(data, ensembled);
    CHECK(self.history.back().teacher_tgt_acc >= base.history.back().student_tgt_acc - 0.02);
}

TEST_CASE("training aborts with a numeric error when the loss explodes") {
    const TrainData data = pair_to_data(small_glyphs(48, 16, 47));
    TrainSetup setup = mlp_setup(3, 0.0, 0.0, 29);
    setup.train.lr = 1e30;  // guarantees non-finite activations quickly
    CHECK_THROWS_AS((void)run_training(data, setup), NumericError);
}

TEST_CASE("gaussian ramp-up mode trains and reports the final epoch as best") {
    const TrainData data = pair_to_data(small_glyphs(96, 48, 51));
    TrainSetup setup = mlp_setup(3, 3.0, 0.0, 31);
    setup.train.weights.mode = WeightMode::GaussianRampup;
    setup.train.weights.rampup_epochs = 10;
    const RunResult r = run_training(data, setup);
    CHECK(r.best_epoch == 2);
    for (const auto& m : r.history) CHECK(m.cb_loss == 0.0);
}
