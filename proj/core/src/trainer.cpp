#include "seda/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

namespace seda {

namespace {

bool target_side_active(const LossWeights& w) {
    if (w.mode == WeightMode::GaussianRampup) return w.lambda_se > 0.0;
    return w.lambda_se > 0.0 || w.lambda_cb > 0.0;
}

std::string format_g(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.10g", v);
    return buf;
}

} // namespace

IterationRecord train_iteration(const NetworkSpec& net, ParamStore<float>& student,
                                ParamStore<float>& teacher, const Tensor<float>& src_images,
                                std::span<const int> src_labels, const Tensor<float>& tgt_images,
                                const TrainConfig& cfg, const AugmentConfig& aug_source,
                                const AugmentConfig& aug_target, int epoch, Rng& rng) {
    if (!teacher.layout_matches(student))
        throw ShapeError("train_iteration: teacher/student layouts differ");

    IterationRecord rec;
    const bool with_target = target_side_active(cfg.weights);

    // Randomness is consumed in a fixed order; when the unsupervised side is
    // disabled its draws are skipped entirely, which keeps the run bitwise
    // identical to a plain supervised loop over the source batches.
    const std::uint64_t aug_src_seed = rng.next_u64();
    Rng drop_src = rng.fork();

    ForwardOptions train_opts;
    train_opts.mode = Mode::Train;

    const Tensor<float> src_views = augment_batch(src_images, aug_source, aug_src_seed);
    ForwardCache<float> src_cache;
    const Tensor<float> src_probs =
        forward(net, student, src_views, train_opts, &drop_src, &src_cache);
    rec.ce = static_cast<double>(cross_entropy(src_probs, src_labels));

    Tensor<float> tgt_student_probs, tgt_teacher_probs;
    ForwardCache<float> tgt_cache;
    ConfidenceMask mask;
    if (with_target) {
        const std::uint64_t aug_tgt_seed = rng.next_u64();
        Rng drop_tgt_student = rng.fork();
        Rng drop_tgt_teacher = rng.fork();

        auto views = augment_batch_pair(tgt_images, aug_target, aug_tgt_seed);
        tgt_student_probs =
            forward(net, student, views.first, train_opts, &drop_tgt_student, &tgt_cache);
        // The teacher runs in train mode on its own view batch (per-batch
        // normalization statistics) but its running statistics are tracked by
        // the EMA update, not by its own passes, and no gradients flow.
        ForwardOptions teacher_opts;
        teacher_opts.mode = Mode::Train;
        teacher_opts.update_running_stats = false;
        tgt_teacher_probs = forward(net, teacher, views.second, teacher_opts, &drop_tgt_teacher,
                                    static_cast<ForwardCache<float>*>(nullptr));

        if (cfg.weights.mode == WeightMode::ConfidenceThreshold) {
            mask = confidence_mask(tgt_teacher_probs, cfg.weights.confidence_threshold);
        } else {
            mask.mask.assign(static_cast<std::size_t>(tgt_images.dim(0)), 1);
            mask.pass_rate = 1.0;
        }
        rec.se = static_cast<double>(
            self_ensembling_loss(tgt_student_probs, tgt_teacher_probs, mask));
        if (cfg.weights.mode == WeightMode::ConfidenceThreshold)
            rec.cb = static_cast<double>(class_balance_loss(tgt_student_probs));
        rec.pass_rate = mask.pass_rate;
    }

    rec.total = combine_losses(rec.ce, rec.se, rec.cb, cfg.weights, rec.pass_rate, epoch);
    if (!std::isfinite(rec.total))
        throw NumericError("non-finite loss at epoch " + std::to_string(epoch) +
                           ": ce=" + format_g(rec.ce) + " se=" + format_g(rec.se) +
                           " cb=" + format_g(rec.cb));

    backward(net, student, src_cache, cross_entropy_grad(src_probs, src_labels));
    if (with_target) {
        Tensor<float> dtgt = self_ensembling_grad(tgt_student_probs, tgt_teacher_probs, mask);
        float se_scale;
        if (cfg.weights.mode == WeightMode::GaussianRampup)
            se_scale = static_cast<float>(
                rampup_weight(epoch, cfg.weights.rampup_epochs) * cfg.weights.lambda_se);
        else
            se_scale = static_cast<float>(cfg.weights.lambda_se);
        for (auto& v : dtgt) v *= se_scale;
        if (cfg.weights.mode == WeightMode::ConfidenceThreshold && cfg.weights.lambda_cb > 0.0) {
            const Tensor<float> dcb = class_balance_grad(tgt_student_probs);
            const float cb_scale = static_cast<float>(cfg.weights.lambda_cb * rec.pass_rate);
            for (std::size_t i = 0; i < dtgt.size(); ++i) dtgt[i] += cb_scale * dcb[i];
        }
        backward(net, student, tgt_cache, dtgt);
    }

    AdamConfig adam{cfg.lr, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_epsilon};
    adam_step(student, adam);
    student.zero_grads();
    ema_update(teacher, student, cfg.ema_alpha);
    return rec;
}

EvalResult evaluate(const NetworkSpec& net, ParamStore<float>& params, const DomainDataset& ds,
                    int batch_size) {
    if (!ds.labeled()) throw ConfigError("evaluate: dataset '" + ds.name + "' has no labels");
    ds.validate();
    const int n = ds.size();
    const int c = net.class_count();
    EvalResult out;
    out.confusion.assign(static_cast<std::size_t>(c),
                         std::vector<std::int64_t>(static_cast<std::size_t>(c), 0));
    ForwardOptions opts;  // eval mode
    for (int at = 0; at < n; at += batch_size) {
        const int take = std::min(batch_size, n - at);
        std::vector<int> idx(static_cast<std::size_t>(take));
        for (int i = 0; i < take; ++i) idx[static_cast<std::size_t>(i)] = at + i;
        const Tensor<float> batch = ds.gather(idx);
        const Tensor<float> probs = forward(net, params, batch, opts);
        for (int i = 0; i < take; ++i) {
            const float* row = probs.data() + static_cast<std::size_t>(i) * c;
            int pred = 0;
            for (int j = 1; j < c; ++j)
                if (row[j] > row[pred]) pred = j;
            const int truth = ds.labels[static_cast<std::size_t>(at + i)];
            out.confusion[static_cast<std::size_t>(truth)][static_cast<std::size_t>(pred)] += 1;
        }
    }
    std::int64_t correct = 0;
    double class_acc_sum = 0.0;
    int classes_with_support = 0;
    std::vector<std::int64_t> predicted(static_cast<std::size_t>(c), 0);
    for (int t = 0; t < c; ++t) {
        std::int64_t support = 0;
        for (int p = 0; p < c; ++p) {
            const std::int64_t v = out.confusion[static_cast<std::size_t>(t)][static_cast<std::size_t>(p)];
            support += v;
            predicted[static_cast<std::size_t>(p)] += v;
        }
        correct += out.confusion[static_cast<std::size_t>(t)][static_cast<std::size_t>(t)];
        if (support > 0) {
            class_acc_sum +=
                static_cast<double>(out.confusion[static_cast<std::size_t>(t)][static_cast<std::size_t>(t)]) /
                static_cast<double>(support);
            ++classes_with_support;
        }
    }
    out.accuracy = static_cast<double>(correct) / static_cast<double>(n);
    out.mean_class_accuracy =
        classes_with_support > 0 ? class_acc_sum / classes_with_support : 0.0;
    out.top_class_freq =
        static_cast<double>(*std::max_element(predicted.begin(), predicted.end())) /
        static_cast<double>(n);
    return out;
}

RunResult run_training(const TrainData& data, const TrainSetup& setup, const ResumeState* resume,
                       const EpochCallback& on_epoch) {
    setup.net.validate();
    setup.train.validate();
    if (!data.source_train.labeled()) throw ConfigError("run_training: source dataset is unlabeled");
    data.source_train.validate();
    data.target_train.validate();
    if (data.source_train.class_count != setup.net.class_count())
        throw ConfigError("run_training: network has " + std::to_string(setup.net.class_count()) +
                          " classes but the source dataset has " +
                          std::to_string(data.source_train.class_count));
    if (data.source_test.size() == 0 || data.target_test.size() == 0)
        throw ConfigError("run_training: evaluation splits must be non-empty");

    const TrainConfig& cfg = setup.train;
    RunResult result;
    if (resume) {
        result.student = resume->student;
        result.teacher = resume->teacher;
    } else {
        Rng init_rng(mix_seed({cfg.seed, tag("init")}));
        result.student = init_params<float>(setup.net, init_rng);
        result.teacher = result.student;  // exact copy at step 0
    }
    const int start_epoch = resume ? resume->start_epoch : 0;

    const int n_src = data.source_train.size();
    const int n_tgt = data.target_train.size();
    int n_ref = 0;
    switch (cfg.epoch_definition) {
        case EpochDefinition::TargetPass: n_ref = n_tgt; break;
        case EpochDefinition::SourcePass: n_ref = n_src; break;
        case EpochDefinition::LargerPass: n_ref = std::max(n_src, n_tgt); break;
    }
    const int iters = (n_ref + cfg.batch_size - 1) / cfg.batch_size;
    const bool with_target = target_side_active(cfg.weights);

    EarlyStopState early;
    for (int epoch = start_epoch; epoch < cfg.epochs; ++epoch) {
        Rng src_shuffle(mix_seed({cfg.seed, tag("shuffle-src"), static_cast<std::uint64_t>(epoch)}));
        const std::int64_t src_span = static_cast<std::int64_t>(iters) * cfg.batch_size;
        const auto src_batches =
            batch_iter(data.source_train, cfg.batch_size, src_shuffle,
                       n_ref == n_src ? static_cast<std::int64_t>(n_src) : src_span);
        std::vector<std::vector<int>> tgt_batches;
        if (with_target) {
            Rng tgt_shuffle(
                mix_seed({cfg.seed, tag("shuffle-tgt"), static_cast<std::uint64_t>(epoch)}));
            tgt_batches = batch_iter(data.target_train, cfg.batch_size, tgt_shuffle,
                                     n_ref == n_tgt ? static_cast<std::int64_t>(n_tgt)
                                                    : static_cast<std::int64_t>(iters) * cfg.batch_size);
        }

        EpochMetrics m;
        m.epoch = epoch;
        for (int it = 0; it < iters; ++it) {
            const auto& src_idx = src_batches[static_cast<std::size_t>(it)];
            const Tensor<float> src_images = data.source_train.gather(src_idx);
            std::vector<int> src_labels(src_idx.size());
            for (std::size_t k = 0; k < src_idx.size(); ++k)
                src_labels[k] =
                    data.source_train.labels[static_cast<std::size_t>(src_idx[k])];
            Tensor<float> tgt_images;
            if (with_target)
                tgt_images = data.target_train.gather(tgt_batches[static_cast<std::size_t>(it)]);

            Rng iter_rng(mix_seed({cfg.seed, tag("iter"), static_cast<std::uint64_t>(epoch),
                                   static_cast<std::uint64_t>(it)}));
            IterationRecord rec;
            try {
                rec = train_iteration(setup.net, result.student, result.teacher, src_images,
                                      src_labels, tgt_images, cfg, setup.augment_source,
                                      setup.augment_target, epoch, iter_rng);
            } catch (const NumericError& e) {
                throw NumericError(std::string(e.what()) + " (iteration " + std::to_string(it) +
                                   ")");
            }
            m.ce_loss += rec.ce;
            m.se_loss += rec.se;
            m.cb_loss += rec.cb;
            m.pass_rate += rec.pass_rate;
        }
        m.ce_loss /= iters;
        m.se_loss /= iters;
        m.cb_loss /= iters;
        m.pass_rate /= iters;

        const EvalResult ss = evaluate(setup.net, result.student, data.source_test, cfg.batch_size);
        const EvalResult st = evaluate(setup.net, result.student, data.target_test, cfg.batch_size);
        const EvalResult ts = evaluate(setup.net, result.teacher, data.source_test, cfg.batch_size);
        const EvalResult tt = evaluate(setup.net, result.teacher, data.target_test, cfg.batch_size);
        m.student_src_acc = ss.accuracy;
        m.student_tgt_acc = st.accuracy;
        m.teacher_src_acc = ts.accuracy;
        m.teacher_tgt_acc = tt.accuracy;
        m.student_tgt_top_class_freq = st.top_class_freq;
        m.teacher_tgt_top_class_freq = tt.top_class_freq;
        result.history.push_back(m);

        if (m.pass_rate > early.best_pass_rate) {
            early.best_pass_rate = m.pass_rate;
            early.best_epoch = epoch;
            result.best_student = result.student;
            result.best_teacher = result.teacher;
        }
        if (on_epoch) on_epoch(m);
    }

    result.epochs_completed = cfg.epochs;
    if (cfg.weights.mode == WeightMode::GaussianRampup || early.best_epoch < 0) {
        // No confidence signal to stop on: the early-stop snapshot is the
        // final state.
        result.best_student = result.student;
        result.best_teacher = result.teacher;
        result.best_epoch = cfg.epochs - 1;
    } else {
        result.best_epoch = early.best_epoch;
    }
    return result;
}

std::string metrics_csv(const std::vector<EpochMetrics>& history) {
    std::string out =
        "epoch,ce_loss,se_loss,cb_loss,pass_rate,student_src_acc,student_tgt_acc,"
        "teacher_src_acc,teacher_tgt_acc\n";
    for (const auto& m : history) {
        out += std::to_string(m.epoch);
        for (double v : {m.ce_loss, m.se_loss, m.cb_loss, m.pass_rate, m.student_src_acc,
                         m.student_tgt_acc, m.teacher_src_acc, m.teacher_tgt_acc}) {
            out += ',';
            out += format_g(v);
        }
        out += '\n';
    }
    return out;
}

void write_metrics_csv(const std::string& path, const std::vector<EpochMetrics>& history) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw IoError("cannot create " + path);
    f << metrics_csv(history);
    if (!f) throw IoError("failed writing " + path);
}

} // namespace seda
