#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "seda/augment.hpp"
#include "seda/data.hpp"
#include "seda/losses.hpp"
#include "seda/net.hpp"
#include "seda/optim.hpp"

namespace seda {

enum class EpochDefinition : std::uint8_t { TargetPass, SourcePass, LargerPass };
enum class EvalNetwork : std::uint8_t { Student, Teacher, Both };

// Training hyperparameters. The defaults are the published small-image
// recipe: 300 epochs, batches of 256, Adam at 0.001, EMA 0.99, self-ensembling
// weight 3, class balance weight 0.005, confidence threshold 0.968.
struct TrainConfig {
    int epochs = 300;
    int batch_size = 256;
    double lr = 0.001;
    double ema_alpha = 0.99;
    LossWeights weights;
    EpochDefinition epoch_definition = EpochDefinition::LargerPass;
    std::uint64_t seed = 0;
    EvalNetwork eval_network = EvalNetwork::Both;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_epsilon = 1e-8;

    void validate() const {
        if (epochs < 1) throw ConfigError("train: epochs must be >= 1");
        if (batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
        if (lr <= 0.0) throw ConfigError("train: lr must be positive");
        if (ema_alpha < 0.0 || ema_alpha >= 1.0)
            throw ConfigError("train: ema_alpha must lie in [0, 1)");
        weights.validate();
    }
};

struct IterationRecord {
    double ce = 0.0;
    double se = 0.0;
    double cb = 0.0;
    double pass_rate = 0.0;
    double total = 0.0;
};

struct EpochMetrics {
    int epoch = 0;
    double ce_loss = 0.0;
    double se_loss = 0.0;
    double cb_loss = 0.0;
    double pass_rate = 0.0;
    double student_src_acc = 0.0;
    double student_tgt_acc = 0.0;
    double teacher_src_acc = 0.0;
    double teacher_tgt_acc = 0.0;
    // Diagnostics that do not appear in the CSV schema.
    double student_tgt_top_class_freq = 0.0;
    double teacher_tgt_top_class_freq = 0.0;
};

struct EarlyStopState {
    double best_pass_rate = -1.0;
    int best_epoch = -1;
};

struct TrainData {
    DomainDataset source_train, source_test;
    DomainDataset target_train, target_test;
};

struct TrainSetup {
    NetworkSpec net;
    AugmentConfig augment_source;
    AugmentConfig augment_target;
    TrainConfig train;
};

struct RunResult {
    std::vector<EpochMetrics> history;
    ParamStore<float> student, teacher;            // state after the last epoch
    ParamStore<float> best_student, best_teacher;  // highest-pass-rate snapshot
    int best_epoch = 0;
    int epochs_completed = 0;
};

// Continuation state for resuming an interrupted run at a given epoch.
struct ResumeState {
    ParamStore<float> student, teacher;
    int start_epoch = 0;
};

// One training iteration: supervised pass on the source batch, paired
// student/teacher passes on the target batch (separate batch-norm statistics
// per pass), confidence-masked self-ensembling and class balance losses, one
// Adam step on the student, one EMA update of the teacher.
IterationRecord train_iteration(const NetworkSpec& net, ParamStore<float>& student,
                                ParamStore<float>& teacher, const Tensor<float>& src_images,
                                std::span<const int> src_labels, const Tensor<float>& tgt_images,
                                const TrainConfig& cfg, const AugmentConfig& aug_source,
                                const AugmentConfig& aug_target, int epoch, Rng& rng);

struct EvalResult {
    double accuracy = 0.0;
    double mean_class_accuracy = 0.0;
    std::vector<std::vector<std::int64_t>> confusion;  // [true][predicted]
    double top_class_freq = 0.0;  // largest predicted-class share
};

// Eval-mode forward over the dataset in batches; argmax prediction with
// lowest-index tie break.
EvalResult evaluate(const NetworkSpec& net, ParamStore<float>& params, const DomainDataset& ds,
                    int batch_size = 256);

using EpochCallback = std::function<void(const EpochMetrics&)>;

// The full training loop. Deterministic for a fixed (setup, data, seed):
// every random stream is derived from (seed, purpose, epoch, iteration), so a
// resumed run continues bit-identically.
RunResult run_training(const TrainData& data, const TrainSetup& setup,
                       const ResumeState* resume = nullptr, const EpochCallback& on_epoch = {});

// CSV schema:
// epoch,ce_loss,se_loss,cb_loss,pass_rate,student_src_acc,student_tgt_acc,teacher_src_acc,teacher_tgt_acc
std::string metrics_csv(const std::vector<EpochMetrics>& history);
void write_metrics_csv(const std::string& path, const std::vector<EpochMetrics>& history);

} // namespace seda
