#pragma once

#include <optional>
#include <string>

#include "seda/augment.hpp"
#include "seda/data.hpp"
#include "seda/presets.hpp"
#include "seda/trainer.hpp"

namespace seda {

// A fully-resolved run description parsed from the JSON config file. Parsing
// is strict: unknown keys are rejected, and every omitted field takes the
// documented default (the published training recipe).
struct IdxDomainConfig {
    std::string train_images;
    std::string train_labels;
    std::string test_images;   // empty: evaluate on the training split
    std::string test_labels;
    std::vector<PrepareStep> prepare;
};

struct RunConfig {
    // data: exactly one of synthetic / (source + target idx files)
    std::optional<SyntheticSpec> synthetic;
    std::optional<IdxDomainConfig> idx_source;
    std::optional<IdxDomainConfig> idx_target;

    std::string arch = "conv_small";
    double width_multiplier = 0.0;  // 0: preset default

    std::string augment_preset = "tf";
    bool augment_hflip = false;
    AugmentConfig augment_source;
    AugmentConfig augment_target;

    TrainConfig train;
    std::string output_dir = "runs/out";
};

RunConfig parse_run_config(const std::string& json_text);
RunConfig load_run_config(const std::string& path);

// Parses a bare synthetic dataset spec (the data.synthetic object).
SyntheticSpec parse_synthetic_spec(const std::string& json_text);

// The config with every default expanded; feeding it back reproduces the run.
std::string resolved_config_json(const RunConfig& cfg);

// Everything needed to call run_training, built from a config: datasets
// loaded or generated, network constructed, augmentation resolved.
struct ResolvedRun {
    TrainData data;
    TrainSetup setup;
    ChannelStats stats;  // source-train standardization map
};

ResolvedRun build_run(const RunConfig& cfg);

// Dataset spec for `seda eval`: either {"images": ..., "labels": ...,
// "prepare": [...]} (standardized with the checkpoint's statistics) or
// {"synthetic": {...}, "domain": "source"|"target", "split": "train"|"test"}.
DomainDataset parse_eval_dataset(const std::string& json_text, const ChannelStats* ckpt_stats);

} // namespace seda
