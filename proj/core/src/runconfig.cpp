#include "seda/runconfig.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

namespace seda {

namespace {

using nlohmann::json;

void require_keys(const json& j, std::initializer_list<const char*> allowed,
                  const std::string& ctx) {
    if (!j.is_object()) throw ConfigError(ctx + " must be a JSON object");
    for (const auto& item : j.items()) {
        bool ok = false;
        for (const char* k : allowed)
            if (item.key() == k) {
                ok = true;
                break;
            }
        if (!ok) throw ConfigError("unknown key \"" + item.key() + "\" in " + ctx);
    }
}

double get_num(const json& j, const char* key, double fallback, const std::string& ctx) {
    if (!j.contains(key)) return fallback;
    if (!j[key].is_number()) throw ConfigError(ctx + "." + key + " must be a number");
    return j[key].get<double>();
}

int get_int(const json& j, const char* key, int fallback, const std::string& ctx) {
    if (!j.contains(key)) return fallback;
    if (!j[key].is_number_integer()) throw ConfigError(ctx + "." + key + " must be an integer");
    return j[key].get<int>();
}

bool get_bool(const json& j, const char* key, bool fallback, const std::string& ctx) {
    if (!j.contains(key)) return fallback;
    if (!j[key].is_boolean()) throw ConfigError(ctx + "." + key + " must be a boolean");
    return j[key].get<bool>();
}

std::string get_str(const json& j, const char* key, const std::string& fallback,
                    const std::string& ctx) {
    if (!j.contains(key)) return fallback;
    if (!j[key].is_string()) throw ConfigError(ctx + "." + key + " must be a string");
    return j[key].get<std::string>();
}

SyntheticSpec parse_synthetic(const json& j) {
    require_keys(j, {"kind", "n_train", "n_test", "class_count", "seed", "shift"},
                 "data.synthetic");
    SyntheticSpec spec;
    const std::string kind = get_str(j, "kind", "glyphs", "data.synthetic");
    if (kind == "glyphs")
        spec.kind = SyntheticSpec::Kind::Glyphs;
    else if (kind == "blobs")
        spec.kind = SyntheticSpec::Kind::Blobs;
    else
        throw ConfigError("data.synthetic.kind must be \"glyphs\" or \"blobs\"");
    spec.n_train = get_int(j, "n_train", spec.n_train, "data.synthetic");
    spec.n_test = get_int(j, "n_test", spec.n_test, "data.synthetic");
    spec.class_count = get_int(j, "class_count", spec.class_count, "data.synthetic");
    spec.seed = static_cast<std::uint64_t>(get_int(j, "seed", 0, "data.synthetic"));
    if (j.contains("shift")) {
        const json& s = j["shift"];
        require_keys(s, {"rotation_deg", "intensity_invert", "noise_sigma", "class_weights"},
                     "data.synthetic.shift");
        spec.shift.rotation_deg = get_num(s, "rotation_deg", 0.0, "shift");
        spec.shift.intensity_invert = get_bool(s, "intensity_invert", false, "shift");
        spec.shift.noise_sigma = get_num(s, "noise_sigma", 0.0, "shift");
        if (s.contains("class_weights")) {
            if (!s["class_weights"].is_array())
                throw ConfigError("shift.class_weights must be an array");
            spec.shift.class_weights = s["class_weights"].get<std::vector<double>>();
        }
    }
    spec.validate();
    return spec;
}

json synthetic_to_json(const SyntheticSpec& spec) {
    json shift = {{"rotation_deg", spec.shift.rotation_deg},
                  {"intensity_invert", spec.shift.intensity_invert},
                  {"noise_sigma", spec.shift.noise_sigma}};
    if (spec.shift.class_weights) shift["class_weights"] = *spec.shift.class_weights;
    return {{"kind", spec.kind == SyntheticSpec::Kind::Glyphs ? "glyphs" : "blobs"},
            {"n_train", spec.n_train},
            {"n_test", spec.n_test},
            {"class_count", spec.class_count},
            {"seed", spec.seed},
            {"shift", shift}};
}

std::vector<PrepareStep> parse_prepare(const json& j, const std::string& ctx) {
    if (!j.is_array()) throw ConfigError(ctx + " must be an array of steps");
    std::vector<PrepareStep> steps;
    for (const auto& step : j) {
        const std::string op = get_str(step, "op", "", ctx);
        if (op == "pad_to") {
            require_keys(step, {"op", "h", "w"}, ctx);
            steps.push_back(PadTo{get_int(step, "h", 0, ctx), get_int(step, "w", 0, ctx)});
        } else if (op == "resize_bilinear") {
            require_keys(step, {"op", "h", "w"}, ctx);
            steps.push_back(ResizeBilinear{get_int(step, "h", 0, ctx), get_int(step, "w", 0, ctx)});
        } else if (op == "replicate_channels") {
            require_keys(step, {"op", "channels"}, ctx);
            steps.push_back(ReplicateChannels{get_int(step, "channels", 0, ctx)});
        } else if (op == "filter_classes") {
            require_keys(step, {"op", "keep"}, ctx);
            if (!step.contains("keep") || !step["keep"].is_array())
                throw ConfigError(ctx + ": filter_classes needs a \"keep\" array");
            steps.push_back(FilterClasses{step["keep"].get<std::vector<int>>()});
        } else if (op == "standardize") {
            require_keys(step, {"op"}, ctx);
            steps.push_back(Standardize{});
        } else {
            throw ConfigError(ctx + ": unknown prepare op \"" + op + "\"");
        }
    }
    return steps;
}

json prepare_to_json(const std::vector<PrepareStep>& steps) {
    json out = json::array();
    for (const auto& step : steps) {
        if (const auto* pad = std::get_if<PadTo>(&step))
            out.push_back({{"op", "pad_to"}, {"h", pad->h}, {"w", pad->w}});
        else if (const auto* rs = std::get_if<ResizeBilinear>(&step))
            out.push_back({{"op", "resize_bilinear"}, {"h", rs->h}, {"w", rs->w}});
        else if (const auto* rep = std::get_if<ReplicateChannels>(&step))
            out.push_back({{"op", "replicate_channels"}, {"channels", rep->channels}});
        else if (const auto* fc = std::get_if<FilterClasses>(&step))
            out.push_back({{"op", "filter_classes"}, {"keep", fc->keep}});
        else
            out.push_back({{"op", "standardize"}});
    }
    return out;
}

IdxDomainConfig parse_idx_domain(const json& j, const std::string& ctx) {
    require_keys(j, {"train_images", "train_labels", "test_images", "test_labels", "prepare"}, ctx);
    IdxDomainConfig d;
    d.train_images = get_str(j, "train_images", "", ctx);
    d.train_labels = get_str(j, "train_labels", "", ctx);
    d.test_images = get_str(j, "test_images", "", ctx);
    d.test_labels = get_str(j, "test_labels", "", ctx);
    if (d.train_images.empty()) throw ConfigError(ctx + ".train_images is required");
    if (j.contains("prepare")) d.prepare = parse_prepare(j["prepare"], ctx + ".prepare");
    return d;
}

json idx_domain_to_json(const IdxDomainConfig& d) {
    return {{"train_images", d.train_images},
            {"train_labels", d.train_labels},
            {"test_images", d.test_images},
            {"test_labels", d.test_labels},
            {"prepare", prepare_to_json(d.prepare)}};
}

void apply_augment_overrides(AugmentConfig& cfg, const json& j, const std::string& ctx) {
    require_keys(j,
                 {"noise_sigma", "translate_range", "hflip", "affine_sigma", "intensity_flip_prob",
                  "intensity_scale", "intensity_offset"},
                 ctx);
    cfg.noise_sigma = static_cast<float>(get_num(j, "noise_sigma", cfg.noise_sigma, ctx));
    cfg.translate_range = get_int(j, "translate_range", cfg.translate_range, ctx);
    cfg.hflip = get_bool(j, "hflip", cfg.hflip, ctx);
    cfg.affine_sigma = static_cast<float>(get_num(j, "affine_sigma", cfg.affine_sigma, ctx));
    cfg.intensity_flip_prob =
        static_cast<float>(get_num(j, "intensity_flip_prob", cfg.intensity_flip_prob, ctx));
    auto range = [&](const char* key, std::array<float, 2> fallback) {
        if (!j.contains(key)) return fallback;
        if (!j[key].is_array() || j[key].size() != 2)
            throw ConfigError(ctx + "." + key + " must be [lo, hi]");
        return std::array<float, 2>{j[key][0].get<float>(), j[key][1].get<float>()};
    };
    cfg.intensity_scale = range("intensity_scale", cfg.intensity_scale);
    cfg.intensity_offset = range("intensity_offset", cfg.intensity_offset);
    cfg.validate();
}

json augment_to_json(const AugmentConfig& cfg) {
    return {{"noise_sigma", cfg.noise_sigma},
            {"translate_range", cfg.translate_range},
            {"hflip", cfg.hflip},
            {"affine_sigma", cfg.affine_sigma},
            {"intensity_flip_prob", cfg.intensity_flip_prob},
            {"intensity_scale", {cfg.intensity_scale[0], cfg.intensity_scale[1]}},
            {"intensity_offset", {cfg.intensity_offset[0], cfg.intensity_offset[1]}}};
}

} // namespace

RunConfig parse_run_config(const std::string& json_text) {
    json root;
    try {
        root = json::parse(json_text);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    require_keys(root, {"data", "model", "augment", "train", "output"}, "config");
    RunConfig cfg;

    if (!root.contains("data")) throw ConfigError("config.data is required");
    const json& data = root["data"];
    require_keys(data, {"synthetic", "source", "target"}, "data");
    if (data.contains("synthetic")) {
        if (data.contains("source") || data.contains("target"))
            throw ConfigError("data: give either synthetic or source/target, not both");
        cfg.synthetic = parse_synthetic(data["synthetic"]);
    } else {
        if (!data.contains("source") || !data.contains("target"))
            throw ConfigError("data: needs synthetic, or both source and target");
        cfg.idx_source = parse_idx_domain(data["source"], "data.source");
        cfg.idx_target = parse_idx_domain(data["target"], "data.target");
    }

    if (root.contains("model")) {
        const json& model = root["model"];
        require_keys(model, {"arch", "width_multiplier"}, "model");
        cfg.arch = get_str(model, "arch", cfg.arch, "model");
        cfg.width_multiplier = get_num(model, "width_multiplier", 0.0, "model");
    }
    if (cfg.width_multiplier <= 0.0) cfg.width_multiplier = default_width_multiplier(cfg.arch);

    cfg.augment_preset = "tf";
    if (root.contains("augment")) {
        const json& aug = root["augment"];
        require_keys(aug, {"preset", "hflip", "source", "target"}, "augment");
        cfg.augment_preset = get_str(aug, "preset", cfg.augment_preset, "augment");
        cfg.augment_hflip = get_bool(aug, "hflip", false, "augment");
    }
    cfg.augment_source = AugmentConfig::preset(cfg.augment_preset, cfg.augment_hflip);
    // The intensity augmentation targets the source domain only by default;
    // the target keeps the geometric part of the scheme.
    cfg.augment_target = cfg.augment_preset == "tfa_intensity"
                             ? AugmentConfig::preset("tfa", cfg.augment_hflip)
                             : cfg.augment_source;
    if (root.contains("augment")) {
        const json& aug = root["augment"];
        if (aug.contains("source"))
            apply_augment_overrides(cfg.augment_source, aug["source"], "augment.source");
        if (aug.contains("target"))
            apply_augment_overrides(cfg.augment_target, aug["target"], "augment.target");
    }

    if (root.contains("train")) {
        const json& t = root["train"];
        require_keys(t,
                     {"epochs", "batch_size", "lr", "ema_alpha", "lambda_se", "lambda_cb", "mode",
                      "confidence_threshold", "rampup_epochs", "epoch_definition", "seed",
                      "eval_network"},
                     "train");
        cfg.train.epochs = get_int(t, "epochs", cfg.train.epochs, "train");
        cfg.train.batch_size = get_int(t, "batch_size", cfg.train.batch_size, "train");
        cfg.train.lr = get_num(t, "lr", cfg.train.lr, "train");
        cfg.train.ema_alpha = get_num(t, "ema_alpha", cfg.train.ema_alpha, "train");
        cfg.train.weights.lambda_se = get_num(t, "lambda_se", cfg.train.weights.lambda_se, "train");
        cfg.train.weights.lambda_cb = get_num(t, "lambda_cb", cfg.train.weights.lambda_cb, "train");
        const std::string mode = get_str(t, "mode", "confidence_threshold", "train");
        if (mode == "confidence_threshold")
            cfg.train.weights.mode = WeightMode::ConfidenceThreshold;
        else if (mode == "gaussian_rampup")
            cfg.train.weights.mode = WeightMode::GaussianRampup;
        else
            throw ConfigError("train.mode must be confidence_threshold or gaussian_rampup");
        cfg.train.weights.confidence_threshold =
            get_num(t, "confidence_threshold", cfg.train.weights.confidence_threshold, "train");
        cfg.train.weights.rampup_epochs =
            get_int(t, "rampup_epochs", cfg.train.weights.rampup_epochs, "train");
        const std::string ed = get_str(t, "epoch_definition", "larger_pass", "train");
        if (ed == "target_pass")
            cfg.train.epoch_definition = EpochDefinition::TargetPass;
        else if (ed == "source_pass")
            cfg.train.epoch_definition = EpochDefinition::SourcePass;
        else if (ed == "larger_pass")
            cfg.train.epoch_definition = EpochDefinition::LargerPass;
        else
            throw ConfigError("train.epoch_definition must be target_pass/source_pass/larger_pass");
        cfg.train.seed = static_cast<std::uint64_t>(get_int(t, "seed", 0, "train"));
        const std::string ev = get_str(t, "eval_network", "both", "train");
        if (ev == "student")
            cfg.train.eval_network = EvalNetwork::Student;
        else if (ev == "teacher")
            cfg.train.eval_network = EvalNetwork::Teacher;
        else if (ev == "both")
            cfg.train.eval_network = EvalNetwork::Both;
        else
            throw ConfigError("train.eval_network must be student/teacher/both");
        cfg.train.validate();
    }

    if (root.contains("output")) {
        require_keys(root["output"], {"dir"}, "output");
        cfg.output_dir = get_str(root["output"], "dir", cfg.output_dir, "output");
    }
    return cfg;
}

SyntheticSpec parse_synthetic_spec(const std::string& json_text) {
    json root;
    try {
        root = json::parse(json_text);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("synthetic spec is not valid JSON: ") + e.what());
    }
    return parse_synthetic(root);
}

RunConfig load_run_config(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("cannot open config file " + path);
    std::stringstream ss;
    ss << f.rdbuf();
    return parse_run_config(ss.str());
}

std::string resolved_config_json(const RunConfig& cfg) {
    json data;
    if (cfg.synthetic) {
        data["synthetic"] = synthetic_to_json(*cfg.synthetic);
    } else {
        data["source"] = idx_domain_to_json(*cfg.idx_source);
        data["target"] = idx_domain_to_json(*cfg.idx_target);
    }
    const char* mode = cfg.train.weights.mode == WeightMode::ConfidenceThreshold
                           ? "confidence_threshold"
                           : "gaussian_rampup";
    const char* ed = cfg.train.epoch_definition == EpochDefinition::TargetPass ? "target_pass"
                     : cfg.train.epoch_definition == EpochDefinition::SourcePass
                         ? "source_pass"
                         : "larger_pass";
    const char* ev = cfg.train.eval_network == EvalNetwork::Student   ? "student"
                     : cfg.train.eval_network == EvalNetwork::Teacher ? "teacher"
                                                                      : "both";
    json root = {
        {"data", data},
        {"model", {{"arch", cfg.arch}, {"width_multiplier", cfg.width_multiplier}}},
        {"augment",
         {{"preset", cfg.augment_preset},
          {"hflip", cfg.augment_hflip},
          {"source", augment_to_json(cfg.augment_source)},
          {"target", augment_to_json(cfg.augment_target)}}},
        {"train",
         {{"epochs", cfg.train.epochs},
          {"batch_size", cfg.train.batch_size},
          {"lr", cfg.train.lr},
          {"ema_alpha", cfg.train.ema_alpha},
          {"lambda_se", cfg.train.weights.lambda_se},
          {"lambda_cb", cfg.train.weights.lambda_cb},
          {"mode", mode},
          {"confidence_threshold", cfg.train.weights.confidence_threshold},
          {"rampup_epochs", cfg.train.weights.rampup_epochs},
          {"epoch_definition", ed},
          {"seed", cfg.train.seed},
          {"eval_network", ev}}},
        {"output", {{"dir", cfg.output_dir}}},
    };
    return root.dump(2) + "\n";
}

ResolvedRun build_run(const RunConfig& cfg) {
    ResolvedRun run;
    if (cfg.synthetic) {
        SyntheticPair pair = gen_synthetic(*cfg.synthetic);
        run.data.source_train = std::move(pair.source_train);
        run.data.source_test = std::move(pair.source_test);
        run.data.target_train = std::move(pair.target_train);
        run.data.target_test = std::move(pair.target_test);
    } else {
        DomainDataset src_train = load_idx(cfg.idx_source->train_images,
                                           cfg.idx_source->train_labels);
        src_train = prepare(src_train, cfg.idx_source->prepare);
        const ChannelStats src_stats = src_train.stats;
        auto load_with = [&](const std::string& images, const std::string& labels,
                             const std::vector<PrepareStep>& steps,
                             int classes) -> DomainDataset {
            DomainDataset ds = load_idx(images, labels, &src_stats, classes);
            return prepare(ds, steps);
        };
        run.data.source_train = std::move(src_train);
        run.data.source_test =
            cfg.idx_source->test_images.empty()
                ? run.data.source_train
                : load_with(cfg.idx_source->test_images, cfg.idx_source->test_labels,
                            cfg.idx_source->prepare, run.data.source_train.class_count);
        run.data.target_train =
            load_with(cfg.idx_target->train_images, cfg.idx_target->train_labels,
                      cfg.idx_target->prepare, run.data.source_train.class_count);
        run.data.target_test =
            cfg.idx_target->test_images.empty()
                ? run.data.target_train
                : load_with(cfg.idx_target->test_images, cfg.idx_target->test_labels,
                            cfg.idx_target->prepare, run.data.source_train.class_count);
    }
    run.stats = run.data.source_train.stats;

    const auto& shape = run.data.source_train.images.shape();
    run.setup.net = make_architecture(cfg.arch, {shape[1], shape[2], shape[3]},
                                      run.data.source_train.class_count, cfg.width_multiplier);
    run.setup.augment_source = cfg.augment_source;
    run.setup.augment_target = cfg.augment_target;
    run.setup.train = cfg.train;

    {
        const auto& t = run.data.target_train.images.shape();
        if (t[1] != shape[1] || t[2] != shape[2] || t[3] != shape[3])
            throw ConfigError("source and target image shapes differ after preparation");
    }
    return run;
}

DomainDataset parse_eval_dataset(const std::string& json_text, const ChannelStats* ckpt_stats) {
    json root;
    try {
        root = json::parse(json_text);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("eval data spec is not valid JSON: ") + e.what());
    }
    require_keys(root, {"synthetic", "domain", "split", "images", "labels", "prepare"},
                 "eval data");
    if (root.contains("synthetic")) {
        const SyntheticSpec spec = parse_synthetic(root["synthetic"]);
        const std::string domain = get_str(root, "domain", "target", "eval data");
        const std::string split = get_str(root, "split", "test", "eval data");
        SyntheticPair pair = gen_synthetic(spec);
        if (domain == "source") return split == "train" ? pair.source_train : pair.source_test;
        if (domain == "target") return split == "train" ? pair.target_train : pair.target_test;
        throw ConfigError("eval data.domain must be source or target");
    }
    const std::string images = get_str(root, "images", "", "eval data");
    if (images.empty()) throw ConfigError("eval data: needs synthetic or images/labels paths");
    DomainDataset ds = load_idx(images, get_str(root, "labels", "", "eval data"), ckpt_stats);
    if (root.contains("prepare"))
        ds = prepare(ds, parse_prepare(root["prepare"], "eval data.prepare"));
    return ds;
}

} // namespace seda
