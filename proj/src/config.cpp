#include "stein/config.hpp"

#include <fstream>
#include <set>

namespace stein::harness {

using json = nlohmann::json;

namespace {

void check_keys(const json& j, const std::string& section, const std::set<std::string>& allowed) {
    if (!j.is_object())
        throw ConfigError("config section '" + section + "' must be an object");
    for (const auto& [key, value] : j.items()) {
        (void)value;
        if (!allowed.count(key))
            throw ConfigError("unknown config key '" + section + "." + key + "'");
    }
}

template <typename T>
void read(const json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

void parse_model(const json& j, model::ModelConfig& m) {
    check_keys(j, "model",
               {"stage_channels", "blocks_per_level", "mlp_ratio", "mixer_heads", "mixer_p",
                "mixer_expansion", "mixer_kind", "frequency_strategy", "frequency_seed",
                "priors_file", "num_classes", "decoder_channels", "input_size", "init_seed"});
    read(j, "stage_channels", m.stage_channels);
    read(j, "blocks_per_level", m.blocks_per_level);
    read(j, "mlp_ratio", m.mlp_ratio);
    read(j, "mixer_heads", m.mixer_heads);
    read(j, "mixer_p", m.mixer_p);
    read(j, "mixer_expansion", m.mixer_expansion);
    if (j.contains("mixer_kind")) {
        const std::string kind = j.at("mixer_kind").get<std::string>();
        if (kind == "dct")
            m.mixer_kind = spectral::MixerKind::kMultiFrequency;
        else if (kind == "conv")
            m.mixer_kind = spectral::MixerKind::kPlainConv;
        else
            throw ConfigError("model.mixer_kind must be 'dct' or 'conv', got '" + kind + "'");
    }
    if (j.contains("frequency_strategy"))
        m.frequency_strategy =
            spectral::strategy_from_name(j.at("frequency_strategy").get<std::string>());
    read(j, "frequency_seed", m.frequency_seed);
    read(j, "priors_file", m.priors_file);
    read(j, "num_classes", m.num_classes);
    read(j, "decoder_channels", m.decoder_channels);
    if (j.contains("input_size")) {
        const int size = j.at("input_size").get<int>();
        m.input_h = size;
        m.input_w = size;
    }
    read(j, "init_seed", m.init_seed);
}

void parse_loss(const json& j, model::LossConfig& l) {
    check_keys(j, "loss",
               {"lambda_focal", "lambda_dice", "focal_alpha", "focal_gamma", "dice_epsilon"});
    read(j, "lambda_focal", l.lambda_focal);
    read(j, "lambda_dice", l.lambda_dice);
    read(j, "focal_alpha", l.focal_alpha);
    read(j, "focal_gamma", l.focal_gamma);
    read(j, "dice_epsilon", l.dice_epsilon);
}

void parse_synth(const json& j, SynthSpec& s) {
    check_keys(j, "synth",
               {"seed", "count", "size", "min_changes", "max_changes", "base_shapes",
                "illumination", "max_offset", "distractors"});
    read(j, "seed", s.seed);
    read(j, "count", s.count);
    read(j, "size", s.size);
    read(j, "min_changes", s.min_changes);
    read(j, "max_changes", s.max_changes);
    read(j, "base_shapes", s.base_shapes);
    read(j, "illumination", s.illumination);
    read(j, "max_offset", s.max_offset);
    read(j, "distractors", s.distractors);
}

void parse_train(const json& j, TrainConfig& t) {
    check_keys(j, "train",
               {"epochs", "batch_size", "lr", "lr_gamma", "weight_decay", "seed", "augment",
                "max_steps", "out_dir"});
    read(j, "epochs", t.epochs);
    read(j, "batch_size", t.batch_size);
    read(j, "lr", t.lr);
    read(j, "lr_gamma", t.lr_gamma);
    read(j, "weight_decay", t.weight_decay);
    read(j, "seed", t.seed);
    read(j, "augment", t.augment);
    read(j, "max_steps", t.max_steps);
    read(j, "out_dir", t.out_dir);
}

}  // namespace

RunConfig parse_config(const json& j) {
    check_keys(j, "<root>", {"model", "loss", "synth", "train", "data"});
    RunConfig cfg;
    if (j.contains("model")) parse_model(j.at("model"), cfg.model);
    if (j.contains("loss")) parse_loss(j.at("loss"), cfg.loss);
    if (j.contains("synth")) parse_synth(j.at("synth"), cfg.synth);
    if (j.contains("train")) parse_train(j.at("train"), cfg.train);
    if (j.contains("data")) {
        check_keys(j.at("data"), "data", {"root", "val_count"});
        read(j.at("data"), "root", cfg.data_root);
        read(j.at("data"), "val_count", cfg.val_count);
    }
    return cfg;
}

RunConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config '" + path + "'");
    json j = json::parse(in, nullptr, false);
    if (j.is_discarded()) throw ConfigError("config '" + path + "' is not valid JSON");
    try {
        return parse_config(j);
    } catch (const json::exception& e) {
        throw ConfigError("config '" + path + "': " + e.what());
    }
}

model::SteinFormer build_model(RunConfig& cfg, const std::vector<BitemporalSample>* data) {
    if (cfg.model.frequency_strategy == spectral::FrequencyStrategy::kDynamicAssignment &&
        cfg.model.importance.empty()) {
        if (!data || data->empty())
            throw UsageError("dynamic_assignment needs training data to score frequencies");
        cfg.model.importance =
            importance_from_dataset(*data, cfg.model.mixer_p, cfg.train.seed);
    }
    return model::SteinFormer(cfg.model);
}

nlohmann::json config_to_json(const RunConfig& cfg) {
    json j;
    j["model"]["stage_channels"] = cfg.model.stage_channels;
    j["model"]["blocks_per_level"] = cfg.model.blocks_per_level;
    j["model"]["mlp_ratio"] = cfg.model.mlp_ratio;
    j["model"]["mixer_heads"] = cfg.model.mixer_heads;
    j["model"]["mixer_p"] = cfg.model.mixer_p;
    j["model"]["mixer_expansion"] = cfg.model.mixer_expansion;
    j["model"]["mixer_kind"] =
        cfg.model.mixer_kind == spectral::MixerKind::kMultiFrequency ? "dct" : "conv";
    j["model"]["frequency_strategy"] = spectral::strategy_name(cfg.model.frequency_strategy);
    j["model"]["frequency_seed"] = cfg.model.frequency_seed;
    j["model"]["priors_file"] = cfg.model.priors_file;
    j["model"]["num_classes"] = cfg.model.num_classes;
    j["model"]["decoder_channels"] = cfg.model.decoder_channels;
    j["model"]["input_size"] = cfg.model.input_h;
    j["model"]["init_seed"] = cfg.model.init_seed;
    j["loss"]["lambda_focal"] = cfg.loss.lambda_focal;
    j["loss"]["lambda_dice"] = cfg.loss.lambda_dice;
    j["loss"]["focal_alpha"] = cfg.loss.focal_alpha;
    j["loss"]["focal_gamma"] = cfg.loss.focal_gamma;
    j["loss"]["dice_epsilon"] = cfg.loss.dice_epsilon;
    j["synth"]["seed"] = cfg.synth.seed;
    j["synth"]["count"] = cfg.synth.count;
    j["synth"]["size"] = cfg.synth.size;
    j["synth"]["min_changes"] = cfg.synth.min_changes;
    j["synth"]["max_changes"] = cfg.synth.max_changes;
    j["synth"]["base_shapes"] = cfg.synth.base_shapes;
    j["synth"]["illumination"] = cfg.synth.illumination;
    j["synth"]["max_offset"] = cfg.synth.max_offset;
    j["synth"]["distractors"] = cfg.synth.distractors;
    j["train"]["epochs"] = cfg.train.epochs;
    j["train"]["batch_size"] = cfg.train.batch_size;
    j["train"]["lr"] = cfg.train.lr;
    j["train"]["lr_gamma"] = cfg.train.lr_gamma;
    j["train"]["weight_decay"] = cfg.train.weight_decay;
    j["train"]["seed"] = cfg.train.seed;
    j["train"]["augment"] = cfg.train.augment;
    j["train"]["max_steps"] = cfg.train.max_steps;
    j["train"]["out_dir"] = cfg.train.out_dir;
    j["data"]["root"] = cfg.data_root;
    j["data"]["val_count"] = cfg.val_count;
    return j;
}

}  // namespace stein::harness
