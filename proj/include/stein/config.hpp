#pragma once

#include <string>

#include <nlohmann/json.hpp>

#include "stein/loss.hpp"
#include "stein/model.hpp"
#include "stein/synth.hpp"
#include "stein/train.hpp"

namespace stein::harness {

/// Everything a CLI run needs. JSON sections: model, loss, synth, train,
/// data. Unknown keys anywhere are configuration errors.
struct RunConfig {
    model::ModelConfig model;
    model::LossConfig loss;
    SynthSpec synth;
    TrainConfig train;
    std::string data_root;  // empty = synthetic data
    int val_count = 20;     // samples held out for validation
};

RunConfig parse_config(const nlohmann::json& j);
RunConfig load_config(const std::string& path);

nlohmann::json config_to_json(const RunConfig& cfg);

/// Builds the model for a run. Dynamic frequency assignment derives its
/// importance map from `data` (required for that strategy).
model::SteinFormer build_model(RunConfig& cfg,
                               const std::vector<BitemporalSample>* data = nullptr);

}  // namespace stein::harness
