#pragma once

#include "json.hpp"
#include "turbohoi/network.hpp"
#include "turbohoi/synth_world.hpp"
#include "turbohoi/trainer.hpp"

namespace turbohoi {

// JSON conversions. The *_from_json readers overlay the keys present in j
// onto `base`, so a config file only needs the fields it changes.
nlohmann::json world_to_json(const synth::WorldSpec& spec);
synth::WorldSpec world_from_json(const nlohmann::json& j, synth::WorldSpec base);

nlohmann::json model_to_json(const net::ModelConfig& cfg);
net::ModelConfig model_from_json(const nlohmann::json& j, net::ModelConfig base);

// Includes the model config under "model".
nlohmann::json train_to_json(const train::TrainConfig& cfg);
train::TrainConfig train_from_json(const nlohmann::json& j, train::TrainConfig base);

}  // namespace turbohoi
