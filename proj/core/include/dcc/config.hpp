#pragma once

// JSON mirrors of the configuration structs. Field names match the struct
// members exactly; a document may set any subset and unknown keys are
// rejected.

#include "dcc/augment.hpp"
#include "dcc/losses.hpp"
#include "dcc/model.hpp"
#include "dcc/synth.hpp"
#include "dcc/training.hpp"

#include <json.hpp>

#include <filesystem>

namespace dcc {

nlohmann::json to_json(const ModelConfig& cfg);
nlohmann::json to_json(const LossConfig& cfg);
nlohmann::json to_json(const AugmentationConfig& cfg);
nlohmann::json to_json(const TrainConfig& cfg);
nlohmann::json to_json(const SynthConfig& cfg);

void apply_json(ModelConfig& cfg, const nlohmann::json& j);
void apply_json(LossConfig& cfg, const nlohmann::json& j);
void apply_json(AugmentationConfig& cfg, const nlohmann::json& j);
void apply_json(TrainConfig& cfg, const nlohmann::json& j);
void apply_json(SynthConfig& cfg, const nlohmann::json& j);

ModelConfig model_config_from_json(const nlohmann::json& j);

/// Reads a whole JSON document; throws ConfigError with the parser message.
nlohmann::json read_json_file(const std::filesystem::path& path);

}  // namespace dcc
