#pragma once

#include "hsp/trainer/model.hpp"
#include "hsp/trainer/trainer.hpp"
#include "json.hpp"

namespace hsp::trainer {

// Missing keys keep their defaults; unknown keys and ill-typed values throw
// ConfigError naming the key path.
nlohmann::json to_json(const ModelConfig& config);
ModelConfig model_config_from_json(const nlohmann::json& doc);

nlohmann::json to_json(const TrainConfig& config);
TrainConfig train_config_from_json(const nlohmann::json& doc);

num::DType parse_dtype(const std::string& name);

}  // namespace hsp::trainer
