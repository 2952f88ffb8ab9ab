#pragma once

#include <filesystem>

#include "hsp/trainer/trainer.hpp"

namespace hsp::trainer {

inline constexpr std::uint32_t kCheckpointVersion = 1;

// File layout: "HSPC" | u32 version | u32 tensor count |
//   count x (u32 name length | name | tensor record) | u64 json length | json metadata.
// Tensors are the trainable parameters followed by the optimizer moments.
// The frozen backbone is regenerated from the stored seed.
struct Checkpoint {
    ModelConfig model;
    TrainConfig train;
    std::uint64_t backbone_seed = 0;
    std::size_t epoch = 0;
    std::size_t optimizer_steps = 0;
    std::vector<EpochRecord> history;
    num::ParamList parameters;
    num::ParamList optimizer_state;
};

Checkpoint make_checkpoint(const TrainResult& result, const TrainConfig& config);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
// Throws IoError on unreadable, truncated or inconsistent files.
Checkpoint load_checkpoint(const std::filesystem::path& path);

// Rebuilds the model and copies the stored parameters into it.
Model restore_model(const Checkpoint& checkpoint);
TrainResult restore_training(const Checkpoint& checkpoint);

nlohmann::json history_json(const std::vector<EpochRecord>& history);
// One JSON object per line.
std::string history_jsonl(const std::vector<EpochRecord>& history);

}  // namespace hsp::trainer
