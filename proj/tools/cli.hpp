#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>

#include "hsp/trainer/trainer.hpp"

namespace hsp::cli {

// Exit codes shared by every subcommand.
inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitIo = 3;
inline constexpr int kExitDivergence = 4;

// {"model": ..., "train": ..., "data": {"manifest": ..., "target_manifest": ...}}
// Relative data paths resolve against the config file's directory.
struct RunConfig {
    trainer::ModelConfig model;
    trainer::TrainConfig train;
    std::filesystem::path manifest;
    std::optional<std::filesystem::path> target_manifest;
};

RunConfig parse_run_config(const nlohmann::json& doc, const std::filesystem::path& base_dir);
RunConfig load_run_config(const std::filesystem::path& path);

// HSP_THREADS, default 1.
std::size_t thread_count();

// Runs one invocation; summary lines go to `out`, diagnostics to `err`.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace hsp::cli
