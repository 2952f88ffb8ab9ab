#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "hsp/data/dataset.hpp"
#include "hsp/loss_metrics/loss.hpp"
#include "hsp/loss_metrics/metrics.hpp"
#include "hsp/trainer/model.hpp"
#include "hsp/trainer/optimizer.hpp"

namespace hsp::trainer {

struct TrainConfig {
    std::size_t epochs = 10;
    std::size_t batch_size = 4;
    double learning_rate = 1e-3;
    std::uint64_t seed = 7;
    loss::LossWeights loss;
    num::DType dtype = num::DType::f32;
    // Score the monitoring split (val, else test) after every epoch.
    bool monitor = true;

    void validate() const;
};

struct EpochRecord {
    std::size_t epoch = 0;  // 1-based
    double train_loss = 0;  // mean composite loss over the epoch's samples
    std::optional<double> monitor_dice;
};

struct TrainResult {
    Model model;
    Adam optimizer;
    std::vector<EpochRecord> history;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

// Per-sample forward/backward with the loss scaled by 1/B, one Adam step per
// batch. Throws DivergenceError on a non-finite loss.
TrainResult train(const ModelConfig& model, const TrainConfig& config,
                  const data::DatasetManifest& manifest, const EpochCallback& on_epoch = {});

// Continues training `result` for config.epochs - history.size() more epochs.
void resume(TrainResult& result, const TrainConfig& config, const data::DatasetManifest& manifest,
            const EpochCallback& on_epoch = {});

struct ImageReport {
    std::string id;
    loss::MetricReport metrics;
};

struct EvalReport {
    std::string split;
    loss::MetricReport aggregate;
    std::vector<ImageReport> per_image;
};

// Prompt-free inference over a split. Images are scored on `threads` workers
// and aggregated in manifest order, so the result does not depend on the
// thread count. Throws ConfigError when the manifest does not fit the model.
EvalReport evaluate(const Model& model, const data::DatasetManifest& manifest,
                    const std::string& split, std::size_t threads = 1);

nlohmann::json to_json(const EvalReport& report);

// val when present, else test, else empty.
std::string monitor_split(const data::DatasetManifest& manifest);

struct AblationRow {
    Variant variant = Variant::ft_sam;
    double dice = 0;  // on the target manifest's test split when given, else the source's
    double hd = 0;
    std::size_t params = 0;  // trainable elements
    double source_dice = 0;
};

using RunCallback = std::function<void(const std::string& label, const EpochRecord&)>;

std::vector<AblationRow> run_ablation(const ModelConfig& base, const TrainConfig& config,
                                      const data::DatasetManifest& source,
                                      const data::DatasetManifest* target,
                                      const RunCallback& progress = {});

struct SweepRow {
    std::size_t count = 0;
    double source_dice = 0;
    std::optional<double> target_dice;
};

std::vector<SweepRow> run_prompt_sweep(const ModelConfig& base, const TrainConfig& config,
                                       const std::vector<std::size_t>& counts,
                                       const data::DatasetManifest& source,
                                       const data::DatasetManifest* target,
                                       const RunCallback& progress = {});

std::string ablation_csv(const std::vector<AblationRow>& rows);
std::string sweep_csv(const std::vector<SweepRow>& rows);

}  // namespace hsp::trainer
