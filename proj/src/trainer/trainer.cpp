#include "hsp/trainer/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <numeric>
#include <sstream>
#include <thread>

#include "hsp/errors.hpp"
#include "hsp/numerics/ops.hpp"
#include "hsp/numerics/random.hpp"

namespace hsp::trainer {

namespace {

void check_compatible(const ModelConfig& model, const data::DatasetManifest& manifest) {
    if (manifest.image_size != model.encoder.image_size) {
        throw ConfigError("dataset '" + manifest.name + "' has image_size " +
                          std::to_string(manifest.image_size) + " but the model expects " +
                          std::to_string(model.encoder.image_size));
    }
    if (manifest.num_classes != model.num_classes) {
        throw ConfigError("dataset '" + manifest.name + "' has " +
                          std::to_string(manifest.num_classes) + " classes but the model has " +
                          std::to_string(model.num_classes));
    }
}

std::vector<std::size_t> all_indices(std::size_t n) {
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    return idx;
}

std::string fixed(double v) {
    std::ostringstream s;
    s.precision(6);
    s << std::fixed << v;
    return s.str();
}

void run_epochs(TrainResult& result, const TrainConfig& config,
                const data::DatasetManifest& manifest, const EpochCallback& on_epoch) {
    const auto& entries = manifest.split("train");
    if (entries.empty()) throw DatasetError("dataset '" + manifest.name + "' has no training samples");
    const auto batch = data::load_batch(manifest, "train", all_indices(entries.size()), config.dtype);
    const std::string monitor = config.monitor ? monitor_split(manifest) : std::string();
    const std::size_t n = batch.size();
    std::vector<double> losses(n);

    for (std::size_t epoch = result.history.size() + 1; epoch <= config.epochs; ++epoch) {
        std::vector<std::size_t> order = all_indices(n);
        num::Rng rng(num::mix_seed(config.seed, "shuffle/" + std::to_string(epoch)));
        std::shuffle(order.begin(), order.end(), rng.engine());

        for (std::size_t start = 0, step = 0; start < n; start += config.batch_size, ++step) {
            const std::size_t end = std::min(n, start + config.batch_size);
            const double inv = 1.0 / static_cast<double>(end - start);
            result.optimizer.zero_grad();
            for (std::size_t k = start; k < end; ++k) {
                const std::size_t i = order[k];
                try {
                    const Tensor logits = result.model.forward(batch.image(i)).logits;
                    const Tensor l = loss::composite_loss(logits, batch.labels[i], config.loss);
                    losses[i] = l.item();
                    if (!std::isfinite(losses[i])) throw NumericError("non-finite loss");
                    num::backward(num::scale(l, inv));
                } catch (const NumericError& e) {
                    throw DivergenceError("training diverged at epoch " + std::to_string(epoch) +
                                          " step " + std::to_string(step) + " (sample " +
                                          batch.ids[i] + "): " + e.what());
                }
            }
            result.optimizer.step();
        }

        EpochRecord rec;
        rec.epoch = epoch;
        rec.train_loss = std::accumulate(losses.begin(), losses.end(), 0.0) / static_cast<double>(n);
        if (!monitor.empty()) rec.monitor_dice = evaluate(result.model, manifest, monitor).aggregate.dice;
        result.history.push_back(rec);
        if (on_epoch) on_epoch(rec);
    }
}

}  // namespace

void TrainConfig::validate() const {
    if (epochs == 0) throw ConfigError("train: epochs must be at least 1");
    if (batch_size == 0) throw ConfigError("train: batch_size must be at least 1");
    if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
        throw ConfigError("train: learning_rate must be a finite value >= 0");
    }
    loss.validate();
}

std::string monitor_split(const data::DatasetManifest& manifest) {
    if (!manifest.split("val").empty()) return "val";
    if (!manifest.split("test").empty()) return "test";
    return {};
}

TrainResult train(const ModelConfig& model, const TrainConfig& config,
                  const data::DatasetManifest& manifest, const EpochCallback& on_epoch) {
    model.validate();
    config.validate();
    check_compatible(model, manifest);
    Model m(model, config.dtype, config.seed);
    Adam opt(m.trainable_parameters(), {config.learning_rate});
    TrainResult result{std::move(m), std::move(opt), {}};
    run_epochs(result, config, manifest, on_epoch);
    return result;
}

void resume(TrainResult& result, const TrainConfig& config, const data::DatasetManifest& manifest,
            const EpochCallback& on_epoch) {
    config.validate();
    check_compatible(result.model.config(), manifest);
    run_epochs(result, config, manifest, on_epoch);
}

EvalReport evaluate(const Model& model, const data::DatasetManifest& manifest,
                    const std::string& split, std::size_t threads) {
    check_compatible(model.config(), manifest);
    const auto& entries = manifest.split(split);
    if (entries.empty()) throw DatasetError("split '" + split + "' of '" + manifest.name + "' is empty");
    const auto batch = data::load_batch(manifest, split, all_indices(entries.size()), model.dtype());
    EvalReport report;
    report.split = split;
    report.per_image.resize(batch.size());

    auto work = [&](std::size_t begin, std::size_t end) {
        num::NoGradGuard guard;
        for (std::size_t i = begin; i < end; ++i) {
            const auto pred = predict_labels(model.forward(batch.image(i)).logits);
            report.per_image[i] = {batch.ids[i],
                                   loss::compute_metrics(pred, batch.labels[i], model.config().num_classes)};
        }
    };
    threads = std::clamp<std::size_t>(threads, 1, batch.size());
    if (threads == 1) {
        work(0, batch.size());
    } else {
        std::vector<std::thread> pool;
        std::vector<std::exception_ptr> errors(threads);
        const std::size_t chunk = (batch.size() + threads - 1) / threads;
        for (std::size_t t = 0; t < threads; ++t) {
            const std::size_t begin = std::min(batch.size(), t * chunk);
            const std::size_t end = std::min(batch.size(), begin + chunk);
            pool.emplace_back([&, t, begin, end] {
                try {
                    work(begin, end);
                } catch (...) {
                    errors[t] = std::current_exception();
                }
            });
        }
        for (auto& th : pool) th.join();
        for (auto& e : errors) {
            if (e) std::rethrow_exception(e);
        }
    }
    std::vector<loss::MetricReport> all;
    for (const auto& r : report.per_image) all.push_back(r.metrics);
    report.aggregate = loss::average(all);
    return report;
}

nlohmann::json to_json(const EvalReport& report) {
    nlohmann::json images = nlohmann::json::array();
    for (const auto& r : report.per_image) {
        nlohmann::json j = loss::to_json(r.metrics);
        j["id"] = r.id;
        images.push_back(j);
    }
    return {{"split", report.split}, {"aggregate", loss::to_json(report.aggregate)}, {"per_image", images}};
}

std::vector<AblationRow> run_ablation(const ModelConfig& base, const TrainConfig& config,
                                      const data::DatasetManifest& source,
                                      const data::DatasetManifest* target,
                                      const RunCallback& progress) {
    std::vector<AblationRow> rows;
    for (Variant v : kAllVariants) {
        ModelConfig mc = base;
        mc.flags = flags_of(v);
        const std::string label = variant_name(v);
        auto result = train(mc, config, source, [&](const EpochRecord& r) {
            if (progress) progress(label, r);
        });
        AblationRow row;
        row.variant = v;
        row.params = result.model.trainable_count();
        const auto src = evaluate(result.model, source, "test");
        row.source_dice = src.aggregate.dice;
        row.dice = src.aggregate.dice;
        row.hd = src.aggregate.hd;
        if (target) {
            const auto tgt = evaluate(result.model, *target, "test");
            row.dice = tgt.aggregate.dice;
            row.hd = tgt.aggregate.hd;
        }
        rows.push_back(row);
    }
    return rows;
}

std::vector<SweepRow> run_prompt_sweep(const ModelConfig& base, const TrainConfig& config,
                                       const std::vector<std::size_t>& counts,
                                       const data::DatasetManifest& source,
                                       const data::DatasetManifest* target,
                                       const RunCallback& progress) {
    if (counts.empty()) throw ConfigError("sweep: at least one prompt count is required");
    std::vector<SweepRow> rows;
    for (std::size_t c : counts) {
        ModelConfig mc = base;
        mc.prompt_count = c;
        const std::string label = "c=" + std::to_string(c);
        auto result = train(mc, config, source, [&](const EpochRecord& r) {
            if (progress) progress(label, r);
        });
        SweepRow row;
        row.count = c;
        row.source_dice = evaluate(result.model, source, "test").aggregate.dice;
        if (target) row.target_dice = evaluate(result.model, *target, "test").aggregate.dice;
        rows.push_back(row);
    }
    return rows;
}

std::string ablation_csv(const std::vector<AblationRow>& rows) {
    std::string out = "variant,dice,hd,params\n";
    for (const auto& r : rows) {
        out += variant_name(r.variant) + "," + fixed(r.dice) + "," + fixed(r.hd) + "," +
               std::to_string(r.params) + "\n";
    }
    return out;
}

std::string sweep_csv(const std::vector<SweepRow>& rows) {
    std::string out = "count,source_dice,target_dice\n";
    for (const auto& r : rows) {
        out += std::to_string(r.count) + "," + fixed(r.source_dice) + "," +
               (r.target_dice ? fixed(*r.target_dice) : std::string()) + "\n";
    }
    return out;
}

}  // namespace hsp::trainer
