#include "cli.hpp"

#include <CLI11.hpp>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

#include "hsp/errors.hpp"
#include "hsp/self_prompt/heatmap.hpp"
#include "hsp/trainer/checkpoint.hpp"
#include "hsp/trainer/config_json.hpp"
#include "hsp/trainer/plot.hpp"

namespace hsp::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return buf;
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    out << text;
    if (!out) throw IoError("cannot write " + path.string());
}

// Creates `dir`; an existing directory is only reused with --force.
void prepare_out(const fs::path& dir, bool force) {
    if (fs::exists(dir) && !force) {
        throw ConfigError("output directory " + dir.string() + " exists; pass --force to overwrite");
    }
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
}

json read_json(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
}

std::vector<std::size_t> parse_counts(const std::string& text) {
    std::vector<std::size_t> counts;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        std::size_t used = 0;
        unsigned long v = 0;
        try {
            v = std::stoul(item, &used);
        } catch (const std::exception&) {
            used = 0;
        }
        if (used != item.size() || item.empty() || v == 0) {
            throw ConfigError("--counts: '" + item + "' is not a positive integer");
        }
        counts.push_back(v);
    }
    if (counts.empty()) throw ConfigError("--counts: no counts given");
    return counts;
}

struct Sources {
    data::DatasetManifest source;
    std::optional<data::DatasetManifest> target;
};

Sources load_sources(const RunConfig& rc) {
    Sources s{data::DatasetManifest::load(rc.manifest), std::nullopt};
    if (rc.target_manifest) s.target = data::DatasetManifest::load(*rc.target_manifest);
    return s;
}

void print_epoch(std::ostream& err, const std::string& label, const trainer::EpochRecord& r) {
    err << label << "epoch=" << r.epoch << " train_loss=" << fmt(r.train_loss);
    if (r.monitor_dice) err << " monitor_dice=" << fmt(*r.monitor_dice);
    err << "\n";
}

int cmd_gen_data(const data::SyntheticOptions& options, const fs::path& out_dir, bool force, std::ostream& out) {
    prepare_out(out_dir, force);
    const auto manifest = data::generate_synthetic(options, out_dir);
    out << "command=gen-data task=" << data::task_name(options.task)
        << " domain=" << data::domain_name(options.domain) << " count=" << options.count
        << " train=" << manifest.split("train").size() << " test=" << manifest.split("test").size()
        << " manifest=" << (out_dir / "manifest.json").string() << "\n";
    return kExitOk;
}

int cmd_train(const fs::path& config_path, const fs::path& out_dir, bool force, std::ostream& out,
              std::ostream& err) {
    const RunConfig rc = load_run_config(config_path);
    const auto manifest = data::DatasetManifest::load(rc.manifest);
    prepare_out(out_dir, force);
    auto result = trainer::train(rc.model, rc.train, manifest,
                                 [&](const trainer::EpochRecord& r) { print_epoch(err, "", r); });
    trainer::save_checkpoint(out_dir / "checkpoint.hspc", trainer::make_checkpoint(result, rc.train));
    write_text(out_dir / "history.jsonl", trainer::history_jsonl(result.history));
    write_text(out_dir / "config.json",
               json{{"model", trainer::to_json(rc.model)}, {"train", trainer::to_json(rc.train)}}.dump(2) + "\n");
    const auto& last = result.history.back();
    out << "command=train variant=" << trainer::variant_name(trainer::variant_of(rc.model.flags))
        << " epochs=" << last.epoch << " train_loss=" << fmt(last.train_loss);
    if (last.monitor_dice) out << " monitor_dice=" << fmt(*last.monitor_dice);
    out << " params=" << result.model.trainable_count()
        << " checkpoint=" << (out_dir / "checkpoint.hspc").string() << "\n";
    return kExitOk;
}

int cmd_eval(const fs::path& checkpoint_path, const fs::path& manifest_path, const std::string& split,
             const fs::path& out_dir, bool force, std::ostream& out) {
    const auto model = trainer::restore_model(trainer::load_checkpoint(checkpoint_path));
    const auto manifest = data::DatasetManifest::load(manifest_path);
    prepare_out(out_dir, force);
    const auto report = trainer::evaluate(model, manifest, split, thread_count());
    write_text(out_dir / "report.json", trainer::to_json(report).dump(2) + "\n");
    out << loss::to_key_value(report.aggregate) << " split=" << split
        << " images=" << report.per_image.size() << "\n";
    return kExitOk;
}

int cmd_ablate(const fs::path& config_path, const fs::path& out_dir, bool force, std::ostream& out,
               std::ostream& err) {
    const RunConfig rc = load_run_config(config_path);
    const auto data = load_sources(rc);
    prepare_out(out_dir, force);
    const auto rows = trainer::run_ablation(
        rc.model, rc.train, data.source, data.target ? &*data.target : nullptr,
        [&](const std::string& label, const trainer::EpochRecord& r) { print_epoch(err, label + " ", r); });
    write_text(out_dir / "ablation.csv", trainer::ablation_csv(rows));
    for (const auto& r : rows) {
        out << "command=ablate variant=" << trainer::variant_name(r.variant) << " dice=" << fmt(r.dice)
            << " hd=" << fmt(r.hd) << " params=" << r.params << " source_dice=" << fmt(r.source_dice) << "\n";
    }
    return kExitOk;
}

int cmd_sweep(const fs::path& config_path, const std::string& counts_text, const fs::path& out_dir, bool force,
              std::ostream& out, std::ostream& err) {
    const RunConfig rc = load_run_config(config_path);
    const auto counts = parse_counts(counts_text);
    const auto data = load_sources(rc);
    prepare_out(out_dir, force);
    const auto rows = trainer::run_prompt_sweep(
        rc.model, rc.train, counts, data.source, data.target ? &*data.target : nullptr,
        [&](const std::string& label, const trainer::EpochRecord& r) { print_epoch(err, label + " ", r); });
    write_text(out_dir / "sweep.csv", trainer::sweep_csv(rows));

    trainer::PlotSeries source{{}, 255}, target{{}, 150};
    for (const auto& r : rows) {
        source.y.push_back(r.source_dice);
        if (r.target_dice) target.y.push_back(*r.target_dice);
    }
    std::vector<trainer::PlotSeries> series{source};
    if (!target.y.empty()) series.push_back(target);
    data::write_pnm(out_dir / "sweep.pgm", trainer::render_line_plot(series, 0.0, 1.0));

    for (const auto& r : rows) {
        out << "command=sweep count=" << r.count << " source_dice=" << fmt(r.source_dice);
        if (r.target_dice) out << " target_dice=" << fmt(*r.target_dice);
        out << "\n";
    }
    return kExitOk;
}

int cmd_heatmaps(const fs::path& checkpoint_path, const fs::path& image_path, const fs::path& out_dir, bool force,
                 std::ostream& out) {
    const auto model = trainer::restore_model(trainer::load_checkpoint(checkpoint_path));
    if (!model.config().flags.qa_pairs) {
        throw ConfigError("heatmaps: the checkpoint's variant has no Q&A prompt pairs");
    }
    const data::Image8 image = data::read_pnm(image_path);
    const auto& enc = model.config().encoder;
    if (image.channels != enc.in_channels) {
        throw DatasetError(image_path.string() + ": " + std::to_string(image.channels) +
                           " channels, model expects " + std::to_string(enc.in_channels));
    }
    num::NoGradGuard guard;
    const auto output = model.forward(data::image_tensor(image, enc.image_size, model.dtype()));
    const auto maps = prompt::export_heatmaps(output.query_attention, output.answer_attention, enc.image_size);
    prepare_out(out_dir, force);
    prompt::write_heatmaps(out_dir, maps);
    out << "command=heatmaps levels=" << output.query_attention.size()
        << " prompts=" << model.config().prompt_count << " files=" << maps.size() << " dir=" << out_dir.string()
        << "\n";
    return kExitOk;
}

}  // namespace

RunConfig parse_run_config(const json& doc, const fs::path& base_dir) {
    if (!doc.is_object()) throw ConfigError("run config must be a JSON object");
    for (const auto& [key, value] : doc.items()) {
        if (key != "model" && key != "train" && key != "data") {
            throw ConfigError("run config: unknown key '" + key + "'");
        }
    }
    RunConfig rc;
    rc.model = trainer::model_config_from_json(doc.value("model", json::object()));
    rc.train = trainer::train_config_from_json(doc.value("train", json::object()));
    const auto it = doc.find("data");
    if (it == doc.end() || !it->is_object()) throw ConfigError("run config: 'data' object is required");
    for (const auto& [key, value] : it->items()) {
        if (key != "manifest" && key != "target_manifest") {
            throw ConfigError("data: unknown key '" + key + "'");
        }
        if (!value.is_string()) throw ConfigError("data." + key + ": expected a path string");
    }
    if (!it->contains("manifest")) throw ConfigError("data.manifest is required");
    auto resolve = [&](const std::string& p) { return fs::path(p).is_absolute() ? fs::path(p) : base_dir / p; };
    rc.manifest = resolve(it->at("manifest").get<std::string>());
    if (it->contains("target_manifest")) rc.target_manifest = resolve(it->at("target_manifest").get<std::string>());
    return rc;
}

RunConfig load_run_config(const fs::path& path) {
    return parse_run_config(read_json(path), path.parent_path());
}

std::size_t thread_count() {
    const char* env = std::getenv("HSP_THREADS");
    if (!env || !*env) return 1;
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (*end != '\0' || v < 1 || v > 256) throw ConfigError(std::string("HSP_THREADS: invalid value '") + env + "'");
    return static_cast<std::size_t>(v);
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Hierarchical self-prompting segmentation toolkit", "hsp"};
    app.require_subcommand(1);
    bool force = false;
    std::string out_dir;

    auto add_out = [&](CLI::App* sub) {
        sub->add_option("--out", out_dir, "Output directory")->required();
        sub->add_flag("--force", force, "Reuse an existing output directory");
    };

    data::SyntheticOptions gen;
    std::string task = "blobs", domain = "source";
    std::size_t test_count = 0;
    auto* gen_cmd = app.add_subcommand("gen-data", "Generate a synthetic dataset");
    gen_cmd->add_option("--task", task, "blobs, vessels or instances")->capture_default_str();
    gen_cmd->add_option("--count", gen.count, "Number of samples")->capture_default_str();
    gen_cmd->add_option("--seed", gen.seed, "Generator seed")->capture_default_str();
    gen_cmd->add_option("--size", gen.image_size, "Image side in pixels")->capture_default_str();
    gen_cmd->add_option("--domain", domain, "source or target appearance")->capture_default_str();
    auto* test_opt = gen_cmd->add_option("--test-count", test_count, "Held-out test samples (default 30%)");
    add_out(gen_cmd);

    std::string config_path, checkpoint_path, manifest_path, split = "test", image_path, counts = "1,2,4,8,16";
    auto* train_cmd = app.add_subcommand("train", "Train one model");
    train_cmd->add_option("--config", config_path, "Run config JSON")->required();
    add_out(train_cmd);

    auto* eval_cmd = app.add_subcommand("eval", "Score a checkpoint on a dataset split");
    eval_cmd->add_option("--checkpoint", checkpoint_path, "Checkpoint file")->required();
    eval_cmd->add_option("--manifest", manifest_path, "Dataset manifest")->required();
    eval_cmd->add_option("--split", split, "train, val or test")
        ->capture_default_str()
        ->check(CLI::IsMember({"train", "val", "test"}));
    add_out(eval_cmd);

    auto* ablate_cmd = app.add_subcommand("ablate", "Train the six ablation variants");
    ablate_cmd->add_option("--config", config_path, "Run config JSON")->required();
    add_out(ablate_cmd);

    auto* sweep_cmd = app.add_subcommand("sweep", "Train across prompt counts");
    sweep_cmd->add_option("--config", config_path, "Run config JSON")->required();
    sweep_cmd->add_option("--counts", counts, "Comma-separated prompt counts")->capture_default_str();
    add_out(sweep_cmd);

    auto* heat_cmd = app.add_subcommand("heatmaps", "Export Q&A prompt attention heatmaps");
    heat_cmd->add_option("--checkpoint", checkpoint_path, "Checkpoint file")->required();
    heat_cmd->add_option("--image", image_path, "PGM/PPM input image")->required();
    add_out(heat_cmd);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kExitOk : kExitConfig;
    }

    try {
        thread_count();
        if (*gen_cmd) {
            gen.task = data::parse_task(task);
            gen.domain = data::parse_domain(domain);
            if (*test_opt) gen.test_count = test_count;
            return cmd_gen_data(gen, out_dir, force, out);
        }
        if (*train_cmd) return cmd_train(config_path, out_dir, force, out, err);
        if (*eval_cmd) return cmd_eval(checkpoint_path, manifest_path, split, out_dir, force, out);
        if (*ablate_cmd) return cmd_ablate(config_path, out_dir, force, out, err);
        if (*sweep_cmd) return cmd_sweep(config_path, counts, out_dir, force, out, err);
        return cmd_heatmaps(checkpoint_path, image_path, out_dir, force, out);
    } catch (const ConfigError& e) {
        err << "error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const UsageError& e) {
        err << "error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const IoError& e) {
        err << "error: " << e.what() << "\n";
        return kExitIo;
    } catch (const DatasetError& e) {
        err << "error: " << e.what() << "\n";
        return kExitIo;
    } catch (const DivergenceError& e) {
        err << "error: " << e.what() << "\n";
        return kExitDivergence;
    } catch (const fs::filesystem_error& e) {
        err << "error: " << e.what() << "\n";
        return kExitIo;
    }
}

}  // namespace hsp::cli
