#include "hsp/trainer/config_json.hpp"

#include <cstdint>
#include <set>

#include "hsp/errors.hpp"

namespace hsp::trainer {

namespace {

using nlohmann::json;

// Checks the object's keys against `allowed` and reads typed fields.
class Reader {
public:
    Reader(const json& doc, std::string path, std::set<std::string> allowed)
        : doc_(doc), path_(std::move(path)) {
        if (!doc_.is_object()) throw ConfigError(path_ + ": expected an object");
        for (const auto& [key, value] : doc_.items()) {
            if (!allowed.count(key)) throw ConfigError(path_ + ": unknown key '" + key + "'");
        }
    }

    template <class T>
    void get(const char* key, T& out) const {
        const auto it = doc_.find(key);
        if (it == doc_.end()) return;
        try {
            if constexpr (std::is_same_v<T, std::size_t> || std::is_same_v<T, std::uint64_t>) {
                if (!it->is_number_integer() || it->template get<std::int64_t>() < 0) throw ConfigError("");
            } else if constexpr (std::is_same_v<T, double>) {
                if (!it->is_number()) throw ConfigError("");
            } else if constexpr (std::is_same_v<T, bool>) {
                if (!it->is_boolean()) throw ConfigError("");
            }
            out = it->template get<T>();
        } catch (const std::exception&) {
            throw ConfigError(path_ + "." + key + ": invalid value " + it->dump());
        }
    }

    const json* child(const char* key) const {
        const auto it = doc_.find(key);
        return it == doc_.end() ? nullptr : &*it;
    }

private:
    const json& doc_;
    std::string path_;
};

}  // namespace

num::DType parse_dtype(const std::string& name) {
    if (name == "float32") return num::DType::f32;
    if (name == "float64") return num::DType::f64;
    throw ConfigError("unknown dtype '" + name + "' (valid: float32, float64)");
}

json to_json(const ModelConfig& c) {
    const auto& e = c.encoder;
    return {
        {"encoder",
         {{"image_size", e.image_size},
          {"patch_size", e.patch_size},
          {"in_channels", e.in_channels},
          {"width", e.width},
          {"depth", e.depth},
          {"global_layers", e.global_layers},
          {"heads", e.heads},
          {"window_size", e.window_size},
          {"lora_rank", e.lora_rank},
          {"mlp_ratio", e.mlp_ratio}}},
        {"decoder", {{"width", c.decoder_width}, {"heads", c.decoder_heads}, {"num_classes", c.num_classes}}},
        {"prompts", {{"count", c.prompt_count}}},
        {"variant",
         {{"qa_pairs", c.flags.qa_pairs},
          {"hierarchical_decoding", c.flags.hierarchical},
          {"skip_connection", c.flags.skip}}},
    };
}

ModelConfig model_config_from_json(const json& doc) {
    ModelConfig c;
    Reader root(doc, "model", {"encoder", "decoder", "prompts", "variant"});
    if (const json* e = root.child("encoder")) {
        Reader r(*e, "model.encoder",
                 {"image_size", "patch_size", "in_channels", "width", "depth", "global_layers", "heads",
                  "window_size", "lora_rank", "mlp_ratio"});
        r.get("image_size", c.encoder.image_size);
        r.get("patch_size", c.encoder.patch_size);
        r.get("in_channels", c.encoder.in_channels);
        r.get("width", c.encoder.width);
        r.get("depth", c.encoder.depth);
        r.get("global_layers", c.encoder.global_layers);
        r.get("heads", c.encoder.heads);
        r.get("window_size", c.encoder.window_size);
        r.get("lora_rank", c.encoder.lora_rank);
        r.get("mlp_ratio", c.encoder.mlp_ratio);
    }
    if (const json* d = root.child("decoder")) {
        Reader r(*d, "model.decoder", {"width", "heads", "num_classes"});
        r.get("width", c.decoder_width);
        r.get("heads", c.decoder_heads);
        r.get("num_classes", c.num_classes);
    }
    if (const json* p = root.child("prompts")) {
        Reader r(*p, "model.prompts", {"count"});
        r.get("count", c.prompt_count);
    }
    if (const json* v = root.child("variant")) {
        Reader r(*v, "model.variant", {"qa_pairs", "hierarchical_decoding", "skip_connection"});
        r.get("qa_pairs", c.flags.qa_pairs);
        r.get("hierarchical_decoding", c.flags.hierarchical);
        r.get("skip_connection", c.flags.skip);
    }
    c.validate();
    return c;
}

json to_json(const TrainConfig& c) {
    return {{"epochs", c.epochs},
            {"batch_size", c.batch_size},
            {"learning_rate", c.learning_rate},
            {"seed", c.seed},
            {"alpha", c.loss.alpha},
            {"smooth", c.loss.smooth},
            {"dtype", num::dtype_name(c.dtype)},
            {"monitor", c.monitor}};
}

TrainConfig train_config_from_json(const json& doc) {
    TrainConfig c;
    Reader r(doc, "train",
             {"epochs", "batch_size", "learning_rate", "seed", "alpha", "smooth", "dtype", "monitor"});
    r.get("epochs", c.epochs);
    r.get("batch_size", c.batch_size);
    r.get("learning_rate", c.learning_rate);
    r.get("seed", c.seed);
    r.get("alpha", c.loss.alpha);
    r.get("smooth", c.loss.smooth);
    r.get("monitor", c.monitor);
    std::string dtype = num::dtype_name(c.dtype);
    r.get("dtype", dtype);
    c.dtype = parse_dtype(dtype);
    c.validate();
    return c;
}

}  // namespace hsp::trainer
