#include "hsp/trainer/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <map>

#include "hsp/errors.hpp"
#include "hsp/numerics/serialize.hpp"
#include "hsp/trainer/config_json.hpp"

namespace hsp::trainer {

namespace {

constexpr char kMagic[4] = {'H', 'S', 'P', 'C'};

template <class T>
void put(std::ostream& out, T value) {
    unsigned char bytes[sizeof(T)];
    for (std::size_t i = 0; i < sizeof(T); ++i) bytes[i] = static_cast<unsigned char>(value >> (8 * i));
    out.write(reinterpret_cast<const char*>(bytes), sizeof(T));
}

template <class T>
T take(std::istream& in, const std::string& origin) {
    unsigned char bytes[sizeof(T)];
    if (!in.read(reinterpret_cast<char*>(bytes), sizeof(T))) {
        throw IoError(origin + ": truncated checkpoint");
    }
    T value = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) value |= static_cast<T>(bytes[i]) << (8 * i);
    return value;
}

std::string take_string(std::istream& in, std::size_t n, const std::string& origin) {
    std::string s(n, '\0');
    if (n && !in.read(s.data(), static_cast<std::streamsize>(n))) {
        throw IoError(origin + ": truncated checkpoint");
    }
    return s;
}

void copy_into(Tensor& dst, const Tensor& src, const std::string& name) {
    if (dst.shape() != src.shape()) {
        throw IoError("checkpoint parameter " + name + " has shape " + num::shape_str(src.shape()) +
                      ", model expects " + num::shape_str(dst.shape()));
    }
    const Tensor converted = src.to(dst.dtype());
    num::dispatch(dst.dtype(), [&](auto tag) {
        using T = decltype(tag);
        auto out = dst.mutable_data<T>();
        const auto in = converted.template data<T>();
        std::copy(in.begin(), in.end(), out.begin());
    });
}

}  // namespace

Checkpoint make_checkpoint(const TrainResult& result, const TrainConfig& config) {
    Checkpoint c;
    c.model = result.model.config();
    c.train = config;
    c.backbone_seed = result.model.seed();
    c.epoch = result.history.size();
    c.optimizer_steps = result.optimizer.steps();
    c.history = result.history;
    for (const auto& p : result.model.trainable_parameters()) {
        c.parameters.push_back({p.name, p.tensor.detach()});
    }
    c.optimizer_state = result.optimizer.state();
    return c;
}

nlohmann::json history_json(const std::vector<EpochRecord>& history) {
    nlohmann::json out = nlohmann::json::array();
    for (const auto& r : history) {
        nlohmann::json j{{"epoch", r.epoch}, {"train_loss", r.train_loss}};
        j["monitor_dice"] = r.monitor_dice ? nlohmann::json(*r.monitor_dice) : nlohmann::json(nullptr);
        out.push_back(j);
    }
    return out;
}

std::string history_jsonl(const std::vector<EpochRecord>& history) {
    std::string out;
    for (const auto& j : history_json(history)) out += j.dump() + "\n";
    return out;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& c) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write checkpoint " + path.string());
    out.write(kMagic, 4);
    put<std::uint32_t>(out, kCheckpointVersion);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(c.parameters.size() + c.optimizer_state.size()));
    for (const auto* list : {&c.parameters, &c.optimizer_state}) {
        for (const auto& p : *list) {
            put<std::uint32_t>(out, static_cast<std::uint32_t>(p.name.size()));
            out.write(p.name.data(), static_cast<std::streamsize>(p.name.size()));
            num::write_tensor(out, p.tensor);
        }
    }
    const nlohmann::json meta{{"model", to_json(c.model)},
                              {"train", to_json(c.train)},
                              {"backbone_seed", c.backbone_seed},
                              {"epoch", c.epoch},
                              {"optimizer_steps", c.optimizer_steps},
                              {"parameter_count", c.parameters.size()},
                              {"history", history_json(c.history)}};
    const std::string text = meta.dump();
    put<std::uint64_t>(out, text.size());
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    if (!out) throw IoError("failed writing checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    const std::string origin = path.string();
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open checkpoint " + origin);
    char magic[4];
    if (!in.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0) {
        throw IoError(origin + ": not a checkpoint file");
    }
    const auto version = take<std::uint32_t>(in, origin);
    if (version != kCheckpointVersion) {
        throw IoError(origin + ": unsupported checkpoint version " + std::to_string(version));
    }
    const auto count = take<std::uint32_t>(in, origin);
    num::ParamList tensors;
    for (std::uint32_t i = 0; i < count; ++i) {
        const auto len = take<std::uint32_t>(in, origin);
        if (len > 4096) throw IoError(origin + ": corrupt tensor name");
        std::string name = take_string(in, len, origin);
        tensors.push_back({std::move(name), num::read_tensor(in)});
    }
    const auto meta_len = take<std::uint64_t>(in, origin);
    if (meta_len > (1ull << 30)) throw IoError(origin + ": corrupt metadata length");
    const std::string text = take_string(in, static_cast<std::size_t>(meta_len), origin);

    Checkpoint c;
    try {
        const auto meta = nlohmann::json::parse(text);
        c.model = model_config_from_json(meta.at("model"));
        c.train = train_config_from_json(meta.at("train"));
        c.backbone_seed = meta.at("backbone_seed").get<std::uint64_t>();
        c.epoch = meta.at("epoch").get<std::size_t>();
        c.optimizer_steps = meta.at("optimizer_steps").get<std::size_t>();
        const auto params = meta.at("parameter_count").get<std::size_t>();
        if (params > tensors.size()) throw IoError(origin + ": parameter count exceeds stored tensors");
        for (const auto& h : meta.at("history")) {
            EpochRecord r;
            r.epoch = h.at("epoch").get<std::size_t>();
            r.train_loss = h.at("train_loss").get<double>();
            if (!h.at("monitor_dice").is_null()) r.monitor_dice = h.at("monitor_dice").get<double>();
            c.history.push_back(r);
        }
        c.parameters.assign(tensors.begin(), tensors.begin() + static_cast<std::ptrdiff_t>(params));
        c.optimizer_state.assign(tensors.begin() + static_cast<std::ptrdiff_t>(params), tensors.end());
    } catch (const nlohmann::json::exception& e) {
        throw IoError(origin + ": malformed checkpoint metadata: " + e.what());
    }
    return c;
}

Model restore_model(const Checkpoint& c) {
    Model model(c.model, c.train.dtype, c.backbone_seed);
    std::map<std::string, Tensor> stored;
    for (const auto& p : c.parameters) stored[p.name] = p.tensor;
    auto params = model.trainable_parameters();
    if (params.size() != stored.size()) {
        throw IoError("checkpoint holds " + std::to_string(stored.size()) + " parameters, model has " +
                      std::to_string(params.size()));
    }
    for (auto& p : params) {
        const auto it = stored.find(p.name);
        if (it == stored.end()) throw IoError("checkpoint lacks parameter " + p.name);
        copy_into(p.tensor, it->second, p.name);
    }
    return model;
}

TrainResult restore_training(const Checkpoint& c) {
    Model model = restore_model(c);
    Adam opt(model.trainable_parameters(), {c.train.learning_rate});
    opt.load_state(c.optimizer_state, c.optimizer_steps);
    return TrainResult{std::move(model), std::move(opt), c.history};
}

}  // namespace hsp::trainer
