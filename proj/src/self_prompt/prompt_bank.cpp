#include "hsp/self_prompt/prompt_bank.hpp"

#include <string>

#include "hsp/errors.hpp"
#include "hsp/numerics/ops.hpp"

namespace hsp::prompt {

void PromptConfig::validate() const {
    if (count == 0) throw ConfigError("prompts: count must be at least 1");
    if (layers == 0) throw ConfigError("prompts: at least one layer is required");
    if (decoder_width == 0 || decoder_width >= encoder_width) {
        throw ConfigError("prompts: bottleneck requires 0 < decoder_width (" +
                          std::to_string(decoder_width) + ") < encoder_width (" +
                          std::to_string(encoder_width) + ")");
    }
}

Tensor PromptMlp::forward(const Tensor& row) const {
    return fc2.forward(num::gelu(fc1.forward(row)));
}

PromptBank PromptBank::init(const PromptConfig& config, num::DType dtype, std::uint64_t seed) {
    config.validate();
    num::Rng rng(num::mix_seed(seed, "self_prompt"));
    PromptBank bank;
    bank.config_ = config;
    const std::size_t di = config.encoder_width;
    const std::size_t dd = config.decoder_width;
    for (std::size_t j = 0; j < config.layers; ++j) {
        PromptLayer layer;
        layer.queries = num::randn({config.count, di}, dtype, rng, 0.02);
        layer.reduce = num::Linear::fan_in_uniform(di, dd, false, dtype, rng);
        for (std::size_t i = 0; i < config.count; ++i) {
            layer.mlps.push_back({num::Linear::fan_in_uniform(dd, dd, true, dtype, rng),
                                  num::Linear::fan_in_uniform(dd, dd, true, dtype, rng)});
        }
        bank.layers_.push_back(std::move(layer));
    }
    num::ParamList params;
    bank.collect("", params);
    for (auto& p : params) p.tensor.set_requires_grad(true);
    return bank;
}

Tensor PromptBank::compute_answers(std::size_t j) const {
    if (j >= layers_.size()) {
        throw ConfigError("prompts: layer " + std::to_string(j) + " out of range (" +
                          std::to_string(layers_.size()) + " layers)");
    }
    const PromptLayer& layer = layers_[j];
    Tensor reduced = layer.reduce.forward(layer.queries);
    std::vector<Tensor> rows;
    rows.reserve(layer.mlps.size());
    for (std::size_t i = 0; i < layer.mlps.size(); ++i) {
        rows.push_back(layer.mlps[i].forward(num::slice(reduced, 0, i, i + 1)));
    }
    return rows.size() == 1 ? rows.front() : num::concat(rows, 0);
}

std::vector<Tensor> PromptBank::queries() const {
    std::vector<Tensor> out;
    for (const auto& l : layers_) out.push_back(l.queries);
    return out;
}

void PromptBank::collect(const std::string& prefix, num::ParamList& out) const {
    for (std::size_t j = 0; j < layers_.size(); ++j) {
        const std::string p = prefix + "prompts." + std::to_string(j);
        out.push_back({p + ".queries", layers_[j].queries});
        layers_[j].reduce.collect(p + ".reduce", out);
        for (std::size_t i = 0; i < layers_[j].mlps.size(); ++i) {
            const std::string m = p + ".mlp." + std::to_string(i);
            layers_[j].mlps[i].fc1.collect(m + ".fc1", out);
            layers_[j].mlps[i].fc2.collect(m + ".fc2", out);
        }
    }
}

}  // namespace hsp::prompt
