#include "hsp/trainer/model.hpp"

#include "hsp/errors.hpp"
#include "hsp/numerics/random.hpp"

namespace hsp::trainer {

namespace {

decoder::DecoderConfig decoder_config(const ModelConfig& c) {
    decoder::DecoderConfig d;
    d.encoder_width = c.encoder.width;
    d.width = c.decoder_width;
    d.layers = c.levels();
    d.heads = c.decoder_heads;
    d.num_classes = c.num_classes;
    d.patch_size = c.encoder.patch_size;
    return d;
}

const ModelConfig& validated(const ModelConfig& c) {
    c.validate();
    return c;
}

}  // namespace

VariantFlags flags_of(Variant variant) {
    switch (variant) {
        case Variant::ft_sam: return {false, false, false};
        case Variant::ablation_1: return {true, false, false};
        case Variant::ablation_2: return {true, true, false};
        case Variant::ablation_3: return {true, true, true};
        case Variant::ablation_4: return {false, true, false};
        case Variant::ablation_5: return {false, true, true};
    }
    throw UsageError("unknown variant");
}

Variant variant_of(const VariantFlags& flags) {
    for (Variant v : kAllVariants) {
        if (flags_of(v) == flags) return v;
    }
    throw ConfigError("skip_connection requires hierarchical_decoding");
}

std::string variant_name(Variant variant) {
    switch (variant) {
        case Variant::ft_sam: return "Ft-SAM";
        case Variant::ablation_1: return "Ablation_1";
        case Variant::ablation_2: return "Ablation_2";
        case Variant::ablation_3: return "Ablation_3";
        case Variant::ablation_4: return "Ablation_4";
        case Variant::ablation_5: return "Ablation_5";
    }
    return "unknown";
}

void ModelConfig::validate() const {
    encoder.validate();
    variant_of(flags);
    if (prompt_count == 0) throw ConfigError("model: prompt_count must be at least 1");
    if (decoder_width == 0 || decoder_width >= encoder.width) {
        throw ConfigError("model: decoder_width must be in [1, encoder width " +
                          std::to_string(encoder.width) + ")");
    }
    decoder_config(*this).validate();
}

Model::Model(ModelConfig config, num::DType dtype, std::uint64_t seed)
    : config_(std::move(config)),
      dtype_(dtype),
      seed_(seed),
      encoder_(validated(config_).encoder, dtype, seed, seed),
      decoder_(decoder_config(config_), dtype, seed) {
    if (config_.flags.qa_pairs) {
        prompt::PromptConfig pc;
        pc.count = config_.prompt_count;
        pc.encoder_width = config_.encoder.width;
        pc.decoder_width = config_.decoder_width;
        pc.layers = config_.levels();
        bank_ = prompt::PromptBank::init(pc, dtype, seed);
    } else {
        num::Rng rng(num::mix_seed(seed, "prompt_tokens"));
        for (std::size_t j = 0; j < config_.levels(); ++j) {
            tokens_.push_back(
                num::randn({config_.prompt_count, config_.decoder_width}, dtype, rng, 1.0)
                    .set_requires_grad(true));
        }
    }
}

ModelOutput Model::forward(const Tensor& image) const {
    const std::size_t n = config_.encoder.num_global();
    const std::size_t levels = config_.levels();
    // Prompted global blocks: all of them, or only the last without hierarchy.
    const std::size_t first = n - levels;

    std::vector<Tensor> injected;
    if (bank_) {
        injected.assign(n, Tensor{});
        const auto queries = bank_->queries();
        for (std::size_t j = 0; j < levels; ++j) injected[first + j] = queries[j];
    }
    const auto enc = encoder_.forward(image, injected);

    std::vector<Tensor> embeddings(enc.embeddings.begin() + static_cast<std::ptrdiff_t>(first),
                                   enc.embeddings.end());
    std::vector<Tensor> answers;
    for (std::size_t j = 0; j < levels; ++j) {
        answers.push_back(bank_ ? bank_->compute_answers(j) : tokens_[j]);
    }
    auto state = decoder_.forward(embeddings, answers, config_.flags.skip);

    ModelOutput out;
    out.logits = state.logits;
    if (bank_) {
        out.query_attention.assign(enc.prompt_attention.begin() + static_cast<std::ptrdiff_t>(first),
                                   enc.prompt_attention.end());
        out.answer_attention = std::move(state.prompt_attention);
    }
    return out;
}

num::ParamList Model::trainable_parameters() const {
    num::ParamList out = encoder_.trainable_parameters();
    if (bank_) bank_->collect("", out);
    for (std::size_t j = 0; j < tokens_.size(); ++j) {
        out.push_back({"prompt_tokens." + std::to_string(j), tokens_[j]});
    }
    decoder_.collect("", out);
    return out;
}

num::ParamList Model::frozen_parameters() const {
    return encoder_.frozen_parameters();
}

std::size_t Model::trainable_count() const {
    return num::count_elements(trainable_parameters());
}

data::LabelMap predict_labels(const Tensor& logits) {
    if (logits.rank() != 3) {
        throw ShapeError("predict_labels: expected (C,H,W), got " + num::shape_str(logits.shape()));
    }
    const std::size_t c = logits.dim(0);
    const std::size_t hw = logits.dim(1) * logits.dim(2);
    const auto v = logits.to_vector();
    data::LabelMap labels(logits.dim(1), logits.dim(2));
    for (std::size_t i = 0; i < hw; ++i) {
        std::size_t best = 0;
        for (std::size_t k = 1; k < c; ++k) {
            if (v[k * hw + i] > v[best * hw + i]) best = k;
        }
        labels.values[i] = static_cast<std::uint8_t>(best);
    }
    return labels;
}

}  // namespace hsp::trainer
