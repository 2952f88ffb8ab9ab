#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "hsp/data/label_map.hpp"
#include "hsp/decoder/decoder.hpp"
#include "hsp/encoder/encoder.hpp"
#include "hsp/self_prompt/prompt_bank.hpp"

namespace hsp::trainer {

using num::Tensor;

struct VariantFlags {
    bool qa_pairs = true;
    bool hierarchical = true;
    bool skip = true;  // the "+ output_N" term; requires hierarchical
    bool operator==(const VariantFlags&) const = default;
};

enum class Variant { ft_sam, ablation_1, ablation_2, ablation_3, ablation_4, ablation_5 };

inline constexpr std::array<Variant, 6> kAllVariants{Variant::ft_sam,     Variant::ablation_1,
                                                     Variant::ablation_2, Variant::ablation_3,
                                                     Variant::ablation_4, Variant::ablation_5};

VariantFlags flags_of(Variant variant);
// Throws ConfigError for skip without hierarchical decoding.
Variant variant_of(const VariantFlags& flags);
std::string variant_name(Variant variant);  // "Ft-SAM", "Ablation_1", ...

struct ModelConfig {
    encoder::EncoderConfig encoder;
    std::size_t decoder_width = 48;
    std::size_t decoder_heads = 4;
    std::size_t num_classes = 2;
    std::size_t prompt_count = 1;  // c; defaults to the foreground class count
    VariantFlags flags;

    void validate() const;
    // Decoder chain length: N with hierarchical decoding, else 1.
    std::size_t levels() const { return flags.hierarchical ? encoder.num_global() : 1; }
};

struct ModelOutput {
    Tensor logits;                        // (num_classes, H, W)
    std::vector<Tensor> query_attention;  // (c, tokens) per prompted level, shallowest first
    std::vector<Tensor> answer_attention;
};

// Encoder + prompt bank (or learned constant tokens) + hierarchical decoder.
class Model {
public:
    Model(ModelConfig config, num::DType dtype, std::uint64_t seed);

    const ModelConfig& config() const { return config_; }
    num::DType dtype() const { return dtype_; }
    std::uint64_t seed() const { return seed_; }

    // (C, H, W) image -> logits and attention records.
    ModelOutput forward(const Tensor& image) const;

    // Everything the optimizer updates, in a fixed order with unique names.
    num::ParamList trainable_parameters() const;
    num::ParamList frozen_parameters() const;
    std::size_t trainable_count() const;

    encoder::ImageEncoder& encoder() { return encoder_; }
    const encoder::ImageEncoder& encoder() const { return encoder_; }
    decoder::MaskDecoder& decoder() { return decoder_; }
    const decoder::MaskDecoder& decoder() const { return decoder_; }
    const std::optional<prompt::PromptBank>& bank() const { return bank_; }
    std::optional<prompt::PromptBank>& bank() { return bank_; }

private:
    ModelConfig config_;
    num::DType dtype_;
    std::uint64_t seed_;
    encoder::ImageEncoder encoder_;
    std::optional<prompt::PromptBank> bank_;
    std::vector<Tensor> tokens_;  // learned constant prompts when Q&A pairs are off
    decoder::MaskDecoder decoder_;
};

// Per-pixel argmax of (C, H, W) logits; ties go to the lower class.
data::LabelMap predict_labels(const Tensor& logits);

}  // namespace hsp::trainer
