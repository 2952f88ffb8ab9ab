#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "hsp/encoder/lora.hpp"
#include "hsp/numerics/layers.hpp"
#include "hsp/numerics/ops.hpp"

namespace hsp::encoder {

struct EncoderConfig {
    std::size_t image_size = 64;
    std::size_t patch_size = 8;
    std::size_t in_channels = 1;
    std::size_t width = 96;  // d_I
    std::size_t depth = 8;
    std::vector<std::size_t> global_layers{2, 5, 7};
    std::size_t heads = 4;
    std::size_t window_size = 4;  // tokens per side of a local window
    std::size_t lora_rank = 4;
    std::size_t mlp_ratio = 4;

    // Throws ConfigError naming the first violated constraint.
    void validate() const;

    std::size_t grid() const { return image_size / patch_size; }
    std::size_t num_tokens() const { return grid() * grid(); }
    std::size_t num_global() const { return global_layers.size(); }
    bool is_global(std::size_t block) const;
};

struct EncoderBlock {
    bool global = false;
    num::LayerNorm norm1;
    LoraAdapter query;
    num::Linear key;
    LoraAdapter value;
    num::Linear proj;
    num::LayerNorm norm2;
    num::Linear fc1;
    num::Linear fc2;
};

struct EncoderOutput {
    // One (d_I, grid, grid) map per global block, shallowest first.
    std::vector<Tensor> embeddings;
    // Per global block: (c, num_tokens) attention of each injected prompt over
    // the spatial tokens, rows summing to one. Undefined where no prompts were injected.
    std::vector<Tensor> prompt_attention;
};

// ViT image encoder with windowed local blocks, global blocks that accept
// prompt tokens, and LoRA on the query/value projections of every block.
class ImageEncoder {
public:
    // Backbone weights come from `backbone_seed` and are frozen; LoRA factors
    // come from `adapter_seed`.
    ImageEncoder(EncoderConfig config, num::DType dtype, std::uint64_t backbone_seed,
                 std::uint64_t adapter_seed);

    const EncoderConfig& config() const { return config_; }
    num::DType dtype() const { return dtype_; }

    // (C,H,W) image -> (num_tokens, d_I) tokens with positional embedding added.
    Tensor patchify(const Tensor& image) const;

    // `prompts` holds one entry per global block (size N); each defined entry is a
    // (c, d_I) token set joined to that block's attention and stripped after it.
    // With `use_lora` false the adapters are bypassed (pure frozen backbone).
    EncoderOutput forward(const Tensor& image, std::span<const Tensor> prompts,
                          bool use_lora = true) const;

    num::ParamList frozen_parameters() const;
    num::ParamList trainable_parameters() const;

    std::vector<EncoderBlock>& blocks() { return blocks_; }
    const std::vector<EncoderBlock>& blocks() const { return blocks_; }

private:
    Tensor run_block(const EncoderBlock& block, const Tensor& tokens, const Tensor& prompts,
                     bool use_lora, Tensor* prompt_attention) const;

    EncoderConfig config_;
    num::DType dtype_;
    num::Linear patch_embed_;
    Tensor pos_embed_;
    std::vector<EncoderBlock> blocks_;
    num::AttentionOptions local_attention_;
};

}  // namespace hsp::encoder
