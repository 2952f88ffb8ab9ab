#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "hsp/numerics/layers.hpp"
#include "hsp/numerics/ops.hpp"

namespace hsp::decoder {

using num::Tensor;

struct DecoderConfig {
    std::size_t encoder_width = 96;  // d_I
    std::size_t width = 48;          // d_D
    std::size_t layers = 3;          // N
    std::size_t heads = 4;
    std::size_t num_classes = 2;     // foreground classes + background
    std::size_t patch_size = 8;      // head upsampling factor, a power of two

    void validate() const;
};

// (d, h, w) map <-> (h*w, d) token rows.
Tensor to_tokens(const Tensor& map);
Tensor to_map(const Tensor& tokens, std::size_t h, std::size_t w);

// Per-position linear d_I -> d_D followed by layer normalization over channels.
struct Neck {
    num::Linear proj;
    num::LayerNorm norm;

    // (d_I, h, w) -> (d_D, h, w).
    Tensor forward(const Tensor& embedding) const;
    // Activations before the normalization, as (h*w, d_D) rows.
    Tensor project(const Tensor& embedding) const;
    void collect(const std::string& prefix, num::ParamList& out) const;
};

struct AttentionLayer {
    num::Linear q;
    num::Linear k;
    num::Linear v;
    num::Linear out;

    Tensor forward(const Tensor& queries, const Tensor& keys, std::size_t heads,
                   Tensor* weights = nullptr) const;
    void collect(const std::string& prefix, num::ParamList& out) const;
};

// One two-way round: prompts read the image, prompts mix among themselves, the
// image reads the prompts back. Each sublayer is residual + layer norm.
struct DecoderBlock {
    AttentionLayer prompt_to_image;
    num::LayerNorm norm1;
    AttentionLayer prompt_self;
    num::LayerNorm norm2;
    AttentionLayer image_to_prompt;
    num::LayerNorm norm3;

    // x (d_D, h, w), prompts (c, d_D) -> (d_D, h, w). `record` receives the
    // head-averaged (c, h*w) attention of the prompts over image positions.
    Tensor forward(const Tensor& x, const Tensor& prompts, std::size_t heads,
                   Tensor* record = nullptr) const;
    void collect(const std::string& prefix, num::ParamList& out) const;
};

// Per-position linear d_D -> num_classes, then repeated 2x bilinear
// upsampling. Both maps are linear and per-channel, so this equals
// upsampling first and projecting after.
struct MaskHead {
    num::Linear proj;
    std::size_t patch_size = 8;

    Tensor forward(const Tensor& output) const;
    void collect(const std::string& prefix, num::ParamList& out) const;
};

// Decoder block for level i (zero-based, 0 = shallowest) applied to x.
using LevelBlock = std::function<Tensor(std::size_t level, const Tensor& x, Tensor* record)>;

// Hierarchical fusion over neck-projected inputs (index 0 = shallowest):
//   out[N-1] = Dec_{N-1}(in[N-1])
//   out[i]   = Dec_i(out[i+1] + in[i] + out[N-1])   (skip)
//   out[i]   = Dec_i(out[i+1] + in[i])              (no skip)
// Returns out indexed like the inputs; `records` (optional) is indexed the same way.
std::vector<Tensor> fuse_chain(std::span<const Tensor> inputs, const LevelBlock& block,
                               bool skip, std::vector<Tensor>* records = nullptr);

struct DecoderState {
    std::vector<Tensor> outputs;           // output_i, index 0 = output_1
    std::vector<Tensor> prompt_attention;  // (c, h*w) per level
    Tensor logits;                         // (num_classes, H, W)
};

class MaskDecoder {
public:
    MaskDecoder() = default;
    MaskDecoder(DecoderConfig config, num::DType dtype, std::uint64_t seed);

    const DecoderConfig& config() const { return config_; }

    // `embeddings` and `prompts` both hold N entries, shallowest first.
    DecoderState forward(std::span<const Tensor> embeddings, std::span<const Tensor> prompts,
                         bool skip) const;

    std::vector<Neck>& necks() { return necks_; }
    std::vector<DecoderBlock>& blocks() { return blocks_; }
    MaskHead& head() { return head_; }
    const std::vector<Neck>& necks() const { return necks_; }
    const std::vector<DecoderBlock>& blocks() const { return blocks_; }
    const MaskHead& head() const { return head_; }

    void collect(const std::string& prefix, num::ParamList& out) const;

private:
    DecoderConfig config_;
    std::vector<Neck> necks_;
    std::vector<DecoderBlock> blocks_;
    MaskHead head_;
};

}  // namespace hsp::decoder
