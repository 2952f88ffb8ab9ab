#include "hsp/encoder/encoder.hpp"

#include <algorithm>
#include <string>

#include "hsp/errors.hpp"

namespace hsp::encoder {

namespace {

constexpr double kInitStd = 0.02;

std::string block_prefix(std::size_t i) {
    return "encoder.blocks." + std::to_string(i);
}

}  // namespace

void EncoderConfig::validate() const {
    auto fail = [](const std::string& msg) { throw ConfigError("encoder: " + msg); };
    if (image_size == 0 || patch_size == 0) fail("image_size and patch_size must be positive");
    if (image_size % patch_size != 0) {
        fail("image_size " + std::to_string(image_size) + " not divisible by patch_size " +
             std::to_string(patch_size));
    }
    if (in_channels != 1 && in_channels != 3) fail("in_channels must be 1 or 3");
    if (window_size == 0 || grid() % window_size != 0) {
        fail("token grid side " + std::to_string(grid()) + " not divisible by window_size " +
             std::to_string(window_size));
    }
    if (depth == 0) fail("depth must be positive");
    if (global_layers.empty()) fail("at least one global layer is required");
    for (std::size_t i = 0; i < global_layers.size(); ++i) {
        if (global_layers[i] >= depth) fail("global layer index out of range");
        if (i > 0 && global_layers[i] <= global_layers[i - 1]) {
            fail("global_layers must be strictly increasing");
        }
    }
    if (global_layers.back() != depth - 1) fail("the last block must be a global block");
    if (heads == 0 || width % heads != 0) fail("width must be divisible by heads");
    if (lora_rank == 0 || lora_rank >= width) {
        fail("lora_rank must be in [1, width), got " + std::to_string(lora_rank));
    }
    if (mlp_ratio == 0) fail("mlp_ratio must be positive");
}

bool EncoderConfig::is_global(std::size_t block) const {
    return std::find(global_layers.begin(), global_layers.end(), block) != global_layers.end();
}

ImageEncoder::ImageEncoder(EncoderConfig config, num::DType dtype, std::uint64_t backbone_seed,
                           std::uint64_t adapter_seed)
    : config_(std::move(config)), dtype_(dtype) {
    config_.validate();
    num::Rng backbone(num::mix_seed(backbone_seed, "encoder.backbone"));
    num::Rng adapters(num::mix_seed(adapter_seed, "encoder.lora"));
    const std::size_t d = config_.width;
    const std::size_t patch_dim = config_.in_channels * config_.patch_size * config_.patch_size;

    patch_embed_ = num::Linear::fan_in_uniform(patch_dim, d, true, dtype, backbone);
    pos_embed_ = num::randn({config_.num_tokens(), d}, dtype, backbone, kInitStd);

    for (std::size_t i = 0; i < config_.depth; ++i) {
        EncoderBlock b;
        b.global = config_.is_global(i);
        b.norm1 = num::LayerNorm::identity(d, dtype);
        auto wq = num::Linear::normal(d, d, true, dtype, backbone, kInitStd);
        b.key = num::Linear::normal(d, d, true, dtype, backbone, kInitStd);
        auto wv = num::Linear::normal(d, d, true, dtype, backbone, kInitStd);
        b.proj = num::Linear::normal(d, d, true, dtype, backbone, kInitStd);
        b.norm2 = num::LayerNorm::identity(d, dtype);
        b.fc1 = num::Linear::normal(d, d * config_.mlp_ratio, true, dtype, backbone, kInitStd);
        b.fc2 = num::Linear::normal(d * config_.mlp_ratio, d, true, dtype, backbone, kInitStd);
        b.query = LoraAdapter::attach(wq.weight, wq.bias, config_.lora_rank, adapters);
        b.value = LoraAdapter::attach(wv.weight, wv.bias, config_.lora_rank, adapters);
        blocks_.push_back(std::move(b));
    }

    const std::size_t g = config_.grid();
    const std::size_t ws = config_.window_size;
    local_attention_.heads = config_.heads;
    for (std::size_t r = 0; r < g; ++r) {
        for (std::size_t c = 0; c < g; ++c) {
            const auto window = static_cast<std::uint32_t>((r / ws) * (g / ws) + c / ws);
            local_attention_.query_groups.push_back(window);
        }
    }
    local_attention_.key_groups = local_attention_.query_groups;
}

Tensor ImageEncoder::patchify(const Tensor& image) const {
    const num::Shape expected{config_.in_channels, config_.image_size, config_.image_size};
    if (image.shape() != expected) {
        throw ConfigError("encoder: image " + num::shape_str(image.shape()) +
                          " does not match configured " + num::shape_str(expected));
    }
    Tensor tokens = patch_embed_.forward(num::patch_unfold(image, config_.patch_size));
    return num::add(tokens, pos_embed_);
}

Tensor ImageEncoder::run_block(const EncoderBlock& block, const Tensor& tokens,
                               const Tensor& prompts, bool use_lora,
                               Tensor* prompt_attention) const {
    const std::size_t spatial = tokens.dim(0);
    const std::size_t c = prompts.defined() ? prompts.dim(0) : 0;
    Tensor x = c ? num::concat({prompts, tokens}, 0) : tokens;

    Tensor h = block.norm1.forward(x);
    Tensor q = use_lora ? lora_forward(h, block.query) : base_forward(h, block.query);
    Tensor k = block.key.forward(h);
    Tensor v = use_lora ? lora_forward(h, block.value) : base_forward(h, block.value);

    num::AttentionOptions global_opts;
    global_opts.heads = config_.heads;
    const num::AttentionOptions& opts = block.global ? global_opts : local_attention_;
    Tensor weights;
    Tensor attended = num::attention(q, k, v, opts, c ? &weights : nullptr);
    x = num::add(x, block.proj.forward(attended));
    x = num::add(x, block.fc2.forward(num::gelu(block.fc1.forward(block.norm2.forward(x)))));

    if (!c) return x;
    if (prompt_attention) {
        // Prompt rows over spatial keys, renormalized to a distribution.
        std::vector<double> rows(c * spatial);
        const std::size_t total = c + spatial;
        for (std::size_t i = 0; i < c; ++i) {
            double mass = 0;
            for (std::size_t j = 0; j < spatial; ++j) mass += weights.at(i * total + c + j);
            for (std::size_t j = 0; j < spatial; ++j) {
                rows[i * spatial + j] = weights.at(i * total + c + j) / mass;
            }
        }
        *prompt_attention = Tensor::from_values({c, spatial}, rows, dtype_);
    }
    return num::slice(x, 0, c, c + spatial);
}

EncoderOutput ImageEncoder::forward(const Tensor& image, std::span<const Tensor> prompts,
                                    bool use_lora) const {
    if (!prompts.empty() && prompts.size() != config_.num_global()) {
        throw ConfigError("encoder: expected prompts for " + std::to_string(config_.num_global()) +
                          " global layers, got " + std::to_string(prompts.size()));
    }
    for (const Tensor& p : prompts) {
        if (p.defined() && (p.rank() != 2 || p.dim(1) != config_.width)) {
            throw ConfigError("encoder: prompt tokens " + num::shape_str(p.shape()) +
                              " do not have width " + std::to_string(config_.width));
        }
    }
    const std::size_t g = config_.grid();
    EncoderOutput out;
    Tensor x = patchify(image);
    std::size_t tap = 0;
    for (const EncoderBlock& block : blocks_) {
        if (!block.global) {
            x = run_block(block, x, Tensor{}, use_lora, nullptr);
            continue;
        }
        const Tensor prompt = prompts.empty() ? Tensor{} : prompts[tap];
        Tensor record;
        x = run_block(block, x, prompt, use_lora, &record);
        out.embeddings.push_back(num::reshape(num::transpose(x), {config_.width, g, g}));
        out.prompt_attention.push_back(record);
        ++tap;
    }
    return out;
}

num::ParamList ImageEncoder::frozen_parameters() const {
    num::ParamList out;
    patch_embed_.collect("encoder.patch_embed", out);
    out.push_back({"encoder.pos_embed", pos_embed_});
    for (std::size_t i = 0; i < blocks_.size(); ++i) {
        const auto& b = blocks_[i];
        const std::string p = block_prefix(i);
        b.norm1.collect(p + ".norm1", out);
        out.push_back({p + ".attn.query.weight", b.query.base});
        out.push_back({p + ".attn.query.bias", b.query.base_bias});
        b.key.collect(p + ".attn.key", out);
        out.push_back({p + ".attn.value.weight", b.value.base});
        out.push_back({p + ".attn.value.bias", b.value.base_bias});
        b.proj.collect(p + ".attn.proj", out);
        b.norm2.collect(p + ".norm2", out);
        b.fc1.collect(p + ".mlp.fc1", out);
        b.fc2.collect(p + ".mlp.fc2", out);
    }
    return out;
}

num::ParamList ImageEncoder::trainable_parameters() const {
    num::ParamList out;
    for (std::size_t i = 0; i < blocks_.size(); ++i) {
        const auto& b = blocks_[i];
        const std::string p = block_prefix(i);
        out.push_back({p + ".attn.query.lora_B", b.query.B});
        out.push_back({p + ".attn.query.lora_A", b.query.A});
        out.push_back({p + ".attn.value.lora_B", b.value.B});
        out.push_back({p + ".attn.value.lora_A", b.value.A});
    }
    return out;
}

}  // namespace hsp::encoder
