#include "hsp/decoder/decoder.hpp"

#include <string>

#include "hsp/errors.hpp"
#include "hsp/numerics/random.hpp"

namespace hsp::decoder {

namespace {

bool power_of_two(std::size_t v) { return v != 0 && (v & (v - 1)) == 0; }

AttentionLayer make_attention(std::size_t d, num::DType dtype, num::Rng& rng) {
    AttentionLayer a;
    a.q = num::Linear::fan_in_uniform(d, d, true, dtype, rng);
    // Softmax is invariant to a key bias, so keys carry none.
    a.k = num::Linear::fan_in_uniform(d, d, false, dtype, rng);
    a.v = num::Linear::fan_in_uniform(d, d, true, dtype, rng);
    a.out = num::Linear::fan_in_uniform(d, d, true, dtype, rng);
    return a;
}

}  // namespace

void DecoderConfig::validate() const {
    auto fail = [](const std::string& msg) { throw ConfigError("decoder: " + msg); };
    if (layers == 0) fail("at least one layer is required");
    if (width == 0 || encoder_width == 0) fail("widths must be positive");
    if (heads == 0 || width % heads != 0) {
        fail("width " + std::to_string(width) + " not divisible by heads " + std::to_string(heads));
    }
    if (num_classes < 2) fail("num_classes must include background and one foreground class");
    if (!power_of_two(patch_size)) fail("patch_size must be a power of two");
}

Tensor to_tokens(const Tensor& map) {
    if (map.rank() != 3) {
        throw ShapeError("to_tokens: expected (d,h,w), got " + num::shape_str(map.shape()));
    }
    return num::transpose(num::reshape(map, {map.dim(0), map.dim(1) * map.dim(2)}));
}

Tensor to_map(const Tensor& tokens, std::size_t h, std::size_t w) {
    return num::reshape(num::transpose(tokens), {tokens.dim(1), h, w});
}

Tensor Neck::project(const Tensor& embedding) const {
    if (embedding.rank() != 3 || embedding.dim(0) != proj.in_features()) {
        throw ConfigError("neck: embedding " + num::shape_str(embedding.shape()) +
                          " does not have width " + std::to_string(proj.in_features()));
    }
    return proj.forward(to_tokens(embedding));
}

Tensor Neck::forward(const Tensor& embedding) const {
    return to_map(norm.forward(project(embedding)), embedding.dim(1), embedding.dim(2));
}

void Neck::collect(const std::string& prefix, num::ParamList& out) const {
    proj.collect(prefix + ".proj", out);
    norm.collect(prefix + ".norm", out);
}

Tensor AttentionLayer::forward(const Tensor& queries, const Tensor& keys, std::size_t heads,
                               Tensor* weights) const {
    num::AttentionOptions opts;
    opts.heads = heads;
    return out.forward(num::attention(q.forward(queries), k.forward(keys), v.forward(keys), opts, weights));
}

void AttentionLayer::collect(const std::string& prefix, num::ParamList& o) const {
    q.collect(prefix + ".q", o);
    k.collect(prefix + ".k", o);
    v.collect(prefix + ".v", o);
    out.collect(prefix + ".out", o);
}

Tensor DecoderBlock::forward(const Tensor& x, const Tensor& prompts, std::size_t heads,
                             Tensor* record) const {
    if (prompts.rank() != 2 || x.rank() != 3 || prompts.dim(1) != x.dim(0)) {
        throw ShapeError("decoder block: prompts " + num::shape_str(prompts.shape()) +
                         " incompatible with map " + num::shape_str(x.shape()));
    }
    const Tensor image = to_tokens(x);
    Tensor a = norm1.forward(num::add(prompts, prompt_to_image.forward(prompts, image, heads, record)));
    a = norm2.forward(num::add(a, prompt_self.forward(a, a, heads)));
    const Tensor y = norm3.forward(num::add(image, image_to_prompt.forward(image, a, heads)));
    return to_map(y, x.dim(1), x.dim(2));
}

void DecoderBlock::collect(const std::string& prefix, num::ParamList& out) const {
    prompt_to_image.collect(prefix + ".prompt_to_image", out);
    norm1.collect(prefix + ".norm1", out);
    prompt_self.collect(prefix + ".prompt_self", out);
    norm2.collect(prefix + ".norm2", out);
    image_to_prompt.collect(prefix + ".image_to_prompt", out);
    norm3.collect(prefix + ".norm3", out);
}

Tensor MaskHead::forward(const Tensor& output) const {
    Tensor logits = to_map(proj.forward(to_tokens(output)), output.dim(1), output.dim(2));
    for (std::size_t f = 1; f < patch_size; f *= 2) logits = num::upsample_bilinear2x(logits);
    return logits;
}

void MaskHead::collect(const std::string& prefix, num::ParamList& out) const {
    proj.collect(prefix + ".proj", out);
}

std::vector<Tensor> fuse_chain(std::span<const Tensor> inputs, const LevelBlock& block, bool skip,
                               std::vector<Tensor>* records) {
    const std::size_t n = inputs.size();
    if (n == 0) throw ConfigError("fuse_chain: at least one level is required");
    std::vector<Tensor> out(n);
    if (records) records->assign(n, Tensor{});
    auto rec = [&](std::size_t i) { return records ? &(*records)[i] : nullptr; };
    out[n - 1] = block(n - 1, inputs[n - 1], rec(n - 1));
    for (std::size_t i = n - 1; i-- > 0;) {
        Tensor fused = num::add(out[i + 1], inputs[i]);
        if (skip) fused = num::add(fused, out[n - 1]);
        out[i] = block(i, fused, rec(i));
    }
    return out;
}

MaskDecoder::MaskDecoder(DecoderConfig config, num::DType dtype, std::uint64_t seed)
    : config_(config) {
    config_.validate();
    num::Rng rng(num::mix_seed(seed, "decoder"));
    const std::size_t d = config_.width;
    for (std::size_t j = 0; j < config_.layers; ++j) {
        Neck neck;
        neck.proj = num::Linear::fan_in_uniform(config_.encoder_width, d, true, dtype, rng);
        neck.norm = num::LayerNorm::identity(d, dtype);
        necks_.push_back(std::move(neck));
    }
    for (std::size_t j = 0; j < config_.layers; ++j) {
        DecoderBlock b;
        b.prompt_to_image = make_attention(d, dtype, rng);
        b.norm1 = num::LayerNorm::identity(d, dtype);
        b.prompt_self = make_attention(d, dtype, rng);
        b.norm2 = num::LayerNorm::identity(d, dtype);
        b.image_to_prompt = make_attention(d, dtype, rng);
        b.norm3 = num::LayerNorm::identity(d, dtype);
        blocks_.push_back(std::move(b));
    }
    head_.proj = num::Linear::fan_in_uniform(d, config_.num_classes, true, dtype, rng);
    head_.patch_size = config_.patch_size;

    num::ParamList params;
    collect("", params);
    for (auto& p : params) p.tensor.set_requires_grad(true);
}

DecoderState MaskDecoder::forward(std::span<const Tensor> embeddings,
                                  std::span<const Tensor> prompts, bool skip) const {
    if (embeddings.size() != config_.layers || prompts.size() != config_.layers) {
        throw ConfigError("decoder: expected " + std::to_string(config_.layers) +
                          " embeddings and prompt sets, got " + std::to_string(embeddings.size()) +
                          " and " + std::to_string(prompts.size()));
    }
    std::vector<Tensor> necked;
    for (std::size_t j = 0; j < config_.layers; ++j) necked.push_back(necks_[j].forward(embeddings[j]));
    DecoderState state;
    state.outputs = fuse_chain(
        necked,
        [&](std::size_t level, const Tensor& x, Tensor* record) {
            return blocks_[level].forward(x, prompts[level], config_.heads, record);
        },
        skip, &state.prompt_attention);
    state.logits = head_.forward(state.outputs.front());
    return state;
}

void MaskDecoder::collect(const std::string& prefix, num::ParamList& out) const {
    for (std::size_t j = 0; j < necks_.size(); ++j) {
        necks_[j].collect(prefix + "decoder.neck." + std::to_string(j), out);
    }
    for (std::size_t j = 0; j < blocks_.size(); ++j) {
        blocks_[j].collect(prefix + "decoder.block." + std::to_string(j), out);
    }
    head_.collect(prefix + "decoder.head", out);
}

}  // namespace hsp::decoder
