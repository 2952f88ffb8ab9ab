#pragma once

#include <cstdint>
#include <vector>

#include "hsp/numerics/layers.hpp"

namespace hsp::prompt {

using num::Tensor;

struct PromptConfig {
    std::size_t count = 1;            // c
    std::size_t encoder_width = 96;   // d_I
    std::size_t decoder_width = 48;   // d_D
    std::size_t layers = 3;           // N

    // c >= 1, N >= 1, 0 < d_D < d_I.
    void validate() const;
};

// Two linear layers d_D -> d_D -> d_D with GELU in between.
struct PromptMlp {
    num::Linear fc1;
    num::Linear fc2;

    Tensor forward(const Tensor& row) const;
};

// Q&A pairs of one hierarchy level: the encoder-side queries Q_j (c x d_I),
// the bias-free reduction f_j : d_I -> d_D shared by the c prompts of the
// level, and c independent MLPs producing the decoder-side answers.
struct PromptLayer {
    Tensor queries;
    num::Linear reduce;
    std::vector<PromptMlp> mlps;
};

class PromptBank {
public:
    // Q ~ N(0, 0.02); f and MLP weights fan-in uniform. Deterministic in `seed`.
    static PromptBank init(const PromptConfig& config, num::DType dtype, std::uint64_t seed);

    const PromptConfig& config() const { return config_; }
    std::size_t layers() const { return layers_.size(); }
    std::size_t count() const { return config_.count; }

    // A_j: row i is mlp_i(f_j(Q_j row i)). `layer` is zero-based.
    Tensor compute_answers(std::size_t layer) const;

    // Q_1..Q_N for encoder injection.
    std::vector<Tensor> queries() const;

    PromptLayer& layer(std::size_t j) { return layers_.at(j); }
    const PromptLayer& layer(std::size_t j) const { return layers_.at(j); }

    void collect(const std::string& prefix, num::ParamList& out) const;

private:
    PromptConfig config_;
    std::vector<PromptLayer> layers_;
};

}  // namespace hsp::prompt
