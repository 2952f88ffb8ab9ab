#pragma once

#include "hsp/numerics/layers.hpp"
#include "hsp/numerics/random.hpp"
#include "hsp/numerics/tensor.hpp"

namespace hsp::encoder {

using num::Tensor;

// Rank used by the full-scale reference configuration.
inline constexpr std::size_t kReferenceLoraRank = 32;

// Frozen projection W (d x k) with a trainable low-rank update B (d x r) A (r x k).
struct LoraAdapter {
    Tensor base;       // frozen
    Tensor base_bias;  // frozen, may be undefined
    Tensor B;
    Tensor A;

    // A ~ N(0, 0.02), B = 0, so the adapted map starts equal to the base.
    // Throws ConfigError unless 0 < rank < min(d, k).
    static LoraAdapter attach(Tensor base, Tensor base_bias, std::size_t rank, num::Rng& rng);

    std::size_t rank() const { return A.dim(0); }
    std::size_t out_features() const { return base.dim(0); }
    std::size_t in_features() const { return base.dim(1); }

    // W + BA.
    Tensor materialized() const;
};

// x W^T + (x A^T) B^T (+ bias); gradients reach only B and A.
Tensor lora_forward(const Tensor& x, const LoraAdapter& adapter);

// x W^T (+ bias), ignoring the adapter.
Tensor base_forward(const Tensor& x, const LoraAdapter& adapter);

}  // namespace hsp::encoder
