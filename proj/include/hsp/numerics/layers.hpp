#pragma once

#include <string>
#include <vector>

#include "hsp/numerics/random.hpp"
#include "hsp/numerics/tensor.hpp"

namespace hsp::num {

struct NamedTensor {
    std::string name;
    Tensor tensor;
};

using ParamList = std::vector<NamedTensor>;

std::size_t count_elements(const ParamList& params);

// y = x W^T + b with W stored (out, in).
struct Linear {
    Tensor weight;
    Tensor bias;  // undefined when bias-free

    // Uniform in +-1/sqrt(in).
    static Linear fan_in_uniform(std::size_t in, std::size_t out, bool with_bias, DType dtype,
                                 Rng& rng);
    static Linear normal(std::size_t in, std::size_t out, bool with_bias, DType dtype, Rng& rng,
                         double stddev);

    std::size_t in_features() const { return weight.dim(1); }
    std::size_t out_features() const { return weight.dim(0); }

    Tensor forward(const Tensor& x) const;
    void collect(const std::string& prefix, ParamList& out) const;
};

// Layer normalization over the last axis with elementwise affine.
struct LayerNorm {
    Tensor gamma;
    Tensor beta;
    double eps = 1e-5;

    static LayerNorm identity(std::size_t width, DType dtype);

    Tensor forward(const Tensor& x) const;
    void collect(const std::string& prefix, ParamList& out) const;
};

}  // namespace hsp::num
