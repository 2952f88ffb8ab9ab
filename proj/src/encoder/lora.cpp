#include "hsp/encoder/lora.hpp"

#include <algorithm>
#include <string>

#include "hsp/errors.hpp"
#include "hsp/numerics/ops.hpp"

namespace hsp::encoder {

LoraAdapter LoraAdapter::attach(Tensor base, Tensor base_bias, std::size_t rank, num::Rng& rng) {
    if (base.rank() != 2) throw ConfigError("lora: base weight must be a matrix");
    const std::size_t d = base.dim(0);
    const std::size_t k = base.dim(1);
    if (rank == 0 || rank >= std::min(d, k)) {
        throw ConfigError("lora: rank " + std::to_string(rank) + " must be in [1, " +
                          std::to_string(std::min(d, k)) + ") for a " + std::to_string(d) + "x" +
                          std::to_string(k) + " weight");
    }
    LoraAdapter a;
    a.A = num::randn({rank, k}, base.dtype(), rng, 0.02).set_requires_grad(true);
    a.B = num::Tensor::zeros({d, rank}, base.dtype(), true);
    a.base = std::move(base);
    a.base_bias = std::move(base_bias);
    return a;
}

Tensor LoraAdapter::materialized() const {
    return num::add(base, num::matmul(B, A));
}

Tensor base_forward(const Tensor& x, const LoraAdapter& adapter) {
    if (x.rank() != 2 || x.dim(1) != adapter.in_features()) {
        throw ShapeError("lora: input " + num::shape_str(x.shape()) + " does not match weight " +
                         num::shape_str(adapter.base.shape()));
    }
    Tensor y = num::matmul(x, num::transpose(adapter.base));
    return adapter.base_bias.defined() ? num::add(y, adapter.base_bias) : y;
}

Tensor lora_forward(const Tensor& x, const LoraAdapter& adapter) {
    Tensor y = num::matmul(x, num::transpose(adapter.base));
    Tensor delta = num::matmul(num::matmul(x, num::transpose(adapter.A)), num::transpose(adapter.B));
    y = num::add(y, delta);
    return adapter.base_bias.defined() ? num::add(y, adapter.base_bias) : y;
}

}  // namespace hsp::encoder
