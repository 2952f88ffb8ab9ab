#include "hsp/numerics/layers.hpp"

#include <cmath>

#include "hsp/errors.hpp"
#include "hsp/numerics/ops.hpp"

namespace hsp::num {

std::size_t count_elements(const ParamList& params) {
    std::size_t n = 0;
    for (const auto& p : params) n += p.tensor.numel();
    return n;
}

Linear Linear::fan_in_uniform(std::size_t in, std::size_t out, bool with_bias, DType dtype,
                              Rng& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    Linear l;
    l.weight = rand_uniform({out, in}, dtype, rng, -bound, bound);
    if (with_bias) l.bias = rand_uniform({out}, dtype, rng, -bound, bound);
    return l;
}

Linear Linear::normal(std::size_t in, std::size_t out, bool with_bias, DType dtype, Rng& rng,
                      double stddev) {
    Linear l;
    l.weight = randn({out, in}, dtype, rng, stddev);
    if (with_bias) l.bias = Tensor::zeros({out}, dtype);
    return l;
}

Tensor Linear::forward(const Tensor& x) const {
    if (x.rank() != 2 || x.dim(1) != in_features()) {
        throw ShapeError("linear: input " + shape_str(x.shape()) + " does not match weight " +
                         shape_str(weight.shape()));
    }
    Tensor y = matmul(x, transpose(weight));
    return bias.defined() ? add(y, bias) : y;
}

void Linear::collect(const std::string& prefix, ParamList& out) const {
    out.push_back({prefix + ".weight", weight});
    if (bias.defined()) out.push_back({prefix + ".bias", bias});
}

LayerNorm LayerNorm::identity(std::size_t width, DType dtype) {
    return {Tensor::full({width}, 1.0, dtype), Tensor::zeros({width}, dtype), 1e-5};
}

Tensor LayerNorm::forward(const Tensor& x) const {
    return add(mul(layer_norm(x, eps), gamma), beta);
}

void LayerNorm::collect(const std::string& prefix, ParamList& out) const {
    out.push_back({prefix + ".gamma", gamma});
    out.push_back({prefix + ".beta", beta});
}

}  // namespace hsp::num
