#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "hsp/numerics/tensor.hpp"

// Differentiable primitives. Every function records onto the tape when one of
// its inputs requires a gradient, and throws ShapeError on non-conforming
// operands or NumericError when the output is not finite.
namespace hsp::num {

// (m,k) x (k,n) -> (m,n)
Tensor matmul(const Tensor& a, const Tensor& b);

// Elementwise with numpy-style broadcasting of trailing dimensions.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);

// 2-D transpose.
Tensor transpose(const Tensor& a);
Tensor reshape(const Tensor& a, Shape shape);
Tensor concat(std::span<const Tensor> parts, std::size_t axis);
Tensor concat(std::initializer_list<Tensor> parts, std::size_t axis);
// Half-open range [begin, end) along `axis`.
Tensor slice(const Tensor& a, std::size_t axis, std::size_t begin, std::size_t end);

// Max-subtracted softmax along `axis`.
Tensor softmax(const Tensor& a, std::size_t axis);
// Normalizes over the last axis to zero mean and unit (population) variance. No affine.
Tensor layer_norm(const Tensor& a, double eps = 1e-5);

Tensor gelu(const Tensor& a);  // exact erf form
Tensor relu(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor log(const Tensor& a);
Tensor exp(const Tensor& a);

// Full reductions return shape (1).
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
// Reductions over one axis; the axis is removed (a rank-1 input yields shape (1)).
Tensor sum(const Tensor& a, std::size_t axis);
Tensor mean(const Tensor& a, std::size_t axis);

struct AttentionOptions {
    std::size_t heads = 1;
    // When both are non-empty, query i may only attend to key j with
    // query_groups[i] == key_groups[j]. Used for windowed attention.
    std::vector<std::uint32_t> query_groups;
    std::vector<std::uint32_t> key_groups;
};

// Multi-head scaled dot-product attention. q:(n,D) k:(m,D) v:(m,Dv), both D
// and Dv divisible by heads. Returns (n,Dv). When `weights` is given it
// receives the head-averaged attention probabilities (n,m) as a detached tensor.
Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v,
                 const AttentionOptions& options, Tensor* weights = nullptr);

// (C,H,W) -> (C,2H,2W), align_corners = false.
Tensor upsample_bilinear2x(const Tensor& x);

// (C,H,W) -> (H/p * W/p, C*p*p); row-major patch order, each row ordered (c, dy, dx).
Tensor patch_unfold(const Tensor& image, std::size_t patch);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator*(const Tensor& a, double s) { return scale(a, s); }
inline Tensor operator*(double s, const Tensor& a) { return scale(a, s); }

}  // namespace hsp::num
