#include "hsp/numerics/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <string>

#include "hsp/errors.hpp"
#include "hsp/numerics/interp.hpp"

namespace hsp::num {

namespace {

using detail::Node;

template <class T>
const std::vector<T>& vals(const Tensor& t) {
    return t.node()->values<T>();
}

void require_same_dtype(const char* op, const Tensor& a, const Tensor& b) {
    if (a.dtype() != b.dtype()) {
        throw ShapeError(std::string(op) + ": dtype mismatch " + dtype_name(a.dtype()) + " vs " +
                         dtype_name(b.dtype()));
    }
}

void require_rank(const char* op, const Tensor& a, std::size_t rank) {
    if (a.rank() != rank) {
        throw ShapeError(std::string(op) + ": expected rank " + std::to_string(rank) +
                         ", got shape " + shape_str(a.shape()));
    }
}

void require_axis(const char* op, const Tensor& a, std::size_t axis) {
    if (axis >= a.rank()) {
        throw ShapeError(std::string(op) + ": axis " + std::to_string(axis) +
                         " out of range for shape " + shape_str(a.shape()));
    }
}

// Splits a shape around `axis` into (outer, len, inner) extents.
struct AxisSplit {
    std::size_t outer = 1;
    std::size_t len = 1;
    std::size_t inner = 1;
};

AxisSplit split_at(const Shape& shape, std::size_t axis) {
    AxisSplit s;
    for (std::size_t i = 0; i < axis; ++i) s.outer *= shape[i];
    s.len = shape[axis];
    for (std::size_t i = axis + 1; i < shape.size(); ++i) s.inner *= shape[i];
    return s;
}

// ---- dense kernels -------------------------------------------------------

// c(m,n) += a(m,k) b(k,n)
template <class T>
void gemm_acc(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
        T* ci = c + i * n;
        const T* ai = a + i * k;
        for (std::size_t p = 0; p < k; ++p) {
            const T av = ai[p];
            const T* bp = b + p * n;
            for (std::size_t j = 0; j < n; ++j) {
                ci[j] += av * bp[j];
            }
        }
    }
}

// c(k,n) += a(m,k)^T b(m,n)
template <class T>
void gemm_tn_acc(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
        const T* ai = a + i * k;
        const T* bi = b + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            const T av = ai[p];
            T* cp = c + p * n;
            for (std::size_t j = 0; j < n; ++j) {
                cp[j] += av * bi[j];
            }
        }
    }
}

template <class T>
std::vector<T> transposed(const T* a, std::size_t rows, std::size_t cols) {
    std::vector<T> out(rows * cols);
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < cols; ++c) {
            out[c * rows + r] = a[r * cols + c];
        }
    }
    return out;
}

// ---- broadcasting --------------------------------------------------------

struct BroadcastPlan {
    Shape out;
    bool same = false;
    std::vector<std::size_t> ia;
    std::vector<std::size_t> ib;
};

std::shared_ptr<BroadcastPlan> plan_broadcast(const char* op, const Shape& a, const Shape& b) {
    auto plan = std::make_shared<BroadcastPlan>();
    if (a == b) {
        plan->out = a;
        plan->same = true;
        return plan;
    }
    const std::size_t rank = std::max(a.size(), b.size());
    Shape pa(rank - a.size(), 1);
    pa.insert(pa.end(), a.begin(), a.end());
    Shape pb(rank - b.size(), 1);
    pb.insert(pb.end(), b.begin(), b.end());
    Shape out(rank);
    for (std::size_t d = 0; d < rank; ++d) {
        if (pa[d] == pb[d] || pb[d] == 1) {
            out[d] = pa[d];
        } else if (pa[d] == 1) {
            out[d] = pb[d];
        } else {
            throw ShapeError(std::string(op) + ": cannot broadcast " + shape_str(a) + " with " +
                             shape_str(b));
        }
    }
    std::vector<std::size_t> sa(rank, 0);
    std::vector<std::size_t> sb(rank, 0);
    std::size_t acc_a = 1;
    std::size_t acc_b = 1;
    for (std::size_t d = rank; d-- > 0;) {
        sa[d] = pa[d] == 1 ? 0 : acc_a;
        sb[d] = pb[d] == 1 ? 0 : acc_b;
        acc_a *= pa[d];
        acc_b *= pb[d];
    }
    const std::size_t n = shape_numel(out);
    plan->ia.resize(n);
    plan->ib.resize(n);
    std::vector<std::size_t> idx(rank, 0);
    std::size_t oa = 0;
    std::size_t ob = 0;
    for (std::size_t i = 0; i < n; ++i) {
        plan->ia[i] = oa;
        plan->ib[i] = ob;
        for (std::size_t d = rank; d-- > 0;) {
            ++idx[d];
            oa += sa[d];
            ob += sb[d];
            if (idx[d] < out[d]) break;
            oa -= sa[d] * out[d];
            ob -= sb[d] * out[d];
            idx[d] = 0;
        }
    }
    plan->out = std::move(out);
    return plan;
}

enum class BinaryKind { add, sub, mul };

template <BinaryKind K>
Tensor binary(const char* op, const Tensor& a, const Tensor& b) {
    require_same_dtype(op, a, b);
    auto plan = plan_broadcast(op, a.shape(), b.shape());
    return dispatch(a.dtype(), [&](auto tag) {
        using T = decltype(tag);
        const auto& x = vals<T>(a);
        const auto& y = vals<T>(b);
        const std::size_t n = shape_numel(plan->out);
        std::vector<T> out(n);
        auto apply = [](T u, T v) {
            if constexpr (K == BinaryKind::add) return u + v;
            else if constexpr (K == BinaryKind::sub) return u - v;
            else return u * v;
        };
        if (plan->same) {
            for (std::size_t i = 0; i < n; ++i) out[i] = apply(x[i], y[i]);
        } else {
            for (std::size_t i = 0; i < n; ++i) out[i] = apply(x[plan->ia[i]], y[plan->ib[i]]);
        }
        return make_result(op, plan->out, a.dtype(), std::move(out), {a, b}, [plan](Node& self) {
            Node& na = *self.inputs[0];
            Node& nb = *self.inputs[1];
            const auto& g = self.grads<T>();
            const std::size_t count = g.size();
            auto ia = [&](std::size_t i) { return plan->same ? i : plan->ia[i]; };
            auto ib = [&](std::size_t i) { return plan->same ? i : plan->ib[i]; };
            if (na.requires_grad) {
                auto& ga = na.grads<T>();
                if constexpr (K == BinaryKind::mul) {
                    const auto& yv = nb.values<T>();
                    for (std::size_t i = 0; i < count; ++i) ga[ia(i)] += g[i] * yv[ib(i)];
                } else {
                    for (std::size_t i = 0; i < count; ++i) ga[ia(i)] += g[i];
                }
            }
            if (nb.requires_grad) {
                auto& gb = nb.grads<T>();
                if constexpr (K == BinaryKind::mul) {
                    const auto& xv = na.values<T>();
                    for (std::size_t i = 0; i < count; ++i) gb[ib(i)] += g[i] * xv[ia(i)];
                } else if constexpr (K == BinaryKind::sub) {
                    for (std::size_t i = 0; i < count; ++i) gb[ib(i)] -= g[i];
                } else {
                    for (std::size_t i = 0; i < count; ++i) gb[ib(i)] += g[i];
                }
            }
        });
    });
}

// Elementwise unary map: `deriv(x, y)` is dy/dx.
template <class Fwd, class Deriv>
Tensor unary(const char* op, const Tensor& a, Fwd fwd, Deriv deriv) {
    return dispatch(a.dtype(), [&](auto tag) {
        using T = decltype(tag);
        const auto& x = vals<T>(a);
        std::vector<T> out(x.size());
        for (std::size_t i = 0; i < x.size(); ++i) out[i] = static_cast<T>(fwd(x[i]));
        return make_result(op, a.shape(), a.dtype(), std::move(out), {a}, [deriv](Node& self) {
            Node& in = *self.inputs[0];
            const auto& xv = in.values<T>();
            const auto& yv = self.values<T>();
            const auto& g = self.grads<T>();
            auto& gi = in.grads<T>();
            for (std::size_t i = 0; i < g.size(); ++i) {
                gi[i] += g[i] * static_cast<T>(deriv(xv[i], yv[i]));
            }
        });
    });
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
    require_same_dtype("matmul", a, b);
    if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
        throw ShapeError("matmul: shape mismatch " + shape_str(a.shape()) + " x " +
                         shape_str(b.shape()));
    }
    const std::size_t m = a.dim(0);
    const std::size_t k = a.dim(1);
    const std::size_t n = b.dim(1);
    return dispatch(a.dtype(), [&](auto tag) {
        using T = decltype(tag);
        std::vector<T> out(m * n, T{0});
        gemm_acc(vals<T>(a).data(), vals<T>(b).data(), out.data(), m, k, n);
        return make_result("matmul", {m, n}, a.dtype(), std::move(out), {a, b},
                           [m, k, n](Node& self) {
                               Node& na = *self.inputs[0];
                               Node& nb = *self.inputs[1];
                               const auto& g = self.grads<T>();
                               if (na.requires_grad) {
                                   auto bt = transposed(nb.values<T>().data(), k, n);
                                   gemm_acc(g.data(), bt.data(), na.grads<T>().data(), m, n, k);
                               }
                               if (nb.requires_grad) {
                                   gemm_tn_acc(na.values<T>().data(), g.data(),
                                               nb.grads<T>().data(), m, k, n);
                               }
                           });
    });
}

Tensor add(const Tensor& a, const Tensor& b) {
    return binary<BinaryKind::add>("add", a, b);
}

Tensor sub(const Tensor& a, const Tensor& b) {
    return binary<BinaryKind::sub>("sub", a, b);
}

Tensor mul(const Tensor& a, const Tensor& b) {
    return binary<BinaryKind::mul>("mul", a, b);
}

Tensor scale(const Tensor& a, double factor) {
    return dispatch(a.dtype(), [&](auto tag) {
        using T = decltype(tag);
        const T f = static_cast<T>(factor);
        const auto& x = vals<T>(a);
        std::vector<T> out(x.size());
        for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] * f;
        return make_result("scale", a.shape(), a.dtype(), std::move(out), {a}, [f](Node& self) {
            Node& in = *self.inputs[0];
            const auto& g = self.grads<T>();
            auto& gi = in.grads<T>();
            for (std::size_t i = 0; i < g.size(); ++i) gi[i] += g[i] * f;
        });
    });
}

Tensor transpose(const Tensor& a) {
    require_rank("transpose", a, 2);
    const std::size_t rows = a.dim(0);
    const std::size_t cols = a.dim(1);
    return dispatch(a.dtype(), [&](auto tag) {
        using T = decltype(tag);
        auto out = transposed(vals<T>(a).data(), rows, cols);
        return make_result("transpose", {cols, rows}, a.dtype(), std::move(out), {a},
                           [rows, cols](Node& self) {
                               Node& in = *self.inputs[0];
                               const auto& g = self.grads<T>();
                               auto& gi = in.grads<T>();
                               for (std::size_t c = 0; c < cols; ++c) {
                                   for (std::size_t r = 0; r < rows; ++r) {
                                       gi[r * cols + c] += g[c * rows + r];
                                   }
                               }
                           });
    });
}

Tensor reshape(const Tensor& a, Shape shape) {
    if (shape_numel(shape) != a.numel()) {
        throw ShapeError("reshape: cannot view " + shape_str(a.shape()) + " as " + shape_str(shape));
    }
    for (std::size_t d : shape) {
        if (d == 0) throw ShapeError("reshape: zero extent in " + shape_str(shape));
    }
    return dispatch(a.dtype(), [&](auto tag) {
        using T = decltype(tag);
        std::vector<T> out = vals<T>(a);
        return make_result("reshape", std::move(shape), a.dtype(), std::move(out), {a},
                           [](Node& self) {
                               Node& in = *self.inputs[0];
                               const auto& g = self.grads<T>();
                               auto& gi = in.grads<T>();
                               for (std::size_t i = 0; i < g.size(); ++i) gi[i] += g[i];
                           });
    });
}

Tensor concat(std::span<const Tensor> parts, std::size_t axis) {
    if (parts.empty()) throw ShapeError("concat: no inputs");
    const Tensor& first = parts.front();
    require_axis("concat", first, axis);
    Shape out_shape = first.shape();
    out_shape[axis] = 0;
    std::vector<std::size_t> lens;
    for (const Tensor& p : parts) {
        require_same_dtype("concat", first, p);
        bool ok = p.rank() == first.rank();
        for (std::size_t d = 0; ok && d < p.rank(); ++d) {
            ok = d == axis || p.dim(d) == first.dim(d);
        }
        if (!ok) {
            throw ShapeError("concat: shape mismatch " + shape_str(first.shape()) + " vs " +
                             shape_str(p.shape()) + " along axis " + std::to_string(axis));
        }
        lens.push_back(p.dim(axis));
        out_shape[axis] += p.dim(axis);
    }
    const AxisSplit split = split_at(out_shape, axis);
    std::vector<Tensor> inputs(parts.begin(), parts.end());
    return dispatch(first.dtype(), [&](auto tag) {
        using T = decltype(tag);
        std::vector<T> out(shape_numel(out_shape));
        std::size_t offset = 0;
        for (std::size_t p = 0; p < parts.size(); ++p) {
            const auto& src = vals<T>(parts[p]);
            const std::size_t chunk = lens[p] * split.inner;
            for (std::size_t o = 0; o < split.outer; ++o) {
                std::copy_n(src.begin() + o * chunk, chunk,
                            out.begin() + o * split.len * split.inner + offset);
            }
            offset += chunk;
        }
        return make_result("concat", out_shape, first.dtype(), std::move(out), std::move(inputs),
                           [lens, split](Node& self) {
                               const auto& g = self.grads<T>();
                               std::size_t off = 0;
                               for (std::size_t p = 0; p < lens.size(); ++p) {
                                   Node& in = *self.inputs[p];
                                   const std::size_t chunk = lens[p] * split.inner;
                                   if (in.requires_grad) {
                                       auto& gi = in.grads<T>();
                                       for (std::size_t o = 0; o < split.outer; ++o) {
                                           const T* src = g.data() + o * split.len * split.inner + off;
                                           T* dst = gi.data() + o * chunk;
                                           for (std::size_t i = 0; i < chunk; ++i) dst[i] += src[i];
                                       }
                                   }
                                   off += chunk;
                               }
                           });
    });
}

Tensor concat(std::initializer_list<Tensor> parts, std::size_t axis) {
    return concat(std::span<const Tensor>(parts.begin(), parts.size()), axis);
}

Tensor slice(const Tensor& a, std::size_t axis, std::size_t begin, std::size_t end) {
    require_axis("slice", a, axis);
    if (begin >= end || end > a.dim(axis)) {
        throw ShapeError("slice: range [" + std::to_string(begin) + "," + std::to_string(end) +
                         ") invalid for axis " + std::to_string(axis) + " of " +
                         shape_str(a.shape()));
    }
    const AxisSplit split = split_at(a.shape(), axis);
    Shape out_shape = a.shape();
    out_shape[axis] = end - begin;
    const std::size_t chunk = (end - begin) * split.inner;
    const std::size_t skip = begin * split.inner;
    return dispatch(a.dtype(), [&](auto tag) {
        using T = decltype(tag);
        const auto& src = vals<T>(a);
        std::vector<T> out(shape_numel(out_shape));
        for (std::size_t o = 0; o < split.outer; ++o) {
            std::copy_n(src.begin() + o * split.len * split.inner + skip, chunk,
                        out.begin() + o * chunk);
        }
        return make_result("slice", out_shape, a.dtype(), std::move(out), {a},
                           [split, chunk, skip](Node& self) {
                               Node& in = *self.inputs[0];
                               const auto& g = self.grads<T>();
                               auto& gi = in.grads<T>();
                               for (std::size_t o = 0; o < split.outer; ++o) {
                                   T* dst = gi.data() + o * split.len * split.inner + skip;
                                   const T* src = g.data() + o * chunk;
                                   for (std::size_t i = 0; i < chunk; ++i) dst[i] += src[i];
                               }
                           });
    });
}

Tensor softmax(const Tensor& a, std::size_t axis) {
    require_axis("softmax", a, axis);
    const AxisSplit s = split_at(a.shape(), axis);
    return dispatch(a.dtype(), [&](auto tag) {
        using T = decltype(tag);
        const auto& x = vals<T>(a);
        std::vector<T> out(x.size());
        for (std::size_t o = 0; o < s.outer; ++o) {
            for (std::size_t in = 0; in < s.inner; ++in) {
                const std::size_t base = o * s.len * s.inner + in;
                T mx = x[base];
                for (std::size_t l = 1; l < s.len; ++l) mx = std::max(mx, x[base + l * s.inner]);
                T total = 0;
                for (std::size_t l = 0; l < s.len; ++l) {
                    const T e = std::exp(x[base + l * s.inner] - mx);
                    out[base + l * s.inner] = e;
                    total += e;
                }
                for (std::size_t l = 0; l < s.len; ++l) out[base + l * s.inner] /= total;
            }
        }
        return make_result("softmax", a.shape(), a.dtype(), std::move(out), {a}, [s](Node& self) {
            Node& in = *self.inputs[0];
            const auto& y = self.values<T>();
            const auto& g = self.grads<T>();
            auto& gi = in.grads<T>();
            for (std::size_t o = 0; o < s.outer; ++o) {
                for (std::size_t inner = 0; inner < s.inner; ++inner) {
                    const std::size_t base = o * s.len * s.inner + inner;
                    T dot = 0;
                    for (std::size_t l = 0; l < s.len; ++l) {
                        dot += g[base + l * s.inner] * y[base + l * s.inner];
                    }
                    for (std::size_t l = 0; l < s.len; ++l) {
                        const std::size_t i = base + l * s.inner;
                        gi[i] += y[i] * (g[i] - dot);
                    }
                }
            }
        });
    });
}

Tensor layer_norm(const Tensor& a, double eps) {
    if (a.rank() == 0) throw ShapeError("layer_norm: rank-0 input");
    const std::size_t d = a.shape().back();
    const std::size_t rows = a.numel() / d;
    return dispatch(a.dtype(), [&](auto tag) {
        using T = decltype(tag);
        const auto& x = vals<T>(a);
        std::vector<T> out(x.size());
        auto rstd = std::make_shared<std::vector<T>>(rows);
        for (std::size_t r = 0; r < rows; ++r) {
            const T* xr = x.data() + r * d;
            T mu = 0;
            for (std::size_t i = 0; i < d; ++i) mu += xr[i];
            mu /= static_cast<T>(d);
            T var = 0;
            for (std::size_t i = 0; i < d; ++i) var += (xr[i] - mu) * (xr[i] - mu);
            var /= static_cast<T>(d);
            const T rs = T{1} / std::sqrt(var + static_cast<T>(eps));
            (*rstd)[r] = rs;
            for (std::size_t i = 0; i < d; ++i) out[r * d + i] = (xr[i] - mu) * rs;
        }
        return make_result("layer_norm", a.shape(), a.dtype(), std::move(out), {a},
                           [rstd, d, rows](Node& self) {
                               Node& in = *self.inputs[0];
                               const auto& y = self.values<T>();
                               const auto& g = self.grads<T>();
                               auto& gi = in.grads<T>();
                               for (std::size_t r = 0; r < rows; ++r) {
                                   const T* yr = y.data() + r * d;
                                   const T* gr = g.data() + r * d;
                                   T mg = 0;
                                   T mgy = 0;
                                   for (std::size_t i = 0; i < d; ++i) {
                                       mg += gr[i];
                                       mgy += gr[i] * yr[i];
                                   }
                                   mg /= static_cast<T>(d);
                                   mgy /= static_cast<T>(d);
                                   const T rs = (*rstd)[r];
                                   for (std::size_t i = 0; i < d; ++i) {
                                       gi[r * d + i] += rs * (gr[i] - mg - yr[i] * mgy);
                                   }
                               }
                           });
    });
}

Tensor gelu(const Tensor& a) {
    constexpr double inv_sqrt2 = 0.70710678118654752440;
    constexpr double inv_sqrt2pi = 0.39894228040143267794;
    return unary(
        "gelu", a, [](double x) { return 0.5 * x * (1.0 + std::erf(x * inv_sqrt2)); },
        [](double x, double) {
            return 0.5 * (1.0 + std::erf(x * inv_sqrt2)) + x * inv_sqrt2pi * std::exp(-0.5 * x * x);
        });
}

Tensor relu(const Tensor& a) {
    return unary(
        "relu", a, [](double x) { return x > 0 ? x : 0.0; },
        [](double x, double) { return x > 0 ? 1.0 : 0.0; });
}

Tensor sigmoid(const Tensor& a) {
    return unary(
        "sigmoid", a, [](double x) { return 1.0 / (1.0 + std::exp(-x)); },
        [](double, double y) { return y * (1.0 - y); });
}

Tensor log(const Tensor& a) {
    return unary(
        "log", a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Tensor exp(const Tensor& a) {
    return unary(
        "exp", a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Tensor sum(const Tensor& a) {
    return dispatch(a.dtype(), [&](auto tag) {
        using T = decltype(tag);
        double total = 0;
        for (T v : vals<T>(a)) total += v;
        std::vector<T> out{static_cast<T>(total)};
        return make_result("sum", {1}, a.dtype(), std::move(out), {a}, [](Node& self) {
            Node& in = *self.inputs[0];
            const T g = self.grads<T>()[0];
            for (T& v : in.grads<T>()) v += g;
        });
    });
}

Tensor mean(const Tensor& a) {
    return scale(sum(a), 1.0 / static_cast<double>(a.numel()));
}

Tensor sum(const Tensor& a, std::size_t axis) {
    require_axis("sum", a, axis);
    const AxisSplit s = split_at(a.shape(), axis);
    Shape out_shape = a.shape();
    out_shape.erase(out_shape.begin() + static_cast<std::ptrdiff_t>(axis));
    if (out_shape.empty()) out_shape = {1};
    return dispatch(a.dtype(), [&](auto tag) {
        using T = decltype(tag);
        const auto& x = vals<T>(a);
        std::vector<T> out(s.outer * s.inner);
        for (std::size_t o = 0; o < s.outer; ++o) {
            for (std::size_t in = 0; in < s.inner; ++in) {
                double total = 0;
                for (std::size_t l = 0; l < s.len; ++l) total += x[(o * s.len + l) * s.inner + in];
                out[o * s.inner + in] = static_cast<T>(total);
            }
        }
        return make_result("sum_axis", out_shape, a.dtype(), std::move(out), {a}, [s](Node& self) {
            Node& in = *self.inputs[0];
            const auto& g = self.grads<T>();
            auto& gi = in.grads<T>();
            for (std::size_t o = 0; o < s.outer; ++o) {
                for (std::size_t l = 0; l < s.len; ++l) {
                    for (std::size_t inner = 0; inner < s.inner; ++inner) {
                        gi[(o * s.len + l) * s.inner + inner] += g[o * s.inner + inner];
                    }
                }
            }
        });
    });
}

Tensor mean(const Tensor& a, std::size_t axis) {
    require_axis("mean", a, axis);
    return scale(sum(a, axis), 1.0 / static_cast<double>(a.dim(axis)));
}

Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v,
                 const AttentionOptions& options, Tensor* weights) {
    require_same_dtype("attention", q, k);
    require_same_dtype("attention", q, v);
    const std::size_t heads = options.heads;
    if (q.rank() != 2 || k.rank() != 2 || v.rank() != 2 || q.dim(1) != k.dim(1) ||
        k.dim(0) != v.dim(0) || heads == 0 || q.dim(1) % heads != 0 || v.dim(1) % heads != 0) {
        throw ShapeError("attention: incompatible q" + shape_str(q.shape()) + " k" +
                         shape_str(k.shape()) + " v" + shape_str(v.shape()) + " with " +
                         std::to_string(heads) + " heads");
    }
    const bool masked = !options.query_groups.empty() || !options.key_groups.empty();
    if (masked && (options.query_groups.size() != q.dim(0) || options.key_groups.size() != k.dim(0))) {
        throw ShapeError("attention: group labels do not match query/key counts");
    }
    const std::size_t n = q.dim(0);
    const std::size_t m = k.dim(0);
    const std::size_t dq = q.dim(1);
    const std::size_t dv = v.dim(1);
    const std::size_t hq = dq / heads;
    const std::size_t hv = dv / heads;
    const double scale_factor = 1.0 / std::sqrt(static_cast<double>(hq));
    auto groups = std::make_shared<std::pair<std::vector<std::uint32_t>, std::vector<std::uint32_t>>>(
        options.query_groups, options.key_groups);

    return dispatch(q.dtype(), [&](auto tag) {
        using T = decltype(tag);
        const T sf = static_cast<T>(scale_factor);
        auto take_cols = [](const std::vector<T>& src, std::size_t rows, std::size_t width,
                            std::size_t begin, std::size_t count) {
            std::vector<T> out(rows * count);
            for (std::size_t r = 0; r < rows; ++r) {
                std::copy_n(src.begin() + r * width + begin, count, out.begin() + r * count);
            }
            return out;
        };
        auto allowed = [groups, masked](std::size_t i, std::size_t j) {
            return !masked || groups->first[i] == groups->second[j];
        };
        const auto& qv = vals<T>(q);
        const auto& kv = vals<T>(k);
        const auto& vv = vals<T>(v);
        auto probs = std::make_shared<std::vector<T>>(heads * n * m, T{0});
        std::vector<T> out(n * dv, T{0});
        for (std::size_t h = 0; h < heads; ++h) {
            auto qh = take_cols(qv, n, dq, h * hq, hq);
            auto kh = take_cols(kv, m, dq, h * hq, hq);
            auto vh = take_cols(vv, m, dv, h * hv, hv);
            auto kt = transposed(kh.data(), m, hq);
            T* p = probs->data() + h * n * m;
            gemm_acc(qh.data(), kt.data(), p, n, hq, m);
            for (std::size_t i = 0; i < n; ++i) {
                T* row = p + i * m;
                T mx = -std::numeric_limits<T>::infinity();
                for (std::size_t j = 0; j < m; ++j) {
                    if (allowed(i, j)) mx = std::max(mx, row[j] * sf);
                }
                if (!std::isfinite(mx)) {
                    throw ShapeError("attention: query " + std::to_string(i) + " has no admissible key");
                }
                T total = 0;
                for (std::size_t j = 0; j < m; ++j) {
                    const T e = allowed(i, j) ? std::exp(row[j] * sf - mx) : T{0};
                    row[j] = e;
                    total += e;
                }
                for (std::size_t j = 0; j < m; ++j) row[j] /= total;
            }
            std::vector<T> oh(n * hv, T{0});
            gemm_acc(p, vh.data(), oh.data(), n, m, hv);
            for (std::size_t i = 0; i < n; ++i) {
                std::copy_n(oh.begin() + i * hv, hv, out.begin() + i * dv + h * hv);
            }
        }
        if (weights) {
            std::vector<double> avg(n * m, 0.0);
            for (std::size_t h = 0; h < heads; ++h) {
                for (std::size_t i = 0; i < n * m; ++i) avg[i] += (*probs)[h * n * m + i];
            }
            for (double& x : avg) x /= static_cast<double>(heads);
            *weights = Tensor::from_values({n, m}, avg, q.dtype());
        }
        return make_result(
            "attention", {n, dv}, q.dtype(), std::move(out), {q, k, v},
            [=](Node& self) {
                Node& nq = *self.inputs[0];
                Node& nk = *self.inputs[1];
                Node& nv = *self.inputs[2];
                const auto& g = self.grads<T>();
                const auto& qv2 = nq.values<T>();
                const auto& kv2 = nk.values<T>();
                const auto& vv2 = nv.values<T>();
                for (std::size_t h = 0; h < heads; ++h) {
                    const T* p = probs->data() + h * n * m;
                    auto goh = take_cols(g, n, dv, h * hv, hv);
                    if (nv.requires_grad) {
                        std::vector<T> gvh(m * hv, T{0});
                        gemm_tn_acc(p, goh.data(), gvh.data(), n, m, hv);
                        auto& gv = nv.grads<T>();
                        for (std::size_t j = 0; j < m; ++j) {
                            for (std::size_t c = 0; c < hv; ++c) gv[j * dv + h * hv + c] += gvh[j * hv + c];
                        }
                    }
                    if (!nq.requires_grad && !nk.requires_grad) continue;
                    auto vh = take_cols(vv2, m, dv, h * hv, hv);
                    auto vt = transposed(vh.data(), m, hv);
                    std::vector<T> dp(n * m, T{0});
                    gemm_acc(goh.data(), vt.data(), dp.data(), n, hv, m);
                    for (std::size_t i = 0; i < n; ++i) {
                        T dot = 0;
                        for (std::size_t j = 0; j < m; ++j) dot += dp[i * m + j] * p[i * m + j];
                        for (std::size_t j = 0; j < m; ++j) {
                            dp[i * m + j] = p[i * m + j] * (dp[i * m + j] - dot) * sf;
                        }
                    }
                    if (nq.requires_grad) {
                        auto kh = take_cols(kv2, m, dq, h * hq, hq);
                        std::vector<T> gqh(n * hq, T{0});
                        gemm_acc(dp.data(), kh.data(), gqh.data(), n, m, hq);
                        auto& gq = nq.grads<T>();
                        for (std::size_t i = 0; i < n; ++i) {
                            for (std::size_t c = 0; c < hq; ++c) gq[i * dq + h * hq + c] += gqh[i * hq + c];
                        }
                    }
                    if (nk.requires_grad) {
                        auto qh = take_cols(qv2, n, dq, h * hq, hq);
                        std::vector<T> gkh(m * hq, T{0});
                        gemm_tn_acc(dp.data(), qh.data(), gkh.data(), n, m, hq);
                        auto& gk = nk.grads<T>();
                        for (std::size_t j = 0; j < m; ++j) {
                            for (std::size_t c = 0; c < hq; ++c) gk[j * dq + h * hq + c] += gkh[j * hq + c];
                        }
                    }
                }
            });
    });
}

Tensor upsample_bilinear2x(const Tensor& x) {
    require_rank("upsample_bilinear2x", x, 3);
    const std::size_t c = x.dim(0);
    const std::size_t h = x.dim(1);
    const std::size_t w = x.dim(2);
    const std::size_t oh = 2 * h;
    const std::size_t ow = 2 * w;
    auto ys = std::make_shared<std::vector<AxisSample>>(bilinear_axis(h, oh));
    auto xs = std::make_shared<std::vector<AxisSample>>(bilinear_axis(w, ow));
    return dispatch(x.dtype(), [&](auto tag) {
        using T = decltype(tag);
        const auto& src = vals<T>(x);
        std::vector<T> out(c * oh * ow);
        for (std::size_t ch = 0; ch < c; ++ch) {
            const T* plane = src.data() + ch * h * w;
            T* dst = out.data() + ch * oh * ow;
            for (std::size_t oy = 0; oy < oh; ++oy) {
                const AxisSample& ty = (*ys)[oy];
                const T wy = static_cast<T>(ty.w);
                for (std::size_t ox = 0; ox < ow; ++ox) {
                    const AxisSample& tx = (*xs)[ox];
                    const T wx = static_cast<T>(tx.w);
                    const T top = (1 - wx) * plane[ty.lo * w + tx.lo] + wx * plane[ty.lo * w + tx.hi];
                    const T bot = (1 - wx) * plane[ty.hi * w + tx.lo] + wx * plane[ty.hi * w + tx.hi];
                    dst[oy * ow + ox] = (1 - wy) * top + wy * bot;
                }
            }
        }
        return make_result("upsample_bilinear2x", {c, oh, ow}, x.dtype(), std::move(out), {x},
                           [=](Node& self) {
                               Node& in = *self.inputs[0];
                               const auto& g = self.grads<T>();
                               auto& gi = in.grads<T>();
                               for (std::size_t ch = 0; ch < c; ++ch) {
                                   T* plane = gi.data() + ch * h * w;
                                   const T* gp = g.data() + ch * oh * ow;
                                   for (std::size_t oy = 0; oy < oh; ++oy) {
                                       const AxisSample& ty = (*ys)[oy];
                                       const T wy = static_cast<T>(ty.w);
                                       for (std::size_t ox = 0; ox < ow; ++ox) {
                                           const AxisSample& tx = (*xs)[ox];
                                           const T wx = static_cast<T>(tx.w);
                                           const T gv = gp[oy * ow + ox];
                                           plane[ty.lo * w + tx.lo] += gv * (1 - wy) * (1 - wx);
                                           plane[ty.lo * w + tx.hi] += gv * (1 - wy) * wx;
                                           plane[ty.hi * w + tx.lo] += gv * wy * (1 - wx);
                                           plane[ty.hi * w + tx.hi] += gv * wy * wx;
                                       }
                                   }
                               }
                           });
    });
}

Tensor patch_unfold(const Tensor& image, std::size_t patch) {
    require_rank("patch_unfold", image, 3);
    const std::size_t c = image.dim(0);
    const std::size_t h = image.dim(1);
    const std::size_t w = image.dim(2);
    if (patch == 0 || h % patch != 0 || w % patch != 0) {
        throw ShapeError("patch_unfold: image " + shape_str(image.shape()) +
                         " not divisible into patches of " + std::to_string(patch));
    }
    const std::size_t gh = h / patch;
    const std::size_t gw = w / patch;
    const std::size_t width = c * patch * patch;
    // Output position -> input position.
    auto index = std::make_shared<std::vector<std::size_t>>(gh * gw * width);
    for (std::size_t py = 0; py < gh; ++py) {
        for (std::size_t px = 0; px < gw; ++px) {
            for (std::size_t ch = 0; ch < c; ++ch) {
                for (std::size_t dy = 0; dy < patch; ++dy) {
                    for (std::size_t dx = 0; dx < patch; ++dx) {
                        const std::size_t row = py * gw + px;
                        const std::size_t col = (ch * patch + dy) * patch + dx;
                        (*index)[row * width + col] =
                            (ch * h + py * patch + dy) * w + px * patch + dx;
                    }
                }
            }
        }
    }
    return dispatch(image.dtype(), [&](auto tag) {
        using T = decltype(tag);
        const auto& src = vals<T>(image);
        std::vector<T> out(index->size());
        for (std::size_t i = 0; i < out.size(); ++i) out[i] = src[(*index)[i]];
        return make_result("patch_unfold", {gh * gw, width}, image.dtype(), std::move(out), {image},
                           [index](Node& self) {
                               Node& in = *self.inputs[0];
                               const auto& g = self.grads<T>();
                               auto& gi = in.grads<T>();
                               for (std::size_t i = 0; i < g.size(); ++i) gi[(*index)[i]] += g[i];
                           });
    });
}

}  // namespace hsp::num
