#include "hsp/numerics/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <sstream>
#include <unordered_set>

#include "hsp/errors.hpp"

namespace hsp::num {

namespace {

thread_local bool t_grad_enabled = true;
thread_local std::uint64_t t_next_seq = 1;

template <class T>
bool all_finite(const std::vector<T>& values) {
    for (T v : values) {
        if (!std::isfinite(v)) {
            return false;
        }
    }
    return true;
}

std::shared_ptr<detail::Node> new_leaf(Shape shape, DType dtype) {
    auto node = std::make_shared<detail::Node>();
    node->data = detail::make_buffer(dtype, shape_numel(shape));
    node->shape = std::move(shape);
    node->dtype = dtype;
    return node;
}

}  // namespace

const char* dtype_name(DType dtype) {
    return dtype == DType::f32 ? "float32" : "float64";
}

std::size_t shape_numel(const Shape& shape) {
    std::size_t n = 1;
    for (std::size_t d : shape) {
        n *= d;
    }
    return n;
}

std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << '(';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ',';
        os << shape[i];
    }
    os << ')';
    return os.str();
}

namespace detail {

void Node::release_grad() {
    has_grad = false;
    std::visit([](auto& v) { std::decay_t<decltype(v)>().swap(v); }, grad);
}

Buffer make_buffer(DType dtype, std::size_t n) {
    if (dtype == DType::f32) {
        return std::vector<float>(n, 0.0f);
    }
    return std::vector<double>(n, 0.0);
}

}  // namespace detail

Tensor Tensor::wrap(std::shared_ptr<detail::Node> node) {
    return Tensor(std::move(node));
}

Tensor Tensor::zeros(Shape shape, DType dtype, bool requires_grad) {
    for (std::size_t d : shape) {
        if (d == 0) {
            throw ShapeError("tensor extents must be positive, got " + shape_str(shape));
        }
    }
    auto node = new_leaf(std::move(shape), dtype);
    node->requires_grad = requires_grad;
    return Tensor(std::move(node));
}

Tensor Tensor::full(Shape shape, double value, DType dtype) {
    Tensor t = zeros(std::move(shape), dtype);
    dispatch(dtype, [&](auto tag) {
        using T = decltype(tag);
        auto& v = t.node_->values<T>();
        std::fill(v.begin(), v.end(), static_cast<T>(value));
    });
    return t;
}

Tensor Tensor::from_values(Shape shape, std::span<const double> values, DType dtype) {
    if (shape_numel(shape) != values.size()) {
        throw ShapeError("from_values: " + std::to_string(values.size()) +
                         " values do not fill shape " + shape_str(shape));
    }
    Tensor t = zeros(std::move(shape), dtype);
    dispatch(dtype, [&](auto tag) {
        using T = decltype(tag);
        auto& v = t.node_->values<T>();
        for (std::size_t i = 0; i < values.size(); ++i) {
            v[i] = static_cast<T>(values[i]);
        }
    });
    return t;
}

Tensor Tensor::from_values(Shape shape, std::initializer_list<double> values, DType dtype) {
    return from_values(std::move(shape), std::span<const double>(values.begin(), values.size()),
                       dtype);
}

Tensor Tensor::scalar(double value, DType dtype) {
    return full({1}, value, dtype);
}

Tensor Tensor::identity(std::size_t n, DType dtype) {
    Tensor t = zeros({n, n}, dtype);
    for (std::size_t i = 0; i < n; ++i) {
        t.set(i * n + i, 1.0);
    }
    return t;
}

const Shape& Tensor::shape() const {
    if (!node_) throw UsageError("shape() on an undefined tensor");
    return node_->shape;
}

std::size_t Tensor::dim(std::size_t axis) const {
    const Shape& s = shape();
    if (axis >= s.size()) {
        throw ShapeError("axis " + std::to_string(axis) + " out of range for shape " + shape_str(s));
    }
    return s[axis];
}

std::size_t Tensor::numel() const {
    return shape_numel(shape());
}

DType Tensor::dtype() const {
    if (!node_) throw UsageError("dtype() on an undefined tensor");
    return node_->dtype;
}

const char* Tensor::op_name() const {
    return node_ ? node_->op : "undefined";
}

bool Tensor::requires_grad() const {
    return node_ && node_->requires_grad;
}

bool Tensor::is_leaf() const {
    return node_ && !node_->backward;
}

Tensor& Tensor::set_requires_grad(bool value) {
    check_leaf_mutation();
    node_->requires_grad = value;
    return *this;
}

void Tensor::check_leaf_mutation() const {
    if (!node_) throw UsageError("mutation of an undefined tensor");
    if (node_->backward) {
        throw UsageError(std::string("cannot mutate the output of primitive '") + node_->op + "'");
    }
}

std::vector<double> Tensor::to_vector() const {
    return dispatch(dtype(), [&](auto tag) {
        using T = decltype(tag);
        const auto& v = node_->values<T>();
        return std::vector<double>(v.begin(), v.end());
    });
}

double Tensor::item() const {
    if (numel() != 1) {
        throw UsageError("item() requires a single-element tensor, got " + shape_str(shape()));
    }
    return at(0);
}

double Tensor::at(std::size_t flat_index) const {
    if (flat_index >= numel()) throw ShapeError("flat index out of range");
    return dispatch(dtype(), [&](auto tag) -> double {
        using T = decltype(tag);
        return node_->values<T>()[flat_index];
    });
}

void Tensor::set(std::size_t flat_index, double value) {
    check_leaf_mutation();
    if (flat_index >= numel()) throw ShapeError("flat index out of range");
    dispatch(dtype(), [&](auto tag) {
        using T = decltype(tag);
        node_->values<T>()[flat_index] = static_cast<T>(value);
    });
}

bool Tensor::has_grad() const {
    return node_ && node_->has_grad;
}

std::vector<double> Tensor::grad_vector() const {
    if (!has_grad()) throw UsageError("tensor has no gradient");
    return dispatch(dtype(), [&](auto tag) {
        using T = decltype(tag);
        const auto& g = std::get<std::vector<T>>(node_->grad);
        return std::vector<double>(g.begin(), g.end());
    });
}

Tensor Tensor::grad() const {
    std::vector<double> g = grad_vector();
    return from_values(shape(), g, dtype());
}

void Tensor::zero_grad() {
    if (node_) node_->release_grad();
}

Tensor Tensor::detach() const {
    auto node = std::make_shared<detail::Node>();
    node->shape = shape();
    node->dtype = dtype();
    node->data = node_->data;
    return Tensor(std::move(node));
}

Tensor Tensor::to(DType target) const {
    if (target == dtype()) return detach();
    return from_values(shape(), to_vector(), target);
}

bool Tensor::bit_equal(const Tensor& other) const {
    if (!defined() || !other.defined()) return defined() == other.defined();
    if (shape() != other.shape() || dtype() != other.dtype()) return false;
    return dispatch(dtype(), [&](auto tag) {
        using T = decltype(tag);
        const auto& a = node_->values<T>();
        const auto& b = other.node_->values<T>();
        return std::memcmp(a.data(), b.data(), a.size() * sizeof(T)) == 0;
    });
}

bool grad_enabled() {
    return t_grad_enabled;
}

NoGradGuard::NoGradGuard() : previous_(t_grad_enabled) {
    t_grad_enabled = false;
}

NoGradGuard::~NoGradGuard() {
    t_grad_enabled = previous_;
}

Tensor make_result(const char* op, Shape shape, DType dtype, detail::Buffer data,
                   std::vector<Tensor> inputs, detail::BackwardFn backward) {
    const bool finite = std::visit([](const auto& v) { return all_finite(v); }, data);
    if (!finite) {
        throw NumericError(std::string(op) + ": non-finite value in output of shape " +
                           shape_str(shape));
    }
    auto node = std::make_shared<detail::Node>();
    node->shape = std::move(shape);
    node->dtype = dtype;
    node->data = std::move(data);
    node->op = op;
    node->seq = t_next_seq++;
    bool tracked = false;
    if (t_grad_enabled) {
        for (const Tensor& in : inputs) {
            tracked = tracked || in.requires_grad();
        }
    }
    if (tracked) {
        node->requires_grad = true;
        node->inputs.reserve(inputs.size());
        for (const Tensor& in : inputs) {
            node->inputs.push_back(in.node());
        }
        node->backward = std::move(backward);
    }
    return Tensor::wrap(std::move(node));
}

namespace {

// Reachable tape participants: primitives sorted by descending `seq`, leaves
// returned separately.
void collect(const Tensor& loss, std::vector<detail::Node*>& ops,
             std::vector<detail::Node*>& leaves) {
    std::unordered_set<detail::Node*> seen;
    std::vector<detail::Node*> stack{loss.node().get()};
    seen.insert(stack.back());
    while (!stack.empty()) {
        detail::Node* n = stack.back();
        stack.pop_back();
        if (n->backward) {
            ops.push_back(n);
        } else {
            leaves.push_back(n);
        }
        for (const auto& in : n->inputs) {
            if (in->requires_grad && seen.insert(in.get()).second) {
                stack.push_back(in.get());
            }
        }
    }
    std::sort(ops.begin(), ops.end(),
              [](const detail::Node* a, const detail::Node* b) { return a->seq > b->seq; });
}

void check_loss(const Tensor& loss) {
    if (!loss.defined()) throw UsageError("backward on an undefined tensor");
    if (loss.numel() != 1) {
        throw UsageError("backward requires a scalar loss, got shape " + shape_str(loss.shape()));
    }
    if (!loss.requires_grad()) {
        throw UsageError("backward on a value that is not attached to the tape");
    }
}

}  // namespace

std::vector<const detail::Node*> tape_of(const Tensor& loss) {
    check_loss(loss);
    std::vector<detail::Node*> ops;
    std::vector<detail::Node*> leaves;
    collect(loss, ops, leaves);
    return {ops.begin(), ops.end()};
}

void backward(const Tensor& loss) {
    check_loss(loss);
    std::vector<detail::Node*> ops;
    std::vector<detail::Node*> leaves;
    collect(loss, ops, leaves);

    detail::Node& root = *loss.node();
    dispatch(root.dtype, [&](auto tag) {
        using T = decltype(tag);
        root.grads<T>()[0] += T{1};
    });
    for (detail::Node* n : ops) {
        if (n->has_grad) {
            n->backward(*n);
            n->release_grad();
        }
    }
    for (detail::Node* leaf : leaves) {
        dispatch(leaf->dtype, [&](auto tag) {
            using T = decltype(tag);
            (void)leaf->grads<T>();
        });
    }
}

Tensor custom_unary(const char* name, const Tensor& x, UnaryForward forward,
                    UnaryDerivative derivative) {
    return dispatch(x.dtype(), [&](auto tag) {
        using T = decltype(tag);
        auto xs = x.data<T>();
        std::vector<T> out(xs.size());
        for (std::size_t i = 0; i < xs.size(); ++i) {
            out[i] = static_cast<T>(forward(xs[i]));
        }
        return make_result(name, x.shape(), x.dtype(), std::move(out), {x},
                           [derivative](detail::Node& self) {
                               auto& in = *self.inputs[0];
                               const auto& xv = in.values<T>();
                               const auto& yv = self.values<T>();
                               const auto& g = self.grads<T>();
                               auto& gi = in.grads<T>();
                               for (std::size_t i = 0; i < g.size(); ++i) {
                                   gi[i] += static_cast<T>(g[i] * derivative(xv[i], yv[i]));
                               }
                           });
    });
}

}  // namespace hsp::num
