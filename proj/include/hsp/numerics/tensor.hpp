#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <type_traits>
#include <variant>
#include <vector>

namespace hsp::num {

enum class DType : std::uint8_t { f32 = 0, f64 = 1 };

const char* dtype_name(DType dtype);

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

// Calls f with a value-initialized scalar of the C++ type matching `dtype`,
// so kernels can be written once as `[&](auto tag) { using T = decltype(tag); ... }`.
template <class F>
decltype(auto) dispatch(DType dtype, F&& f) {
    if (dtype == DType::f32) {
        return f(float{});
    }
    return f(double{});
}

template <class T>
constexpr DType dtype_of() {
    static_assert(std::is_same_v<T, float> || std::is_same_v<T, double>);
    return std::is_same_v<T, float> ? DType::f32 : DType::f64;
}

namespace detail {

using Buffer = std::variant<std::vector<float>, std::vector<double>>;

struct Node;
using BackwardFn = std::function<void(Node& self)>;

// One recorded value. Leaves have no backward function; every other node is a
// primitive application whose `seq` orders it on the tape.
struct Node {
    Shape shape;
    DType dtype = DType::f32;
    Buffer data;
    Buffer grad;
    bool has_grad = false;
    bool requires_grad = false;
    std::uint64_t seq = 0;
    const char* op = "leaf";
    std::vector<std::shared_ptr<Node>> inputs;
    BackwardFn backward;

    template <class T>
    std::vector<T>& values() {
        return std::get<std::vector<T>>(data);
    }

    // Gradient buffer, zero-allocated on first access.
    template <class T>
    std::vector<T>& grads() {
        if (!has_grad) {
            grad = std::vector<T>(shape_numel(shape), T{0});
            has_grad = true;
        }
        return std::get<std::vector<T>>(grad);
    }

    void release_grad();
};

Buffer make_buffer(DType dtype, std::size_t n);

}  // namespace detail

class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(Shape shape, DType dtype = DType::f32, bool requires_grad = false);
    static Tensor full(Shape shape, double value, DType dtype = DType::f32);
    static Tensor from_values(Shape shape, std::span<const double> values, DType dtype = DType::f32);
    static Tensor from_values(Shape shape, std::initializer_list<double> values,
                              DType dtype = DType::f32);
    static Tensor scalar(double value, DType dtype = DType::f32);
    static Tensor identity(std::size_t n, DType dtype = DType::f32);

    bool defined() const { return static_cast<bool>(node_); }
    const Shape& shape() const;
    std::size_t rank() const { return shape().size(); }
    std::size_t dim(std::size_t axis) const;
    std::size_t numel() const;
    DType dtype() const;
    const char* op_name() const;

    bool requires_grad() const;
    bool is_leaf() const;
    // Only valid on leaves.
    Tensor& set_requires_grad(bool value);

    template <class T>
    std::span<const T> data() const {
        return std::get<std::vector<T>>(node_->data);
    }
    // Mutable access is limited to leaves (initialization and optimizer updates).
    template <class T>
    std::span<T> mutable_data() {
        check_leaf_mutation();
        return std::get<std::vector<T>>(node_->data);
    }

    std::vector<double> to_vector() const;
    double item() const;
    double at(std::size_t flat_index) const;
    void set(std::size_t flat_index, double value);  // leaves only

    bool has_grad() const;
    template <class T>
    std::span<const T> grad_data() const {
        return std::get<std::vector<T>>(node_->grad);
    }
    std::vector<double> grad_vector() const;
    Tensor grad() const;
    void zero_grad();

    // New leaf holding a copy of the values, outside any tape.
    Tensor detach() const;
    Tensor to(DType dtype) const;
    bool bit_equal(const Tensor& other) const;

    const std::shared_ptr<detail::Node>& node() const { return node_; }
    static Tensor wrap(std::shared_ptr<detail::Node> node);

private:
    explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
    void check_leaf_mutation() const;

    std::shared_ptr<detail::Node> node_;
};

// Tape recording is enabled unless a NoGradGuard is alive on this thread.
bool grad_enabled();

class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool previous_;
};

// Creates the output of a primitive. Verifies finiteness, assigns the tape
// position, and attaches `backward` when any input participates in the tape.
Tensor make_result(const char* op, Shape shape, DType dtype, detail::Buffer data,
                   std::vector<Tensor> inputs, detail::BackwardFn backward);

// Reverse-mode sweep from a scalar loss. Accumulates into leaf gradients.
void backward(const Tensor& loss);

// Primitives reachable from `loss` that participate in the tape, in the order
// backward() visits them.
std::vector<const detail::Node*> tape_of(const Tensor& loss);

// Elementwise user-defined primitive evaluated in double precision. Mainly a
// hook for verifying the gradient checker itself.
using UnaryForward = std::function<double(double)>;
using UnaryDerivative = std::function<double(double x, double y)>;
Tensor custom_unary(const char* name, const Tensor& x, UnaryForward forward,
                    UnaryDerivative derivative);

}  // namespace hsp::num
