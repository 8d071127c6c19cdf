#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <type_traits>
#include <vector>

namespace din {

/// Four-dimensional tensor extent in (batch, channels, height, width) order.
struct Shape {
    std::size_t n = 1;
    std::size_t c = 1;
    std::size_t h = 1;
    std::size_t w = 1;

    std::size_t numel() const { return n * c * h * w; }
    std::size_t plane() const { return h * w; }
    bool operator==(const Shape&) const = default;
    std::string str() const;
};

enum class Precision { f32, f64 };

template <typename T>
constexpr Precision precision_of() {
    static_assert(std::is_same_v<T, float> || std::is_same_v<T, double>,
                  "tensors hold float or double");
    return std::is_same_v<T, float> ? Precision::f32 : Precision::f64;
}

namespace detail {

template <typename T>
struct TensorImpl;

// One recorded operation. Holds its inputs alive until the graph is consumed.
template <typename T>
struct Node {
    using BackwardFn = std::function<void(Node&, std::span<const T> grad_out)>;

    std::string op;
    std::vector<std::shared_ptr<TensorImpl<T>>> inputs;
    BackwardFn backward;
    bool consumed = false;
};

template <typename T>
struct TensorImpl {
    Shape shape;
    std::vector<T> data;
    std::vector<T> grad;  // empty when absent
    bool requires_grad = false;
    std::shared_ptr<Node<T>> grad_fn;

    // Zero-initialised gradient buffer, allocated on first use.
    std::span<T> grad_buffer();
};

}  // namespace detail

/// Dense NCHW tensor handle. Copies share storage; the data of a tensor
/// produced by an op is never modified afterwards.
template <typename T>
class Tensor {
public:
    using value_type = T;
    static constexpr Precision precision = precision_of<T>();

    Tensor() = default;
    explicit Tensor(Shape shape, bool requires_grad = false);
    Tensor(Shape shape, std::vector<T> values, bool requires_grad = false);
    explicit Tensor(std::shared_ptr<detail::TensorImpl<T>> impl) : impl_(std::move(impl)) {}

    static Tensor full(Shape shape, T value, bool requires_grad = false);
    static Tensor scalar(T value, bool requires_grad = false);

    bool defined() const { return impl_ != nullptr; }
    const Shape& shape() const;
    std::size_t numel() const { return shape().numel(); }

    std::span<const T> data() const;
    /// Writable view for leaves (initialisers, optimisers). Throws on op outputs.
    std::span<T> mutable_data();

    T at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const;
    /// Value of a single-element tensor.
    T item() const;

    bool requires_grad() const;
    void set_requires_grad(bool on);
    bool is_leaf() const;

    bool has_grad() const;
    std::span<const T> grad() const;
    /// Drops the accumulated gradient.
    void zero_grad();

    /// Leaf copy of the values with no history.
    Tensor detach() const;

    /// Replays the recorded graph in reverse and accumulates d(this)/d(leaf)
    /// into every leaf with requires_grad. The graph can be replayed once.
    void backward() const;

    const std::shared_ptr<detail::TensorImpl<T>>& impl() const { return impl_; }

private:
    detail::TensorImpl<T>& checked() const;

    std::shared_ptr<detail::TensorImpl<T>> impl_;
};

template <typename T>
void backward(const Tensor<T>& loss) {
    loss.backward();
}

/// Op outputs reachable from a root, inputs before consumers.
template <typename T>
using Tape = std::vector<detail::TensorImpl<T>*>;

template <typename T>
Tape<T> build_tape(const Tensor<T>& root);

extern template class Tensor<float>;
extern template class Tensor<double>;

}  // namespace din
