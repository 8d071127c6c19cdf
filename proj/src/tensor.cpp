#include "din/tensor.hpp"

#include <stdexcept>
#include <unordered_set>

namespace din {

std::string Shape::str() const {
    return "(" + std::to_string(n) + "," + std::to_string(c) + "," + std::to_string(h) + "," +
           std::to_string(w) + ")";
}

namespace detail {

template <typename T>
std::span<T> TensorImpl<T>::grad_buffer() {
    if (grad.empty()) grad.assign(data.size(), T(0));
    return grad;
}

template struct TensorImpl<float>;
template struct TensorImpl<double>;

}  // namespace detail

namespace {

void check_shape(const Shape& s) {
    if (s.n == 0 || s.c == 0 || s.h == 0 || s.w == 0)
        throw std::invalid_argument("tensor dimensions must be >= 1, got " + s.str());
}

}  // namespace

template <typename T>
Tensor<T>::Tensor(Shape shape, bool requires_grad)
    : Tensor(shape, std::vector<T>(shape.numel(), T(0)), requires_grad) {}

template <typename T>
Tensor<T>::Tensor(Shape shape, std::vector<T> values, bool requires_grad) {
    check_shape(shape);
    if (values.size() != shape.numel())
        throw std::invalid_argument("tensor data length " + std::to_string(values.size()) +
                                    " does not match shape " + shape.str());
    impl_ = std::make_shared<detail::TensorImpl<T>>();
    impl_->shape = shape;
    impl_->data = std::move(values);
    impl_->requires_grad = requires_grad;
}

template <typename T>
Tensor<T> Tensor<T>::full(Shape shape, T value, bool requires_grad) {
    check_shape(shape);
    return Tensor(shape, std::vector<T>(shape.numel(), value), requires_grad);
}

template <typename T>
Tensor<T> Tensor<T>::scalar(T value, bool requires_grad) {
    return Tensor(Shape{}, std::vector<T>{value}, requires_grad);
}

template <typename T>
detail::TensorImpl<T>& Tensor<T>::checked() const {
    if (!impl_) throw std::logic_error("use of an undefined tensor");
    return *impl_;
}

template <typename T>
const Shape& Tensor<T>::shape() const {
    return checked().shape;
}

template <typename T>
std::span<const T> Tensor<T>::data() const {
    return checked().data;
}

template <typename T>
std::span<T> Tensor<T>::mutable_data() {
    auto& impl = checked();
    if (impl.grad_fn) throw std::logic_error("cannot mutate the output of a recorded op");
    return impl.data;
}

template <typename T>
T Tensor<T>::at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const {
    const auto& s = shape();
    if (n >= s.n || c >= s.c || h >= s.h || w >= s.w)
        throw std::out_of_range("tensor index out of range for shape " + s.str());
    return checked().data[((n * s.c + c) * s.h + h) * s.w + w];
}

template <typename T>
T Tensor<T>::item() const {
    if (numel() != 1)
        throw std::logic_error("item() needs a single-element tensor, shape is " + shape().str());
    return checked().data[0];
}

template <typename T>
bool Tensor<T>::requires_grad() const {
    return checked().requires_grad;
}

template <typename T>
void Tensor<T>::set_requires_grad(bool on) {
    auto& impl = checked();
    if (impl.grad_fn) throw std::logic_error("requires_grad can only be set on leaf tensors");
    impl.requires_grad = on;
}

template <typename T>
bool Tensor<T>::is_leaf() const {
    return checked().grad_fn == nullptr;
}

template <typename T>
bool Tensor<T>::has_grad() const {
    return !checked().grad.empty();
}

template <typename T>
std::span<const T> Tensor<T>::grad() const {
    auto& impl = checked();
    if (impl.grad.empty()) throw std::logic_error("tensor has no gradient");
    return impl.grad;
}

template <typename T>
void Tensor<T>::zero_grad() {
    auto& impl = checked();
    impl.grad.clear();
    impl.grad.shrink_to_fit();
}

template <typename T>
Tensor<T> Tensor<T>::detach() const {
    const auto& impl = checked();
    return Tensor(impl.shape, impl.data, false);
}

template <typename T>
Tape<T> build_tape(const Tensor<T>& root) {
    Tape<T> order;
    if (!root.defined() || !root.impl()->grad_fn) return order;

    // Iterative post-order DFS over op outputs.
    std::unordered_set<const detail::TensorImpl<T>*> visited;
    struct Frame {
        detail::TensorImpl<T>* impl;
        std::size_t next_input;
    };
    std::vector<Frame> stack{{root.impl().get(), 0}};
    visited.insert(root.impl().get());
    while (!stack.empty()) {
        auto& top = stack.back();
        auto& inputs = top.impl->grad_fn->inputs;
        if (top.next_input < inputs.size()) {
            auto* child = inputs[top.next_input++].get();
            if (child->grad_fn && visited.insert(child).second) stack.push_back({child, 0});
        } else {
            order.push_back(top.impl);
            stack.pop_back();
        }
    }
    return order;
}

template <typename T>
void Tensor<T>::backward() const {
    auto& root = checked();
    if (root.shape.numel() != 1)
        throw std::logic_error("backward needs a scalar loss, shape is " + root.shape.str());
    if (!root.grad_fn)
        throw std::logic_error("backward on a tensor that was not produced by a recorded op");

    const auto tape = build_tape(*this);
    for (const auto* impl : tape)
        if (impl->grad_fn->consumed)
            throw std::logic_error("backward called on an already consumed graph (op '" +
                                   impl->grad_fn->op + "')");

    root.grad.assign(1, T(1));
    for (auto it = tape.rbegin(); it != tape.rend(); ++it) {
        auto* impl = *it;
        auto& node = *impl->grad_fn;
        if (!impl->grad.empty()) node.backward(node, impl->grad);
        node.consumed = true;
        // Intermediate gradients are not retained.
        impl->grad.clear();
        impl->grad.shrink_to_fit();
    }
    // Release saved state only once no tape entry can be reached any more.
    for (auto* impl : tape) {
        impl->grad_fn->backward = nullptr;
        impl->grad_fn->inputs.clear();
    }
}

template class Tensor<float>;
template class Tensor<double>;
template Tape<float> build_tape(const Tensor<float>&);
template Tape<double> build_tape(const Tensor<double>&);

}  // namespace din
