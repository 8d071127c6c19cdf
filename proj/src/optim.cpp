#include "din/optim.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

namespace din {

template <typename T>
void AdamState<T>::ensure(const std::vector<Tensor<T>>& params) {
    if (!m.empty()) {
        if (m.size() != params.size())
            throw std::invalid_argument("adam state holds " + std::to_string(m.size()) +
                                        " moments but " + std::to_string(params.size()) +
                                        " parameters were given");
        return;
    }
    for (const auto& p : params) {
        m.emplace_back(p.numel(), T(0));
        v.emplace_back(p.numel(), T(0));
    }
}

template <typename T>
void adam_step(std::vector<Tensor<T>>& params, double lr, AdamState<T>& state,
               const AdamOptions& opts) {
    for (std::size_t i = 0; i < params.size(); ++i)
        if (!params[i].has_grad())
            throw std::logic_error("adam_step: parameter " + std::to_string(i) +
                                   " has no gradient");
    state.ensure(params);

    ++state.step;
    const double t = static_cast<double>(state.step);
    const T b1 = static_cast<T>(opts.beta1);
    const T b2 = static_cast<T>(opts.beta2);
    const T correction1 = static_cast<T>(1.0 - std::pow(opts.beta1, t));
    const T correction2 = static_cast<T>(1.0 - std::pow(opts.beta2, t));
    const T eps = static_cast<T>(opts.epsilon);
    const T rate = static_cast<T>(lr);

    for (std::size_t i = 0; i < params.size(); ++i) {
        auto data = params[i].mutable_data();
        auto grad = params[i].grad();
        auto& m = state.m[i];
        auto& v = state.v[i];
        if (m.size() != data.size())
            throw std::invalid_argument("adam_step: moment size mismatch for parameter " +
                                        std::to_string(i));
        for (std::size_t j = 0; j < data.size(); ++j) {
            const T g = grad[j];
            m[j] = b1 * m[j] + (T(1) - b1) * g;
            v[j] = b2 * v[j] + (T(1) - b2) * g * g;
            const T m_hat = m[j] / correction1;
            const T v_hat = v[j] / correction2;
            data[j] -= rate * m_hat / (std::sqrt(v_hat) + eps);
        }
    }
}

double xavier_bound(const Shape& shape) {
    const double receptive = static_cast<double>(shape.h * shape.w);
    const double fan_in = static_cast<double>(shape.c) * receptive;
    const double fan_out = static_cast<double>(shape.n) * receptive;
    return std::sqrt(6.0 / (fan_in + fan_out));
}

template <typename T>
Tensor<T> xavier_init(Shape shape, std::uint64_t seed) {
    const T bound = static_cast<T>(xavier_bound(shape));
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<T> dist(-bound, bound);
    std::vector<T> values(shape.numel());
    for (auto& v : values) v = dist(rng);
    return Tensor<T>(shape, std::move(values), true);
}

template struct AdamState<float>;
template struct AdamState<double>;
template void adam_step(std::vector<Tensor<float>>&, double, AdamState<float>&, const AdamOptions&);
template void adam_step(std::vector<Tensor<double>>&, double, AdamState<double>&,
                        const AdamOptions&);
template Tensor<float> xavier_init(Shape, std::uint64_t);
template Tensor<double> xavier_init(Shape, std::uint64_t);

}  // namespace din
