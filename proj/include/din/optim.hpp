#pragma once

#include "din/tensor.hpp"

#include <cstdint>
#include <vector>

namespace din {

struct AdamOptions {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

/// Per-parameter first and second moment estimates plus the shared step count.
template <typename T>
struct AdamState {
    std::int64_t step = 0;
    std::vector<std::vector<T>> m;
    std::vector<std::vector<T>> v;

    /// Sizes the moment buffers for `params` (all zero) if empty.
    void ensure(const std::vector<Tensor<T>>& params);
};

/// One bias-corrected Adam update. Every parameter must carry a gradient.
template <typename T>
void adam_step(std::vector<Tensor<T>>& params, double lr, AdamState<T>& state,
               const AdamOptions& opts = {});

/// Uniform Glorot/Xavier initialisation in [-a, a], a = sqrt(6 / (fan_in + fan_out)),
/// with fan_in = Cin*k*k and fan_out = Cout*k*k for a (Cout, Cin, k, k) kernel.
template <typename T>
Tensor<T> xavier_init(Shape shape, std::uint64_t seed);

/// Bound `a` used by xavier_init for the given kernel shape.
double xavier_bound(const Shape& shape);

}  // namespace din
