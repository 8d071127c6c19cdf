#pragma once

#include "din/tensor.hpp"

#include <cstddef>

namespace din {

/// 2-D cross-correlation with zero "same" padding (k / 2).
/// weight is (Cout, Cin, k, k) with k in {1, 3}; bias is (Cout, 1, 1, 1) or (1, Cout, 1, 1).
/// stride 2 yields ceil(H / 2) x ceil(W / 2) outputs.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias,
                 int stride = 1);

/// max(0, x); the subgradient at 0 is 0.
template <typename T>
Tensor<T> relu(const Tensor<T>& input);

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);

/// Multiplies every element by a constant.
template <typename T>
Tensor<T> scale(const Tensor<T>& a, T factor);

/// Sum of all elements as a (1,1,1,1) tensor.
template <typename T>
Tensor<T> sum(const Tensor<T>& a);

/// Stacks b's channels after a's.
template <typename T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b);

/// Channels [begin, begin + count).
template <typename T>
Tensor<T> slice_channels(const Tensor<T>& a, std::size_t begin, std::size_t count);

/// (N, C*r*r, H, W) -> (N, C, H*r, W*r);
/// out(n, c, h*r+i, w*r+j) = in(n, c*r*r + i*r + j, h, w).
template <typename T>
Tensor<T> pixel_shuffle(const Tensor<T>& input, std::size_t r);

template <typename T>
Tensor<T> pixel_unshuffle(const Tensor<T>& input, std::size_t r);

/// Vertical-only pixel shuffle: (N, C*r, H, W) -> (N, C, H*r, W);
/// out(n, c, h*r+i, w) = in(n, c*r + i, h, w). With r = 2, channel group 0
/// lands on even output rows and group 1 on odd rows, which is interlaced
/// scanning of two fields.
template <typename T>
Tensor<T> vertical_pixel_shuffle(const Tensor<T>& input, std::size_t r);

template <typename T>
Tensor<T> vertical_pixel_unshuffle(const Tensor<T>& input, std::size_t r);

/// Mean absolute difference over all elements.
template <typename T>
Tensor<T> l1_loss(const Tensor<T>& pred, const Tensor<T>& target);

}  // namespace din
