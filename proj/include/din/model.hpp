#pragma once

#include "din/frame.hpp"
#include "din/tensor.hpp"

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace din {

/// Topology of the deinterlacing network.
struct DinConfig {
    int base_channels = 64;
    int cis_blocks = 6;
    int fms_base_blocks_pre = 2;
    int fms_base_blocks_post = 3;
    int fms_down_blocks = 3;
    int in_channels = 3;
    int out_channels = 3;

    void validate() const;
    bool operator==(const DinConfig&) const = default;
};

template <typename T>
struct ConvLayer {
    std::string name;
    Tensor<T> weight;  // (Cout, Cin, k, k)
    Tensor<T> bias;    // (Cout, 1, 1, 1)
    int stride = 1;
};

/// All learnable convolutions, in a fixed manifest order.
///
/// Layer names:
///   cis.head, cis.rb{i}.conv{1,2}, cis.expand, cis.inter      co-interpolation stage
///   fms.pre{i}.conv{1,2}                                     base branch before the merge
///   fms.down, fms.down_rb{i}.conv{1,2}, fms.down_expand       downscale branch
///   fms.post{i}.conv{1,2}, fms.out                           merged branch (2C channels)
template <typename T>
struct DinParams {
    DinConfig config;
    std::vector<ConvLayer<T>> layers;

    const ConvLayer<T>& layer(std::string_view name) const;
    /// Weights and biases, layer by layer.
    std::vector<Tensor<T>> tensors() const;
    void zero_grad();
};

/// Xavier-initialised weights, zero biases. Deterministic in `seed`.
template <typename T>
DinParams<T> build(const DinConfig& cfg, std::uint64_t seed);

/// Element count of all weights and biases.
template <typename T>
std::size_t param_count(const DinParams<T>& params);

/// Closed-form parameter count of a configuration.
std::size_t param_count(const DinConfig& cfg);

/// Copy of the parameters in another precision.
template <typename To, typename From>
DinParams<To> convert_params(const DinParams<From>& params);

template <typename T>
struct CisOutput {
    Tensor<T> features;      // (N, C, H, W) interpolated field features
    Tensor<T> intermediate;  // (N, 3, H, W) supervised 1x1 projection
};

template <typename T>
struct DinOutput {
    Tensor<T> final;
    Tensor<T> intermediate;
};

/// Co-interpolation stage: both (N, 3, H/2, W) fields go through one residual
/// network side by side, and a vertical pixel shuffle interleaves the result
/// into full-height features.
template <typename T>
CisOutput<T> cis_forward(const DinParams<T>& params, const Tensor<T>& odd_field,
                         const Tensor<T>& even_field);

/// Fields-merging stage: a full-resolution residual branch plus a stride-2
/// branch upsampled by pixel shuffle, merged by channel concatenation.
/// H and W must be even.
template <typename T>
Tensor<T> fms_forward(const DinParams<T>& params, const Tensor<T>& features,
                      const Tensor<T>& intermediate);

template <typename T>
DinOutput<T> forward(const DinParams<T>& params, const Tensor<T>& odd_field,
                     const Tensor<T>& even_field);

/// Runs the network on one interlaced frame of any size. Odd widths are
/// reflect-padded by one column and cropped back; the result is clamped to
/// [0, 1] and returned in the input's range.
Frame deinterlace_din(const DinParams<float>& params, const Frame& interlaced);

}  // namespace din
