#pragma once

#include "din/tensor.hpp"

#include <cstddef>
#include <span>
#include <vector>

namespace din {

/// How pixel values are scaled: unit = [0, 1] reals, byte = [0, 255].
enum class PixelRange { unit, byte };

/// Planar image (channel-major, then rows, then columns).
class Frame {
public:
    Frame() = default;
    Frame(int height, int width, int channels, PixelRange range = PixelRange::unit);
    Frame(int height, int width, int channels, PixelRange range, std::vector<float> pixels);

    int height() const { return height_; }
    int width() const { return width_; }
    int channels() const { return channels_; }
    PixelRange range() const { return range_; }
    float max_value() const { return range_ == PixelRange::unit ? 1.0f : 255.0f; }
    bool empty() const { return pixels_.empty(); }

    float& at(int c, int y, int x) { return pixels_[index(c, y, x)]; }
    float at(int c, int y, int x) const { return pixels_[index(c, y, x)]; }
    float* row(int c, int y) { return pixels_.data() + index(c, y, 0); }
    const float* row(int c, int y) const { return pixels_.data() + index(c, y, 0); }

    std::span<float> pixels() { return pixels_; }
    std::span<const float> pixels() const { return pixels_; }

    bool same_shape(const Frame& other) const {
        return height_ == other.height_ && width_ == other.width_ && channels_ == other.channels_;
    }
    bool operator==(const Frame&) const = default;

    /// Copy rescaled to another range.
    Frame to_range(PixelRange target) const;
    /// Values clipped to [0, max_value()].
    Frame clamped() const;
    /// Rows [y0, y0 + h) and columns [x0, x0 + w).
    Frame crop(int y0, int x0, int h, int w) const;
    Frame flipped_horizontal() const;
    Frame flipped_vertical() const;

private:
    std::size_t index(int c, int y, int x) const {
        return (static_cast<std::size_t>(c) * static_cast<std::size_t>(height_) +
                static_cast<std::size_t>(y)) *
                   static_cast<std::size_t>(width_) +
               static_cast<std::size_t>(x);
    }

    int height_ = 0;
    int width_ = 0;
    int channels_ = 0;
    PixelRange range_ = PixelRange::unit;
    std::vector<float> pixels_;
};

/// The two half-height fields of a frame. The odd field holds 1-based odd
/// scan lines, i.e. 0-based rows 0, 2, 4, ... (top field); the even field
/// holds 0-based rows 1, 3, 5, ... (bottom field).
struct FieldPair {
    Frame odd_field;
    Frame even_field;
};

/// Stacks frames into an (N, C, H, W) tensor in unit range.
template <typename T>
Tensor<T> frames_to_tensor(std::span<const Frame> frames);

template <typename T>
Tensor<T> frame_to_tensor(const Frame& frame) {
    return frames_to_tensor<T>(std::span<const Frame>(&frame, 1));
}

/// Sample `n` of an (N, C, H, W) tensor as a unit-range frame.
template <typename T>
Frame tensor_to_frame(const Tensor<T>& tensor, std::size_t n = 0);

}  // namespace din
