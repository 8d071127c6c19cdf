#include "din/frame.hpp"

#include <algorithm>
#include <stdexcept>
#include <string>

namespace din {

Frame::Frame(int height, int width, int channels, PixelRange range)
    : Frame(height, width, channels, range,
            std::vector<float>(static_cast<std::size_t>(std::max(height, 0)) *
                                   static_cast<std::size_t>(std::max(width, 0)) *
                                   static_cast<std::size_t>(std::max(channels, 0)),
                               0.0f)) {}

Frame::Frame(int height, int width, int channels, PixelRange range, std::vector<float> pixels)
    : height_(height), width_(width), channels_(channels), range_(range), pixels_(std::move(pixels)) {
    if (height <= 0 || width <= 0) throw std::invalid_argument("frame dimensions must be positive");
    if (channels != 1 && channels != 3)
        throw std::invalid_argument("frame must have 1 or 3 channels, got " + std::to_string(channels));
    if (pixels_.size() != static_cast<std::size_t>(height) * width * channels)
        throw std::invalid_argument("frame pixel count does not match its dimensions");
}

Frame Frame::to_range(PixelRange target) const {
    if (target == range_) return *this;
    Frame out = *this;
    out.range_ = target;
    const float factor = target == PixelRange::byte ? 255.0f : 1.0f / 255.0f;
    for (auto& v : out.pixels_) v *= factor;
    return out;
}

Frame Frame::clamped() const {
    Frame out = *this;
    const float hi = max_value();
    for (auto& v : out.pixels_) v = std::clamp(v, 0.0f, hi);
    return out;
}

Frame Frame::crop(int y0, int x0, int h, int w) const {
    if (y0 < 0 || x0 < 0 || h <= 0 || w <= 0 || y0 + h > height_ || x0 + w > width_)
        throw std::out_of_range("crop window outside the frame");
    Frame out(h, w, channels_, range_);
    for (int c = 0; c < channels_; ++c)
        for (int y = 0; y < h; ++y) std::copy_n(row(c, y0 + y) + x0, w, out.row(c, y));
    return out;
}

Frame Frame::flipped_horizontal() const {
    Frame out = *this;
    for (int c = 0; c < channels_; ++c)
        for (int y = 0; y < height_; ++y) std::reverse(out.row(c, y), out.row(c, y) + width_);
    return out;
}

Frame Frame::flipped_vertical() const {
    Frame out(height_, width_, channels_, range_);
    for (int c = 0; c < channels_; ++c)
        for (int y = 0; y < height_; ++y) std::copy_n(row(c, height_ - 1 - y), width_, out.row(c, y));
    return out;
}

template <typename T>
Tensor<T> frames_to_tensor(std::span<const Frame> frames) {
    if (frames.empty()) throw std::invalid_argument("frames_to_tensor: no frames");
    const Frame& first = frames.front();
    const Shape shape{frames.size(), static_cast<std::size_t>(first.channels()),
                      static_cast<std::size_t>(first.height()),
                      static_cast<std::size_t>(first.width())};
    std::vector<T> values;
    values.reserve(shape.numel());
    for (const auto& f : frames) {
        if (!f.same_shape(first)) throw std::invalid_argument("frames_to_tensor: shape mismatch");
        const float scale = 1.0f / f.max_value();
        for (float v : f.pixels()) values.push_back(static_cast<T>(v * scale));
    }
    return Tensor<T>(shape, std::move(values));
}

template <typename T>
Frame tensor_to_frame(const Tensor<T>& tensor, std::size_t n) {
    const Shape& s = tensor.shape();
    if (n >= s.n) throw std::out_of_range("tensor_to_frame: batch index out of range");
    const std::size_t len = s.c * s.plane();
    auto data = tensor.data().subspan(n * len, len);
    std::vector<float> pixels(data.begin(), data.end());
    return Frame(static_cast<int>(s.h), static_cast<int>(s.w), static_cast<int>(s.c),
                 PixelRange::unit, std::move(pixels));
}

template Tensor<float> frames_to_tensor(std::span<const Frame>);
template Tensor<double> frames_to_tensor(std::span<const Frame>);
template Frame tensor_to_frame(const Tensor<float>&, std::size_t);
template Frame tensor_to_frame(const Tensor<double>&, std::size_t);

}  // namespace din
