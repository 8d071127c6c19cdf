#pragma once

#include "din/frame.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <vector>

namespace din {

/// Reads a PNG or binary PPM (P6, maxval 255) into a unit-range frame.
/// Grayscale PNGs yield one channel, everything else RGB (alpha dropped).
/// Odd-height images lose their bottom row so the result always splits into fields.
Frame read_image(const std::filesystem::path& path);

/// Writes PNG or PPM by extension, rounding to 8 bits. Written atomically.
void write_image(const std::filesystem::path& path, const Frame& frame);

/// True for the extensions read_image understands.
bool is_image_file(const std::filesystem::path& path);

/// Image files in `dir`, sorted by filename.
std::vector<std::filesystem::path> list_images(const std::filesystem::path& dir);

/// Writes through a temporary sibling file, then renames over `path`.
void write_atomically(const std::filesystem::path& path,
                      const std::function<void(std::ostream&)>& writer);

/// 8-bit quantisation used on save: round(clamp(v) * 255 / max).
std::uint8_t to_byte(float value, float max_value);

}  // namespace din
