#pragma once

#include "din/model.hpp"

#include <filesystem>
#include <string>

namespace din {

// DIN1 checkpoint layout:
//
//   DIN1\n
//   <key> <value>\n            one line per DinConfig field
//   layers <count>\n
//   <tensor name> <dims...>\n  one line per weight/bias, in manifest order
//   end\n
//   <raw float32 little-endian values of every tensor, same order>
//
// The header is plain ASCII (valid UTF-8).

void save_checkpoint(const std::filesystem::path& path, const DinParams<float>& params);
DinParams<float> load_checkpoint(const std::filesystem::path& path);

/// Serialised form, for callers that need the bytes (hashing, tests).
std::string encode_checkpoint(const DinParams<float>& params);
DinParams<float> decode_checkpoint(const std::string& bytes);

}  // namespace din
