#pragma once

#include "din/frame.hpp"

#include <cstdint>
#include <filesystem>
#include <utility>
#include <vector>

namespace din {

/// Two consecutive RGB frames of a procedurally generated scene: oriented
/// sinusoidal gratings drifting with a global motion, plus a few textured
/// discs and boxes moving independently. Deterministic in `seed`.
std::pair<Frame, Frame> make_moving_texture_pair(std::uint64_t seed, int size);

/// Writes `pairs` scenes as consecutive frames seq_0000.png, seq_0001.png, ...
/// (2 frames per scene), so synth_dataset with stride 2 yields one training
/// pair per scene. Returns the written paths.
std::vector<std::filesystem::path> write_toy_sequence(const std::filesystem::path& dir,
                                                      int pairs, int size, std::uint64_t seed);

}  // namespace din
