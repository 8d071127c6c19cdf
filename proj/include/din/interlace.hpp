#pragma once

#include "din/frame.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

namespace din {

/// Rows 0, 2, 4, ... become the odd (top) field, rows 1, 3, 5, ... the even
/// (bottom) field. Requires an even height.
FieldPair split_fields(const Frame& frame);

/// Inverse of split_fields.
Frame merge_fields(const FieldPair& pair);

/// Interlaced scan of two consecutive frames: the top field is taken from
/// `first`, the bottom field from `second`.
Frame scan_interlaced(const Frame& first, const Frame& second);

enum class Compression { none, blockdct, external };

/// Synthetic corruption applied after scanning: a compression surrogate
/// followed by additive Gaussian noise.
struct DegradationConfig {
    Compression compression = Compression::none;
    int quality = 75;                 // blockdct quality, 1..100
    std::string external_command;     // template with {in} and {out}
    double noise_sigma = 0.0;         // in [0, 1] intensity units
    std::uint64_t seed = 0;

    void validate() const;
};

/// JPEG luminance quantisation table scaled for `quality` with the libjpeg
/// rule (q < 50: 5000 / q, else 200 - 2q percent), entries clamped to [1, 255].
std::array<int, 64> quantization_table(int quality);

/// 8x8 block DCT quantisation round trip on every channel. Partial blocks at
/// the right/bottom edge are padded by replication.
Frame blockdct_compress(const Frame& frame, int quality);

/// Writes the frame to a temporary PNG, runs the command template with {in}
/// and {out} substituted, and reads the result back.
Frame external_compress(const Frame& frame, const std::string& command_template);

/// Compression surrogate, then noise, then clamping. Deterministic in cfg.seed.
Frame degrade(const Frame& frame, const DegradationConfig& cfg);

struct ManifestEntry {
    std::filesystem::path input;
    std::filesystem::path target;
    bool operator==(const ManifestEntry&) const = default;
};

/// (input, target) pairs. Paths in the file are stored relative to the
/// manifest's directory.
struct Manifest {
    std::filesystem::path root;
    std::vector<ManifestEntry> entries;

    std::size_t size() const { return entries.size(); }
    /// Relative entries are resolved against `root`.
    std::filesystem::path resolve(const std::filesystem::path& p) const {
        return p.is_absolute() ? p : root / p;
    }
};

Manifest read_manifest(const std::filesystem::path& path);
void write_manifest(const std::filesystem::path& path, const Manifest& manifest);

/// Builds an interlaced dataset from an ordered frame directory: for every
/// pair (f_t, f_t+1) with t = 0, stride, 2*stride, ... writes
/// degrade(scan_interlaced(f_t, f_t+1)) and the ground truth f_t, then
/// `manifest.tsv` listing them. Pairs touching an unreadable frame are skipped.
Manifest synth_dataset(const std::filesystem::path& frames_dir,
                       const std::filesystem::path& out_dir, const DegradationConfig& cfg,
                       int stride = 1);

}  // namespace din
