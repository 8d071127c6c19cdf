#include "din/interlace.hpp"

#include "din/image_io.hpp"
#include "din/log.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numbers>
#include <optional>
#include <random>
#include <sstream>
#include <stdexcept>
#include <sys/wait.h>
#include <unistd.h>

namespace fs = std::filesystem;

namespace din {

FieldPair split_fields(const Frame& frame) {
    if (frame.height() % 2 != 0)
        throw std::invalid_argument("split_fields: frame height " + std::to_string(frame.height()) +
                                    " is odd; crop it first");
    const int half = frame.height() / 2;
    FieldPair pair{Frame(half, frame.width(), frame.channels(), frame.range()),
                   Frame(half, frame.width(), frame.channels(), frame.range())};
    for (int c = 0; c < frame.channels(); ++c)
        for (int i = 0; i < half; ++i) {
            std::copy_n(frame.row(c, 2 * i), frame.width(), pair.odd_field.row(c, i));
            std::copy_n(frame.row(c, 2 * i + 1), frame.width(), pair.even_field.row(c, i));
        }
    return pair;
}

Frame merge_fields(const FieldPair& pair) {
    const Frame& odd = pair.odd_field;
    const Frame& even = pair.even_field;
    if (!odd.same_shape(even) || odd.range() != even.range())
        throw std::invalid_argument("merge_fields: fields differ in shape or range");
    Frame frame(odd.height() * 2, odd.width(), odd.channels(), odd.range());
    for (int c = 0; c < odd.channels(); ++c)
        for (int i = 0; i < odd.height(); ++i) {
            std::copy_n(odd.row(c, i), odd.width(), frame.row(c, 2 * i));
            std::copy_n(even.row(c, i), odd.width(), frame.row(c, 2 * i + 1));
        }
    return frame;
}

Frame scan_interlaced(const Frame& first, const Frame& second) {
    if (!first.same_shape(second) || first.range() != second.range())
        throw std::invalid_argument("scan_interlaced: frames differ in shape or range");
    if (first.height() % 2 != 0)
        throw std::invalid_argument("scan_interlaced: frame height must be even");
    Frame out = first;
    for (int c = 0; c < first.channels(); ++c)
        for (int y = 1; y < first.height(); y += 2)
            std::copy_n(second.row(c, y), first.width(), out.row(c, y));
    return out;
}

void DegradationConfig::validate() const {
    if (compression == Compression::blockdct && (quality < 1 || quality > 100))
        throw std::invalid_argument("blockdct quality must be in [1, 100], got " +
                                    std::to_string(quality));
    if (compression == Compression::external &&
        (external_command.find("{in}") == std::string::npos ||
         external_command.find("{out}") == std::string::npos))
        throw std::invalid_argument("external command template needs {in} and {out} placeholders");
    if (!std::isfinite(noise_sigma) || noise_sigma < 0.0)
        throw std::invalid_argument("noise sigma must be finite and non-negative");
}

std::array<int, 64> quantization_table(int quality) {
    static constexpr std::array<int, 64> kLuminance = {
        16, 11, 10, 16, 24,  40,  51,  61,  12, 12, 14, 19, 26,  58,  60,  55,
        14, 13, 16, 24, 40,  57,  69,  56,  14, 17, 22, 29, 51,  87,  80,  62,
        18, 22, 37, 56, 68,  109, 103, 77,  24, 35, 55, 64, 81,  104, 113, 92,
        49, 64, 78, 87, 103, 121, 120, 101, 72, 92, 95, 98, 112, 100, 103, 99};
    if (quality < 1 || quality > 100)
        throw std::invalid_argument("quality must be in [1, 100]");
    const int scale = quality < 50 ? 5000 / quality : 200 - 2 * quality;
    std::array<int, 64> table{};
    for (std::size_t i = 0; i < 64; ++i)
        table[i] = std::clamp((kLuminance[i] * scale + 50) / 100, 1, 255);
    return table;
}

namespace {

// Orthonormal 8-point DCT-II basis: basis[u][x].
const std::array<std::array<double, 8>, 8>& dct_basis() {
    static const auto basis = [] {
        std::array<std::array<double, 8>, 8> b{};
        for (int u = 0; u < 8; ++u) {
            const double alpha = u == 0 ? std::sqrt(1.0 / 8.0) : std::sqrt(2.0 / 8.0);
            for (int x = 0; x < 8; ++x)
                b[u][x] = alpha * std::cos((2.0 * x + 1.0) * u * std::numbers::pi / 16.0);
        }
        return b;
    }();
    return basis;
}

using Block = std::array<double, 64>;

Block forward_dct(const Block& in) {
    const auto& b = dct_basis();
    Block tmp{}, out{};
    for (int y = 0; y < 8; ++y)
        for (int u = 0; u < 8; ++u) {
            double s = 0;
            for (int x = 0; x < 8; ++x) s += b[u][x] * in[y * 8 + x];
            tmp[y * 8 + u] = s;
        }
    for (int v = 0; v < 8; ++v)
        for (int u = 0; u < 8; ++u) {
            double s = 0;
            for (int y = 0; y < 8; ++y) s += b[v][y] * tmp[y * 8 + u];
            out[v * 8 + u] = s;
        }
    return out;
}

Block inverse_dct(const Block& in) {
    const auto& b = dct_basis();
    Block tmp{}, out{};
    for (int v = 0; v < 8; ++v)
        for (int x = 0; x < 8; ++x) {
            double s = 0;
            for (int u = 0; u < 8; ++u) s += b[u][x] * in[v * 8 + u];
            tmp[v * 8 + x] = s;
        }
    for (int y = 0; y < 8; ++y)
        for (int x = 0; x < 8; ++x) {
            double s = 0;
            for (int v = 0; v < 8; ++v) s += b[v][y] * tmp[v * 8 + x];
            out[y * 8 + x] = s;
        }
    return out;
}

std::string substitute(std::string text, const std::string& key, const std::string& value) {
    for (auto pos = text.find(key); pos != std::string::npos; pos = text.find(key, pos + value.size()))
        text.replace(pos, key.size(), value);
    return text;
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
    std::array<std::uint32_t, 2> words{};
    seq.generate(words.begin(), words.end());
    return (static_cast<std::uint64_t>(words[0]) << 32) | words[1];
}

}  // namespace

Frame blockdct_compress(const Frame& frame, int quality) {
    const auto table = quantization_table(quality);
    // Work on the 0..255 scale with the usual level shift.
    const float to_byte_scale = 255.0f / frame.max_value();
    Frame out = frame;
    const int h = frame.height(), w = frame.width();
    for (int c = 0; c < frame.channels(); ++c)
        for (int by = 0; by < h; by += 8)
            for (int bx = 0; bx < w; bx += 8) {
                Block block{};
                for (int y = 0; y < 8; ++y)
                    for (int x = 0; x < 8; ++x) {
                        const int sy = std::min(by + y, h - 1);
                        const int sx = std::min(bx + x, w - 1);
                        block[y * 8 + x] = frame.at(c, sy, sx) * to_byte_scale - 128.0;
                    }
                Block coeffs = forward_dct(block);
                for (std::size_t i = 0; i < 64; ++i)
                    coeffs[i] = std::round(coeffs[i] / table[i]) * table[i];
                const Block rec = inverse_dct(coeffs);
                for (int y = 0; y < 8 && by + y < h; ++y)
                    for (int x = 0; x < 8 && bx + x < w; ++x) {
                        const double v = std::clamp(rec[y * 8 + x] + 128.0, 0.0, 255.0);
                        out.at(c, by + y, bx + x) = static_cast<float>(v) / to_byte_scale;
                    }
            }
    return out;
}

Frame external_compress(const Frame& frame, const std::string& command_template) {
    static std::atomic<unsigned> counter{0};
    const std::string stem = "din_ext_" + std::to_string(::getpid()) + "_" + std::to_string(counter++);
    const fs::path dir = fs::temp_directory_path();
    const fs::path in = dir / (stem + "_in.png");
    const fs::path out = dir / (stem + "_out.png");
    write_image(in, frame.to_range(PixelRange::unit));
    const std::string command =
        substitute(substitute(command_template, "{in}", in.string()), "{out}", out.string());
    const int status = std::system(command.c_str());
    std::error_code ignored;
    fs::remove(in, ignored);
    const int exit_code = status == -1 ? -1 : (WIFEXITED(status) ? WEXITSTATUS(status) : 128 + WTERMSIG(status));
    if (exit_code != 0) {
        fs::remove(out, ignored);
        throw std::runtime_error("external compression command failed with exit status " +
                                 std::to_string(exit_code) + ": " + command);
    }
    Frame result = read_image(out);
    fs::remove(out, ignored);
    if (!result.same_shape(frame))
        throw std::runtime_error("external compression changed the frame shape");
    return result.to_range(frame.range());
}

Frame degrade(const Frame& frame, const DegradationConfig& cfg) {
    cfg.validate();
    Frame out = frame;
    switch (cfg.compression) {
        case Compression::none: break;
        case Compression::blockdct: out = blockdct_compress(frame, cfg.quality); break;
        case Compression::external: out = external_compress(frame, cfg.external_command); break;
    }
    if (cfg.noise_sigma > 0.0) {
        std::mt19937_64 rng(cfg.seed);
        std::normal_distribution<double> noise(0.0, cfg.noise_sigma * frame.max_value());
        for (auto& v : out.pixels()) v = static_cast<float>(v + noise(rng));
    }
    return out.clamped();
}

Manifest read_manifest(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open manifest " + path.string());
    Manifest manifest;
    manifest.root = path.parent_path();
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto tab = line.find('\t');
        if (tab == std::string::npos || line.find('\t', tab + 1) != std::string::npos)
            throw std::runtime_error(path.string() + ":" + std::to_string(line_no) +
                                     ": expected input<TAB>target");
        manifest.entries.push_back({fs::path(line.substr(0, tab)), fs::path(line.substr(tab + 1))});
    }
    return manifest;
}

void write_manifest(const fs::path& path, const Manifest& manifest) {
    write_atomically(path, [&](std::ostream& out) {
        for (const auto& e : manifest.entries)
            out << e.input.generic_string() << '\t' << e.target.generic_string() << '\n';
    });
}

Manifest synth_dataset(const fs::path& frames_dir, const fs::path& out_dir,
                       const DegradationConfig& cfg, int stride) {
    cfg.validate();
    if (stride < 1) throw std::invalid_argument("stride must be >= 1");
    const auto files = list_images(frames_dir);
    if (files.size() < 2)
        throw std::runtime_error("synth_dataset needs at least 2 frames in " + frames_dir.string() +
                                 ", found " + std::to_string(files.size()));
    fs::create_directories(out_dir);

    std::map<std::size_t, std::optional<Frame>> cache;
    auto load = [&](std::size_t i) -> const std::optional<Frame>& {
        auto it = cache.find(i);
        if (it != cache.end()) return it->second;
        std::optional<Frame> frame;
        try {
            frame = read_image(files[i]);
        } catch (const std::exception& e) {
            log_warning("skipping unreadable frame " + files[i].string() + ": " + e.what());
        }
        return cache.emplace(i, std::move(frame)).first->second;
    };

    Manifest manifest;
    manifest.root = out_dir;
    for (std::size_t t = 0; t + 1 < files.size(); t += static_cast<std::size_t>(stride)) {
        const auto& first = load(t);
        const auto& second = load(t + 1);
        // Frames behind the sampling window are no longer needed.
        cache.erase(cache.begin(), cache.lower_bound(t));
        if (!first || !second) continue;

        DegradationConfig pair_cfg = cfg;
        pair_cfg.seed = derive_seed(cfg.seed, t);
        const Frame degraded = degrade(scan_interlaced(*first, *second), pair_cfg);

        char name[64];
        std::snprintf(name, sizeof(name), "%06zu.png", t);
        const fs::path input = std::string("input_") + name;
        const fs::path target = std::string("target_") + name;
        write_image(out_dir / input, degraded);
        write_image(out_dir / target, *first);
        manifest.entries.push_back({input, target});
    }
    write_manifest(out_dir / "manifest.tsv", manifest);
    return manifest;
}

}  // namespace din
