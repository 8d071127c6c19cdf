#include "din/checkpoint.hpp"

#include "din/image_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>
#include <stdexcept>

namespace din {

namespace {

constexpr const char* kMagic = "DIN1";

std::string dims(const Shape& s, bool bias) {
    if (bias) return std::to_string(s.n);
    return std::to_string(s.n) + " " + std::to_string(s.c) + " " + std::to_string(s.h) + " " +
           std::to_string(s.w);
}

void put_float(std::string& out, float value) {
    auto bits = std::bit_cast<std::uint32_t>(value);
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xFFu));
}

float get_float(const char* p) {
    std::uint32_t bits = 0;
    for (int i = 0; i < 4; ++i) bits |= static_cast<std::uint32_t>(static_cast<unsigned char>(p[i])) << (8 * i);
    return std::bit_cast<float>(bits);
}

[[noreturn]] void bad(const std::string& what) {
    throw std::runtime_error("invalid DIN1 checkpoint: " + what);
}

}  // namespace

std::string encode_checkpoint(const DinParams<float>& params) {
    const DinConfig& c = params.config;
    std::ostringstream header;
    header << kMagic << '\n'
           << "base_channels " << c.base_channels << '\n'
           << "cis_blocks " << c.cis_blocks << '\n'
           << "fms_base_blocks_pre " << c.fms_base_blocks_pre << '\n'
           << "fms_base_blocks_post " << c.fms_base_blocks_post << '\n'
           << "fms_down_blocks " << c.fms_down_blocks << '\n'
           << "in_channels " << c.in_channels << '\n'
           << "out_channels " << c.out_channels << '\n'
           << "layers " << params.layers.size() * 2 << '\n';
    for (const auto& l : params.layers) {
        header << l.name << ".weight " << dims(l.weight.shape(), false) << '\n';
        header << l.name << ".bias " << dims(l.bias.shape(), true) << '\n';
    }
    header << "end\n";

    std::string out = header.str();
    out.reserve(out.size() + param_count(params) * 4);
    for (const auto& l : params.layers) {
        for (float v : l.weight.data()) put_float(out, v);
        for (float v : l.bias.data()) put_float(out, v);
    }
    return out;
}

DinParams<float> decode_checkpoint(const std::string& bytes) {
    std::size_t pos = 0;
    auto next_line = [&]() {
        const auto nl = bytes.find('\n', pos);
        if (nl == std::string::npos) bad("truncated header");
        std::string line = bytes.substr(pos, nl - pos);
        pos = nl + 1;
        return line;
    };
    if (next_line() != kMagic) bad("missing DIN1 magic");

    DinConfig cfg;
    auto read_field = [&](const char* key, int& field) {
        std::istringstream line(next_line());
        std::string name;
        if (!(line >> name >> field) || name != key) bad(std::string("expected ") + key);
    };
    read_field("base_channels", cfg.base_channels);
    read_field("cis_blocks", cfg.cis_blocks);
    read_field("fms_base_blocks_pre", cfg.fms_base_blocks_pre);
    read_field("fms_base_blocks_post", cfg.fms_base_blocks_post);
    read_field("fms_down_blocks", cfg.fms_down_blocks);
    read_field("in_channels", cfg.in_channels);
    read_field("out_channels", cfg.out_channels);
    int tensor_count = 0;
    read_field("layers", tensor_count);

    // Rebuild the topology, then check the manifest against it.
    DinParams<float> params = build<float>(cfg, 0);
    if (static_cast<std::size_t>(tensor_count) != params.layers.size() * 2)
        bad("tensor count does not match the configuration");
    for (const auto& l : params.layers) {
        const std::string expect_w = l.name + ".weight " + dims(l.weight.shape(), false);
        const std::string expect_b = l.name + ".bias " + dims(l.bias.shape(), true);
        if (next_line() != expect_w) bad("manifest entry mismatch, expected '" + expect_w + "'");
        if (next_line() != expect_b) bad("manifest entry mismatch, expected '" + expect_b + "'");
    }
    if (next_line() != "end") bad("missing end of header");

    const std::size_t needed = param_count(params) * 4;
    if (bytes.size() - pos != needed)
        bad("expected " + std::to_string(needed) + " bytes of weights, found " +
            std::to_string(bytes.size() - pos));
    const char* p = bytes.data() + pos;
    for (auto& l : params.layers) {
        for (auto* t : {&l.weight, &l.bias})
            for (float& v : t->mutable_data()) {
                v = get_float(p);
                p += 4;
            }
    }
    return params;
}

void save_checkpoint(const std::filesystem::path& path, const DinParams<float>& params) {
    const std::string bytes = encode_checkpoint(params);
    write_atomically(path, [&](std::ostream& out) {
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    });
}

DinParams<float> load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open checkpoint " + path.string());
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return decode_checkpoint(bytes);
}

}  // namespace din
