#include "din/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <atomic>
#include <cctype>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unistd.h>

namespace fs = std::filesystem;

namespace din {

namespace {

std::string lower_extension(const fs::path& path) {
    std::string ext = path.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(),
                   [](unsigned char ch) { return static_cast<char>(std::tolower(ch)); });
    return ext;
}

fs::path temp_sibling(const fs::path& path) {
    static std::atomic<unsigned> counter{0};
    return path.parent_path() / (path.filename().string() + ".tmp" + std::to_string(::getpid()) +
                                 "_" + std::to_string(counter++));
}

Frame from_interleaved(const std::vector<std::uint8_t>& bytes, int height, int width,
                       int src_channels, int channels) {
    // Drop the bottom row of odd-height images.
    const int h = height - (height % 2);
    if (h == 0) throw std::runtime_error("image has fewer than two rows");
    Frame frame(h, width, channels, PixelRange::unit);
    for (int c = 0; c < channels; ++c)
        for (int y = 0; y < h; ++y) {
            float* dst = frame.row(c, y);
            const std::uint8_t* src = bytes.data() + (static_cast<std::size_t>(y) * width) * src_channels;
            for (int x = 0; x < width; ++x) dst[x] = static_cast<float>(src[x * src_channels + c]) / 255.0f;
        }
    return frame;
}

std::vector<std::uint8_t> to_interleaved(const Frame& frame, int channels) {
    std::vector<std::uint8_t> bytes(static_cast<std::size_t>(frame.height()) * frame.width() * channels);
    for (int y = 0; y < frame.height(); ++y)
        for (int x = 0; x < frame.width(); ++x)
            for (int c = 0; c < channels; ++c) {
                const int src_c = frame.channels() == 1 ? 0 : c;
                bytes[(static_cast<std::size_t>(y) * frame.width() + x) * channels + c] =
                    to_byte(frame.at(src_c, y, x), frame.max_value());
            }
    return bytes;
}

Frame read_png(const fs::path& path) {
    png_image image;
    std::memset(&image, 0, sizeof(image));
    image.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_file(&image, path.c_str()))
        throw std::runtime_error("cannot read PNG " + path.string() + ": " + image.message);
    const bool gray = (image.format & PNG_FORMAT_FLAG_COLOR) == 0;
    image.format = gray ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
    std::vector<std::uint8_t> bytes(PNG_IMAGE_SIZE(image));
    if (!png_image_finish_read(&image, nullptr, bytes.data(), 0, nullptr)) {
        std::string msg = image.message;
        png_image_free(&image);
        throw std::runtime_error("cannot decode PNG " + path.string() + ": " + msg);
    }
    const int channels = gray ? 1 : 3;
    return from_interleaved(bytes, static_cast<int>(image.height), static_cast<int>(image.width),
                            channels, channels);
}

// Skips whitespace and '#' comments between PNM header tokens.
int read_pnm_int(std::istream& in) {
    for (;;) {
        int ch = in.peek();
        if (ch == '#') {
            std::string discard;
            std::getline(in, discard);
        } else if (std::isspace(ch)) {
            in.get();
        } else {
            break;
        }
    }
    int value = -1;
    if (!(in >> value)) throw std::runtime_error("malformed PPM header");
    return value;
}

Frame read_ppm(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    char magic[2] = {};
    in.read(magic, 2);
    if (magic[0] != 'P' || magic[1] != '6') throw std::runtime_error(path.string() + " is not a P6 PPM");
    const int width = read_pnm_int(in);
    const int height = read_pnm_int(in);
    const int maxval = read_pnm_int(in);
    if (width <= 0 || height <= 0) throw std::runtime_error("bad PPM dimensions in " + path.string());
    if (maxval != 255) throw std::runtime_error("only maxval 255 PPM files are supported");
    in.get();  // single whitespace before the raster
    std::vector<std::uint8_t> bytes(static_cast<std::size_t>(width) * height * 3);
    in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (in.gcount() != static_cast<std::streamsize>(bytes.size()))
        throw std::runtime_error("truncated PPM raster in " + path.string());
    return from_interleaved(bytes, height, width, 3, 3);
}

}  // namespace

std::uint8_t to_byte(float value, float max_value) {
    const float scaled = std::clamp(value / max_value, 0.0f, 1.0f) * 255.0f;
    return static_cast<std::uint8_t>(std::lround(scaled));
}

bool is_image_file(const fs::path& path) {
    const auto ext = lower_extension(path);
    return ext == ".png" || ext == ".ppm";
}

std::vector<fs::path> list_images(const fs::path& dir) {
    if (!fs::is_directory(dir)) throw std::runtime_error("not a directory: " + dir.string());
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(dir))
        if (entry.is_regular_file() && is_image_file(entry.path())) files.push_back(entry.path());
    std::sort(files.begin(), files.end(),
              [](const fs::path& a, const fs::path& b) { return a.filename() < b.filename(); });
    return files;
}

Frame read_image(const fs::path& path) {
    const auto ext = lower_extension(path);
    if (ext == ".png") return read_png(path);
    if (ext == ".ppm") return read_ppm(path);
    throw std::runtime_error("unsupported image format: " + path.string());
}

void write_atomically(const fs::path& path, const std::function<void(std::ostream&)>& writer) {
    const fs::path tmp = temp_sibling(path);
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("cannot write " + tmp.string());
        writer(out);
        out.flush();
        if (!out) {
            out.close();
            fs::remove(tmp);
            throw std::runtime_error("write failed for " + path.string());
        }
    }
    fs::rename(tmp, path);
}

void write_image(const fs::path& path, const Frame& frame) {
    if (frame.empty()) throw std::invalid_argument("cannot write an empty frame");
    const auto ext = lower_extension(path);
    if (ext == ".ppm") {
        const auto bytes = to_interleaved(frame, 3);
        write_atomically(path, [&](std::ostream& out) {
            out << "P6\n" << frame.width() << " " << frame.height() << "\n255\n";
            out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
        });
        return;
    }
    if (ext != ".png") throw std::runtime_error("unsupported image format: " + path.string());

    const int channels = frame.channels();
    const auto bytes = to_interleaved(frame, channels);
    png_image image;
    std::memset(&image, 0, sizeof(image));
    image.version = PNG_IMAGE_VERSION;
    image.width = static_cast<png_uint_32>(frame.width());
    image.height = static_cast<png_uint_32>(frame.height());
    image.format = channels == 1 ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
    png_alloc_size_t size = 0;
    if (!png_image_write_get_memory_size(image, size, 0, bytes.data(), 0, nullptr))
        throw std::runtime_error("cannot encode PNG " + path.string() + ": " + image.message);
    std::vector<std::uint8_t> encoded(size);
    if (!png_image_write_to_memory(&image, encoded.data(), &size, 0, bytes.data(), 0, nullptr))
        throw std::runtime_error("cannot encode PNG " + path.string() + ": " + image.message);
    write_atomically(path, [&](std::ostream& out) {
        out.write(reinterpret_cast<const char*>(encoded.data()), static_cast<std::streamsize>(size));
    });
}

}  // namespace din
