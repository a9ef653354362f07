#pragma once

#include <png.h>

#include <cmath>
#include <csetjmp>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "error.hpp"
#include "image.hpp"

namespace rsdf {

/// Decoded PNG samples, interleaved, widened to 16 bits without rescaling.
struct png_data {
    int width = 0;
    int height = 0;
    int channels = 0;
    int bit_depth = 0;
    std::vector<std::uint16_t> samples;
};

namespace detail {

struct file_closer {
    void operator()(std::FILE* f) const noexcept {
        if (f != nullptr) std::fclose(f);
    }
};
using file_ptr = std::unique_ptr<std::FILE, file_closer>;

inline void png_silent_warning(png_structp, png_const_charp) {}

inline file_ptr open_file(const std::filesystem::path& path, const char* mode) {
    file_ptr fp(std::fopen(path.c_str(), mode));
    if (!fp) throw format_error("cannot open " + path.string());
    return fp;
}

} // namespace detail

/// Reads 8/16-bit gray, gray+alpha, RGB and RGBA PNGs. Palette and sub-byte gray files are rejected.
inline png_data read_png(const std::filesystem::path& path) {
    auto fp = detail::open_file(path, "rb");
    unsigned char sig[8];
    if (std::fread(sig, 1, 8, fp.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0)
        throw format_error(path.string() + ": not a PNG file");

    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, detail::png_silent_warning);
    if (png == nullptr) throw format_error("libpng initialisation failed");
    png_infop info = png_create_info_struct(png);
    if (info == nullptr) {
        png_destroy_read_struct(&png, nullptr, nullptr);
        throw format_error("libpng initialisation failed");
    }

    png_data out;
    std::vector<png_bytep> rows;
    std::vector<unsigned char> buffer;
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw format_error(path.string() + ": corrupt PNG stream");
    }
    png_init_io(png, fp.get());
    png_set_sig_bytes(png, 8);
    png_read_info(png, info);

    out.width = static_cast<int>(png_get_image_width(png, info));
    out.height = static_cast<int>(png_get_image_height(png, info));
    out.bit_depth = png_get_bit_depth(png, info);
    const int color_type = png_get_color_type(png, info);
    switch (color_type) {
        case PNG_COLOR_TYPE_GRAY: out.channels = 1; break;
        case PNG_COLOR_TYPE_GRAY_ALPHA: out.channels = 2; break;
        case PNG_COLOR_TYPE_RGB: out.channels = 3; break;
        case PNG_COLOR_TYPE_RGB_ALPHA: out.channels = 4; break;
        default: out.channels = 0; break;
    }
    if (out.channels == 0 || (out.bit_depth != 8 && out.bit_depth != 16)) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw format_error(path.string() + ": unsupported PNG layout (color type " + std::to_string(color_type) +
                           ", " + std::to_string(out.bit_depth) + " bit)");
    }

    const std::size_t row_bytes = png_get_rowbytes(png, info);
    buffer.resize(row_bytes * static_cast<std::size_t>(out.height));
    rows.resize(static_cast<std::size_t>(out.height));
    for (int y = 0; y < out.height; ++y) rows[static_cast<std::size_t>(y)] = buffer.data() + row_bytes * y;
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);

    const std::size_t count = static_cast<std::size_t>(out.width) * out.height * out.channels;
    out.samples.resize(count);
    if (out.bit_depth == 8) {
        for (std::size_t i = 0; i < count; ++i) out.samples[i] = buffer[i];
    } else {
        for (std::size_t i = 0; i < count; ++i)
            out.samples[i] = static_cast<std::uint16_t>((buffer[2 * i] << 8) | buffer[2 * i + 1]);
    }
    return out;
}

/// Writes interleaved samples; `bit_depth` is 8 or 16, `channels` 1 or 3.
inline void write_png(const std::filesystem::path& path, int width, int height, int channels, int bit_depth,
                      const std::vector<std::uint16_t>& samples) {
    if (samples.size() != static_cast<std::size_t>(width) * height * channels)
        throw shape_error("sample count does not match PNG dimensions");
    const int bytes = bit_depth / 8;
    const std::size_t row_bytes = static_cast<std::size_t>(width) * channels * bytes;
    std::vector<unsigned char> buffer(row_bytes * height);
    for (std::size_t i = 0; i < samples.size(); ++i) {
        if (bytes == 1) {
            buffer[i] = static_cast<unsigned char>(samples[i]);
        } else {
            buffer[2 * i] = static_cast<unsigned char>(samples[i] >> 8);
            buffer[2 * i + 1] = static_cast<unsigned char>(samples[i] & 0xff);
        }
    }
    std::vector<png_bytep> rows(static_cast<std::size_t>(height));
    for (int y = 0; y < height; ++y) rows[static_cast<std::size_t>(y)] = buffer.data() + row_bytes * y;

    auto fp = detail::open_file(path, "wb");
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, detail::png_silent_warning);
    if (png == nullptr) throw format_error("libpng initialisation failed");
    png_infop info = png_create_info_struct(png);
    if (info == nullptr) {
        png_destroy_write_struct(&png, nullptr);
        throw format_error("libpng initialisation failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw format_error(path.string() + ": PNG write failed");
    }
    png_init_io(png, fp.get());
    png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height), bit_depth,
                 channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    png_write_image(png, rows.data());
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

inline void write_rgb_png(const std::filesystem::path& path, int width, int height, const std::vector<rgb8>& rgb) {
    std::vector<std::uint16_t> s;
    s.reserve(rgb.size() * 3);
    for (const auto& p : rgb) s.insert(s.end(), {p[0], p[1], p[2]});
    write_png(path, width, height, 3, 8, s);
}

/// Saliency (or any [0,1] map) as 8-bit gray, value = round(255 s).
inline void write_saliency_png(const std::filesystem::path& path, const gray_map& map) {
    std::vector<std::uint16_t> s(map.size());
    for (std::size_t i = 0; i < map.size(); ++i)
        s[i] = static_cast<std::uint16_t>(std::lround(255.0 * std::clamp(map.values[i], 0.0, 1.0)));
    write_png(path, map.width, map.height, 1, 8, s);
}

namespace detail {

inline png_data read_single_channel(const std::filesystem::path& path, const char* role) {
    png_data d = read_png(path);
    if (d.channels != 1)
        throw format_error(path.string() + ": " + role + " must be a single-channel gray PNG");
    return d;
}

} // namespace detail

/// Gray PNG as values in [0,1] (divided by the bit-depth maximum).
inline gray_map read_gray_png(const std::filesystem::path& path) {
    const png_data d = detail::read_single_channel(path, "map");
    const double scale = d.bit_depth == 8 ? 255.0 : 65535.0;
    gray_map m(d.width, d.height);
    for (std::size_t i = 0; i < m.size(); ++i) m.values[i] = d.samples[i] / scale;
    return m;
}

/// Loads and aligns an RGB/depth pair plus optional ground truth.
inline rgbd_image load_rgbd(const std::filesystem::path& rgb_path, const std::filesystem::path& depth_path,
                            const std::optional<std::filesystem::path>& gt_path = std::nullopt) {
    const png_data color = read_png(rgb_path);
    if (color.channels != 3 || color.bit_depth != 8)
        throw format_error(rgb_path.string() + ": color input must be an 8-bit 3-channel PNG");
    const png_data depth = detail::read_single_channel(depth_path, "depth");
    if (depth.width != color.width || depth.height != color.height)
        throw alignment_error(depth_path.string() + ": depth is " + std::to_string(depth.width) + "x" +
                              std::to_string(depth.height) + ", color is " + std::to_string(color.width) + "x" +
                              std::to_string(color.height));

    const std::size_t n = static_cast<std::size_t>(color.width) * color.height;
    std::vector<rgb8> rgb(n);
    for (std::size_t i = 0; i < n; ++i)
        rgb[i] = {static_cast<std::uint8_t>(color.samples[3 * i]), static_cast<std::uint8_t>(color.samples[3 * i + 1]),
                  static_cast<std::uint8_t>(color.samples[3 * i + 2])};
    std::vector<double> raw_depth(depth.samples.begin(), depth.samples.end());

    std::optional<std::vector<double>> raw_gt;
    if (gt_path) {
        const png_data gt = detail::read_single_channel(*gt_path, "ground truth");
        if (gt.width != color.width || gt.height != color.height)
            throw alignment_error(gt_path->string() + ": ground truth does not match color dimensions");
        raw_gt.emplace(gt.samples.begin(), gt.samples.end());
    }
    if (raw_gt) return make_rgbd(color.width, color.height, std::move(rgb), raw_depth, std::span<const double>(*raw_gt));
    return make_rgbd(color.width, color.height, std::move(rgb), raw_depth);
}

} // namespace rsdf
