#pragma once

// Minimal libpng wrappers: 8/16-bit gray or RGB in, 16-bit out.

#include <png.h>

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace svfit::io {

/// Decoded PNG samples scaled to [0,1], channel-major (planar).
struct PngData {
    int width = 0;
    int height = 0;
    int channels = 0;  // 1 or 3 (alpha is dropped)
    int bit_depth = 0; // of the file: 8 or 16
    std::vector<double> planes;

    double at(int c, int y, int x) const {
        return planes[(static_cast<std::size_t>(c) * height + y) * width + x];
    }
};

namespace detail {

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};
using File = std::unique_ptr<std::FILE, FileCloser>;

[[noreturn]] inline void png_fail(png_structp, png_const_charp msg) { throw std::runtime_error(msg); }
inline void png_warn(png_structp, png_const_charp) {}

}  // namespace detail

inline PngData read_png(const std::string& path) {
    detail::File f(std::fopen(path.c_str(), "rb"));
    if (!f) throw std::runtime_error("cannot open " + path);
    png_byte sig[8];
    if (std::fread(sig, 1, 8, f.get()) != 8 || png_sig_cmp(sig, 0, 8))
        throw std::runtime_error(path + ": not a PNG file");
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, detail::png_fail, detail::png_warn);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!info) {
        png_destroy_read_struct(&png, nullptr, nullptr);
        throw std::runtime_error("libpng: out of memory");
    }
    PngData out;
    try {
        png_init_io(png, f.get());
        png_set_sig_bytes(png, 8);
        png_read_info(png, info);
        const int color = png_get_color_type(png, info);
        const int depth = png_get_bit_depth(png, info);
        if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
        if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
        if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
        if (color & PNG_COLOR_MASK_ALPHA || png_get_valid(png, info, PNG_INFO_tRNS)) png_set_strip_alpha(png);
        if (depth == 16) png_set_swap(png);
        png_read_update_info(png, info);

        out.width = static_cast<int>(png_get_image_width(png, info));
        out.height = static_cast<int>(png_get_image_height(png, info));
        out.bit_depth = png_get_bit_depth(png, info);
        out.channels = png_get_channels(png, info);
        if (out.channels != 1 && out.channels != 3)
            throw std::runtime_error(path + ": unsupported channel layout");
        const std::size_t rowbytes = png_get_rowbytes(png, info);
        std::vector<png_byte> buf(rowbytes * out.height);
        std::vector<png_bytep> rows(out.height);
        for (int y = 0; y < out.height; ++y) rows[y] = buf.data() + y * rowbytes;
        png_read_image(png, rows.data());
        png_read_end(png, nullptr);

        const double scale = out.bit_depth == 16 ? 1.0 / 65535.0 : 1.0 / 255.0;
        out.planes.resize(static_cast<std::size_t>(out.channels) * out.width * out.height);
        for (int y = 0; y < out.height; ++y)
            for (int x = 0; x < out.width; ++x)
                for (int c = 0; c < out.channels; ++c) {
                    const std::size_t k = static_cast<std::size_t>(x) * out.channels + c;
                    double v = out.bit_depth == 16 ? reinterpret_cast<const std::uint16_t*>(rows[y])[k]
                                                   : rows[y][k];
                    out.planes[(static_cast<std::size_t>(c) * out.height + y) * out.width + x] = v * scale;
                }
    } catch (const std::exception& e) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw std::runtime_error(path + ": " + e.what());
    }
    png_destroy_read_struct(&png, &info, nullptr);
    return out;
}

/// Writes planar samples in [0,1] (clamped) as a 16-bit gray or RGB PNG.
inline void write_png16(const std::string& path, int width, int height, int channels,
                        const std::vector<double>& planes) {
    if (channels != 1 && channels != 3) throw std::invalid_argument("write_png16: channels must be 1 or 3");
    if (planes.size() != static_cast<std::size_t>(width) * height * channels)
        throw std::invalid_argument("write_png16: sample count does not match size");
    detail::File f(std::fopen(path.c_str(), "wb"));
    if (!f) throw std::runtime_error("cannot write " + path);
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, detail::png_fail, detail::png_warn);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!info) {
        png_destroy_write_struct(&png, nullptr);
        throw std::runtime_error("libpng: out of memory");
    }
    try {
        png_init_io(png, f.get());
        png_set_IHDR(png, info, width, height, 16, channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB,
                     PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
        png_write_info(png, info);
        png_set_swap(png);
        std::vector<std::uint16_t> row(static_cast<std::size_t>(width) * channels);
        for (int y = 0; y < height; ++y) {
            for (int x = 0; x < width; ++x)
                for (int c = 0; c < channels; ++c) {
                    double v = planes[(static_cast<std::size_t>(c) * height + y) * width + x];
                    v = std::isfinite(v) ? std::min(std::max(v, 0.0), 1.0) : 0.0;
                    row[static_cast<std::size_t>(x) * channels + c] =
                        static_cast<std::uint16_t>(std::lround(v * 65535.0));
                }
            png_write_row(png, reinterpret_cast<png_bytep>(row.data()));
        }
        png_write_end(png, nullptr);
    } catch (const std::exception& e) {
        png_destroy_write_struct(&png, &info);
        throw std::runtime_error(path + ": " + e.what());
    }
    png_destroy_write_struct(&png, &info);
}

}  // namespace svfit::io
