// Copyright 2026 The SegAlign Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

// Thin libpng wrappers for the three pixel layouts the pipeline persists:
// 8-bit grayscale (label maps), 16-bit grayscale (mask-ID / superpixel maps)
// and 8-bit RGB (input images). 16-bit samples are staged through an
// explicit big-endian buffer, so files are identical on any host.

#include <cstdint>
#include <cstdio>
#include <csetjmp>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <png.h>

#include "segalign/error.hpp"
#include "segalign/rle.hpp"

namespace segalign {

/// Interleaved 8-bit RGB image, row-major.
struct RgbImage {
    int height = 0;
    int width = 0;
    std::vector<std::uint8_t> px;  // height*width*3
};

namespace detail {

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

struct PngReader {
    png_structp png = nullptr;
    png_infop info = nullptr;

    PngReader() {
        png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
        if (png) info = png_create_info_struct(png);
        if (!png || !info) {
            if (png) png_destroy_read_struct(&png, info ? &info : nullptr, nullptr);
            throw IoError("libpng allocation failed");
        }
    }
    ~PngReader() { png_destroy_read_struct(&png, &info, nullptr); }
    PngReader(const PngReader&) = delete;
    PngReader& operator=(const PngReader&) = delete;
};

struct PngWriter {
    png_structp png = nullptr;
    png_infop info = nullptr;

    PngWriter() {
        png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
        if (png) info = png_create_info_struct(png);
        if (!png || !info) {
            if (png) png_destroy_write_struct(&png, info ? &info : nullptr);
            throw IoError("libpng allocation failed");
        }
    }
    ~PngWriter() { png_destroy_write_struct(&png, &info); }
    PngWriter(const PngWriter&) = delete;
    PngWriter& operator=(const PngWriter&) = delete;
};

// Reads any PNG into `out` rows; transform selects gray8 / gray16 / rgb8.
enum class PngLayout { Gray8, Gray16, Rgb8 };

inline void read_png(const std::string& path, PngLayout layout, int& height, int& width,
                     std::vector<std::uint8_t>& out) {
    FilePtr fp(std::fopen(path.c_str(), "rb"));
    if (!fp) throw IoError("cannot open PNG " + path);

    PngReader r;
    std::vector<png_bytep> rows;
    // NOLINTNEXTLINE(cert-err52-cpp): libpng's error contract
    if (setjmp(png_jmpbuf(r.png))) {
        throw IoError("failed to decode PNG " + path);
    }
    png_init_io(r.png, fp.get());
    png_read_info(r.png, r.info);

    width = static_cast<int>(png_get_image_width(r.png, r.info));
    height = static_cast<int>(png_get_image_height(r.png, r.info));
    const int bit_depth = png_get_bit_depth(r.png, r.info);
    const int color_type = png_get_color_type(r.png, r.info);
    if (width <= 0 || height <= 0) throw IoError("PNG has empty dimensions: " + path);

    std::size_t bytes_per_px = 0;
    switch (layout) {
        case PngLayout::Gray8:
            if (color_type != PNG_COLOR_TYPE_GRAY || bit_depth != 8) {
                throw IoError(path + ": expected 8-bit grayscale PNG");
            }
            bytes_per_px = 1;
            break;
        case PngLayout::Gray16:
            if (color_type != PNG_COLOR_TYPE_GRAY || bit_depth != 16) {
                throw IoError(path + ": expected 16-bit grayscale PNG");
            }
            bytes_per_px = 2;  // big-endian in-file order, converted by caller
            break;
        case PngLayout::Rgb8:
            // Accept palette / gray / alpha inputs and normalize to RGB8.
            if (color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(r.png);
            if (color_type == PNG_COLOR_TYPE_GRAY && bit_depth < 8) {
                png_set_expand_gray_1_2_4_to_8(r.png);
            }
            if (png_get_valid(r.png, r.info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(r.png);
            if (bit_depth == 16) png_set_strip_16(r.png);
            if (color_type == PNG_COLOR_TYPE_GRAY || color_type == PNG_COLOR_TYPE_GRAY_ALPHA) {
                png_set_gray_to_rgb(r.png);
            }
            png_set_strip_alpha(r.png);
            bytes_per_px = 3;
            break;
    }
    png_read_update_info(r.png, r.info);
    if (png_get_rowbytes(r.png, r.info) != static_cast<std::size_t>(width) * bytes_per_px) {
        throw IoError(path + ": unexpected PNG row layout");
    }

    out.resize(static_cast<std::size_t>(height) * width * bytes_per_px);
    rows.resize(static_cast<std::size_t>(height));
    for (int y = 0; y < height; ++y) {
        rows[static_cast<std::size_t>(y)] = out.data() + static_cast<std::size_t>(y) * width * bytes_per_px;
    }
    png_read_image(r.png, rows.data());
    png_read_end(r.png, nullptr);
}

inline void write_png(const std::string& path, int height, int width, int bit_depth, int color_type,
                      const std::uint8_t* data, std::size_t bytes_per_px) {
    if (height <= 0 || width <= 0) throw ShapeError("PNG dimensions must be positive");
    FilePtr fp(std::fopen(path.c_str(), "wb"));
    if (!fp) throw IoError("cannot open " + path + " for writing");

    PngWriter w;
    std::vector<png_bytep> rows(static_cast<std::size_t>(height));
    // NOLINTNEXTLINE(cert-err52-cpp)
    if (setjmp(png_jmpbuf(w.png))) {
        throw IoError("failed to encode PNG " + path);
    }
    png_init_io(w.png, fp.get());
    png_set_IHDR(w.png, w.info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height),
                 bit_depth, color_type, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
                 PNG_FILTER_TYPE_DEFAULT);
    png_write_info(w.png, w.info);
    for (int y = 0; y < height; ++y) {
        rows[static_cast<std::size_t>(y)] =
            const_cast<png_bytep>(data + static_cast<std::size_t>(y) * width * bytes_per_px);
    }
    png_write_image(w.png, rows.data());
    png_write_end(w.png, nullptr);
}

}  // namespace detail

inline std::vector<std::uint8_t> read_png_gray8(const std::string& path, int& height, int& width) {
    std::vector<std::uint8_t> out;
    detail::read_png(path, detail::PngLayout::Gray8, height, width, out);
    return out;
}

inline void write_png_gray8(const std::string& path, int height, int width,
                            std::span<const std::uint8_t> px) {
    if (px.size() != static_cast<std::size_t>(height) * width) {
        throw ShapeError("gray8 buffer does not match dimensions");
    }
    detail::write_png(path, height, width, 8, PNG_COLOR_TYPE_GRAY, px.data(), 1);
}

inline std::vector<std::uint16_t> read_png_gray16(const std::string& path, int& height, int& width) {
    std::vector<std::uint8_t> raw;
    detail::read_png(path, detail::PngLayout::Gray16, height, width, raw);
    std::vector<std::uint16_t> out(raw.size() / 2);
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = static_cast<std::uint16_t>((raw[2 * i] << 8) | raw[2 * i + 1]);
    }
    return out;
}

inline void write_png_gray16(const std::string& path, int height, int width,
                             std::span<const std::uint16_t> px) {
    if (px.size() != static_cast<std::size_t>(height) * width) {
        throw ShapeError("gray16 buffer does not match dimensions");
    }
    std::vector<std::uint8_t> be(px.size() * 2);
    for (std::size_t i = 0; i < px.size(); ++i) {
        be[2 * i] = static_cast<std::uint8_t>(px[i] >> 8);
        be[2 * i + 1] = static_cast<std::uint8_t>(px[i] & 0xFF);
    }
    detail::write_png(path, height, width, 16, PNG_COLOR_TYPE_GRAY, be.data(), 2);
}

inline RgbImage read_png_rgb8(const std::string& path) {
    RgbImage img;
    detail::read_png(path, detail::PngLayout::Rgb8, img.height, img.width, img.px);
    return img;
}

inline void write_png_rgb8(const std::string& path, const RgbImage& img) {
    if (img.px.size() != static_cast<std::size_t>(img.height) * img.width * 3) {
        throw ShapeError("rgb8 buffer does not match dimensions");
    }
    detail::write_png(path, img.height, img.width, 8, PNG_COLOR_TYPE_RGB, img.px.data(), 3);
}

}  // namespace segalign
