#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include <png.h>

#include "sr/tensor.hpp"

namespace sr {

// Reads a PNG as a (3, H, W) tensor scaled to [0, 1].  Grayscale, palette,
// and alpha variants are expanded to 8-bit RGB by libpng.
inline Tensor read_png(const std::string& path) {
    png_image img{};
    img.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_file(&img, path.c_str()))
        throw std::runtime_error("cannot read image: " + path + ": " + img.message);
    img.format = PNG_FORMAT_RGB;
    std::vector<std::uint8_t> raw(PNG_IMAGE_SIZE(img));
    if (!png_image_finish_read(&img, nullptr, raw.data(), 0, nullptr)) {
        const std::string msg = img.message;
        png_image_free(&img);
        throw std::runtime_error("cannot decode image: " + path + ": " + msg);
    }
    const int h = static_cast<int>(img.height);
    const int w = static_cast<int>(img.width);
    Tensor t({3, h, w});
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < 3; ++c)
                t(c, y, x) = raw[(static_cast<std::size_t>(y) * w + x) * 3 + c] / 255.0;
    return t;
}

// Writes a (3, H, W) or (1, H, W) tensor as an 8-bit PNG.  Values are clamped
// to [0, 1] and quantized with round-half-up.
inline void write_png(const Tensor& t, const std::string& path) {
    if (t.dims[0] != 3 && t.dims[0] != 1)
        throw std::invalid_argument("write_png: image must have 1 or 3 channels");
    const int h = t.height(), w = t.width();
    const bool gray = t.dims[0] == 1;
    const int stride = gray ? 1 : 3;
    std::vector<std::uint8_t> raw(static_cast<std::size_t>(h) * w * stride);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < stride; ++c) {
                double v = t(c, y, x);
                v = v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v);
                raw[(static_cast<std::size_t>(y) * w + x) * stride + c] =
                    static_cast<std::uint8_t>(std::floor(v * 255.0 + 0.5));
            }
    png_image img{};
    img.version = PNG_IMAGE_VERSION;
    img.width = static_cast<png_uint_32>(w);
    img.height = static_cast<png_uint_32>(h);
    img.format = gray ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
    if (!png_image_write_to_file(&img, path.c_str(), 0, raw.data(), 0, nullptr))
        throw std::runtime_error("cannot write image: " + path + ": " + img.message);
}

}  // namespace sr
