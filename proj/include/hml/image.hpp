#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "hml/hierarchy.hpp"

namespace hml {

// 8-bit grayscale image, row-major.
struct ImageMatrix {
    int height = 0;
    int width = 0;
    std::vector<std::uint8_t> pixels;

    ImageMatrix() = default;
    ImageMatrix(int h, int w, std::uint8_t fill = 0)
        : height(h), width(w), pixels(static_cast<std::size_t>(h) * w, fill) {}

    std::uint8_t& at(int r, int c) { return pixels[static_cast<std::size_t>(r) * width + c]; }
    std::uint8_t at(int r, int c) const { return pixels[static_cast<std::size_t>(r) * width + c]; }
    bool operator==(const ImageMatrix&) const = default;
};

// Binary PGM (P5), maxval 255.
ImageMatrix load_pgm(const std::string& path);
void save_pgm(const ImageMatrix& image, const std::string& path);

// Nearest-neighbor resampling; deterministic.
ImageMatrix resize_nn(const ImageMatrix& image, int new_height, int new_width);
// Rotation about the image center, nearest-neighbor; pixels sampled from
// outside the source keep the edge value (clamped).
ImageMatrix rotate_nn(const ImageMatrix& image, double degrees);
ImageMatrix crop(const ImageMatrix& image, const PatchRect& rect);
// Copies src into dst at (top, left); src must fit.
void paste(ImageMatrix& dst, const ImageMatrix& src, int top, int left);

} // namespace hml
