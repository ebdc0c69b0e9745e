#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace docrec {

/// Single-channel raster page: row-major bytes, 0 = black ink, 255 = white background.
struct DocumentImage {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> pixels;

    DocumentImage() = default;
    DocumentImage(int w, int h, std::uint8_t fill = 255)
        : width(w), height(h), pixels(static_cast<std::size_t>(w) * static_cast<std::size_t>(h), fill) {}

    std::uint8_t at(int x, int y) const { return pixels[static_cast<std::size_t>(y) * static_cast<std::size_t>(width) + static_cast<std::size_t>(x)]; }
    std::uint8_t& at(int x, int y) { return pixels[static_cast<std::size_t>(y) * static_cast<std::size_t>(width) + static_cast<std::size_t>(x)]; }
    bool contains(int x, int y) const { return x >= 0 && y >= 0 && x < width && y < height; }

    friend bool operator==(const DocumentImage&, const DocumentImage&) = default;
};

/// 8-bit grayscale PNG.
void write_png(const std::string& path, const DocumentImage& img);
DocumentImage read_png(const std::string& path);

}  // namespace docrec
