#pragma once

#include <algorithm>
#include <cmath>

namespace docrec {

/// Normalized coordinate of a pixel center on an axis of `side` pixels.
inline double pixel_center(int px, int side) { return (static_cast<double>(px) + 0.5) / static_cast<double>(side); }

/// Pixel containing a normalized coordinate, clamped to the axis.
inline int to_pixel(double v, int side) {
    const int px = static_cast<int>(std::floor(v * static_cast<double>(side)));
    return std::clamp(px, 0, side - 1);
}

struct PixelPoint {
    int x = 0;
    int y = 0;
    friend bool operator==(const PixelPoint&, const PixelPoint&) = default;
    friend auto operator<=>(const PixelPoint&, const PixelPoint&) = default;
};

}  // namespace docrec
