#pragma once

#include <string_view>
#include <vector>

namespace docrec::glyphs {

/// Monochrome bitmap: '#' marks ink, anything else is background.
struct Bitmap {
    int width = 0;
    int height = 0;
    std::vector<std::string_view> rows;

    bool ink(int x, int y) const { return rows[static_cast<std::size_t>(y)][static_cast<std::size_t>(x)] == '#'; }
};

const Bitmap& treble_clef();
const Bitmap& bass_clef();
const Bitmap& common_time();
const Bitmap& filled_head();
const Bitmap& hollow_head();

/// Base 5x7 digit shapes shared by the roman, bold and italic fonts.
const Bitmap& digit(int d);

/// Seven-segment digit drawn on a w x h grid; a second font family.
std::vector<std::vector<bool>> segment_digit(int d, int w, int h);

inline constexpr int kFontCount = 4;
inline constexpr int kFontSizeCount = 10;
inline constexpr int kArrowStyleCount = 3;

}  // namespace docrec::glyphs
