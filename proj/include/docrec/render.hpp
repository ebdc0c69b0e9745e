#pragma once

#include <cstdint>

#include "docrec/engines.hpp"
#include "docrec/image.hpp"
#include "docrec/record.hpp"

namespace docrec {

/// Randomized synthesis parameters. Indices index fixed vocabularies of embedded glyphs.
struct RenderStyle {
    int thickness = 1;       // stroke width in pixels
    std::uint8_t gray = 0;   // stroke gray level
    int arrow = 0;           // 0 open, 1 filled, 2 tick
    int font = 0;            // 0 roman, 1 bold, 2 italic, 3 seven-segment
    int font_size = 4;       // glyph height = 6 + font_size pixels
    bool blur = false;       // one 3x3 box blur pass

    void check() const;
    friend bool operator==(const RenderStyle&, const RenderStyle&) = default;
};

/// Samples a style for a domain: L-shapes vary every field, other domains use plain 1-pixel black strokes.
RenderStyle sample_style(Domain domain, std::uint64_t seed);

namespace music_layout {
inline constexpr int kHeight = 100;
inline constexpr int kStaffTop = 34;
inline constexpr int kStaffSpacing = 8;
inline constexpr int kFirstNoteX = 40;
inline constexpr int kNoteAdvance = 16;
inline constexpr int kBarAdvance = 8;

/// Vertical center of a pitch index: 0 is the bottom line, 8 the top line.
constexpr int pitch_y(int pitch) { return kStaffTop + 4 * kStaffSpacing - pitch * (kStaffSpacing / 2); }
}  // namespace music_layout

/// Left x of every note glyph, in record order (notes only).
std::vector<int> music_note_columns(const Record& record);

DocumentImage render_music(const Record& record);
DocumentImage render_shapes(const Record& record, const RenderStyle& style = {});
DocumentImage render_lshape(const Record& record, const RenderStyle& style);

DocumentImage render_record(Domain domain, const Record& record, const RenderStyle& style = {});

/// 3x3 box blur, edges replicate.
DocumentImage box_blur(const DocumentImage& img);

}  // namespace docrec
