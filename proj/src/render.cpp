#include "docrec/render.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <string>

#include "docrec/geometry.hpp"
#include "docrec/rng.hpp"
#include "glyphs.hpp"

namespace docrec {

namespace {

/// Ink-only drawing surface: darker values win, so overlapping strokes never lighten.
class Canvas {
public:
    Canvas(int w, int h) : img_(w, h) {}

    void plot(int x, int y, std::uint8_t value) {
        if (!img_.contains(x, y)) return;
        auto& p = img_.at(x, y);
        p = std::min(p, value);
    }

    void stamp(int x, int y, int thickness, std::uint8_t value) {
        const int lo = -(thickness - 1) / 2;
        for (int dy = lo; dy < lo + thickness; ++dy) {
            for (int dx = lo; dx < lo + thickness; ++dx) plot(x + dx, y + dy, value);
        }
    }

    // Integer Bresenham, endpoints inclusive.
    void line(PixelPoint a, PixelPoint b, int thickness, std::uint8_t value) {
        int x = a.x, y = a.y;
        const int dx = std::abs(b.x - a.x), sx = a.x < b.x ? 1 : -1;
        const int dy = -std::abs(b.y - a.y), sy = a.y < b.y ? 1 : -1;
        int err = dx + dy;
        for (;;) {
            stamp(x, y, thickness, value);
            if (x == b.x && y == b.y) break;
            const int e2 = 2 * err;
            if (e2 >= dy) {
                err += dy;
                x += sx;
            }
            if (e2 <= dx) {
                err += dx;
                y += sy;
            }
        }
    }

    // Midpoint circle, eight-way symmetric.
    void circle(PixelPoint c, int r, int thickness, std::uint8_t value) {
        int x = r, y = 0, err = 1 - r;
        while (x >= y) {
            const std::array<PixelPoint, 8> pts{{{c.x + x, c.y + y}, {c.x + y, c.y + x}, {c.x - y, c.y + x}, {c.x - x, c.y + y},
                                                 {c.x - x, c.y - y}, {c.x - y, c.y - x}, {c.x + y, c.y - x}, {c.x + x, c.y - y}}};
            for (const auto& p : pts) stamp(p.x, p.y, thickness, value);
            ++y;
            if (err < 0) {
                err += 2 * y + 1;
            } else {
                --x;
                err += 2 * (y - x) + 1;
            }
        }
    }

    void bitmap(const glyphs::Bitmap& g, int x0, int y0, int scale_x, int scale_y, std::uint8_t value) {
        for (int y = 0; y < g.height * scale_y; ++y) {
            for (int x = 0; x < g.width * scale_x; ++x) {
                if (g.ink(x / scale_x, y / scale_y)) plot(x0 + x, y0 + y, value);
            }
        }
    }

    DocumentImage take() { return std::move(img_); }
    int width() const { return img_.width; }
    int height() const { return img_.height; }

private:
    DocumentImage img_;
};

PixelPoint point_px(const Node& n, std::size_t p, int side) {
    return {to_pixel(n.continuous[2 * p], side), to_pixel(n.continuous[2 * p + 1], side)};
}

void draw_shape_node(Canvas& canvas, const Node& n, int side, int thickness, std::uint8_t gray) {
    const PixelPoint a = point_px(n, 0, side);
    const PixelPoint b = point_px(n, 1, side);
    if (n.type == shapes::kCircle) {
        const PixelPoint c{(a.x + b.x) / 2, a.y};
        canvas.circle(c, std::abs(b.x - a.x) / 2, thickness, gray);
    } else {
        canvas.line(a, b, thickness, gray);
    }
}

void draw_number(Canvas& canvas, int value, PixelPoint center, int font, int size, std::uint8_t gray) {
    const std::string text = std::to_string(value);
    const int h = 6 + size;
    const int w = std::max(3, (5 * h + 3) / 7);
    const int gap = std::max(1, h / 7);
    const int total = static_cast<int>(text.size()) * w + (static_cast<int>(text.size()) - 1) * gap;
    const int left = center.x - total / 2;
    const int top = center.y - h / 2;
    for (std::size_t i = 0; i < text.size(); ++i) {
        const int d = text[i] - '0';
        const int gx = left + static_cast<int>(i) * (w + gap);
        if (font == 3) {
            const auto grid = glyphs::segment_digit(d, w, h);
            for (int y = 0; y < h; ++y) {
                for (int x = 0; x < w; ++x) {
                    if (grid[static_cast<std::size_t>(y)][static_cast<std::size_t>(x)]) canvas.plot(gx + x, top + y, gray);
                }
            }
            continue;
        }
        const auto& g = glyphs::digit(d);
        for (int y = 0; y < h; ++y) {
            const int shear = font == 2 ? (h - 1 - y) / 4 : 0;
            for (int x = 0; x < w; ++x) {
                if (!g.ink(x * g.width / w, y * g.height / h)) continue;
                canvas.plot(gx + x + shear, top + y, gray);
                if (font == 1) canvas.plot(gx + x + shear + 1, top + y, gray);
            }
        }
    }
}

struct Vec2 {
    double x = 0;
    double y = 0;
};

PixelPoint offset(PixelPoint p, Vec2 dir, double dist) {
    return {static_cast<int>(std::lround(p.x + dir.x * dist)), static_cast<int>(std::lround(p.y + dir.y * dist))};
}

void draw_arrowhead(Canvas& canvas, PixelPoint tip, Vec2 along, Vec2 normal, int style, int thickness, std::uint8_t gray) {
    // `along` points from the dimension line's interior towards the tip.
    constexpr double len = 4.0;
    constexpr double half = 2.0;
    const PixelPoint base{static_cast<int>(std::lround(tip.x - along.x * len)), static_cast<int>(std::lround(tip.y - along.y * len))};
    switch (style) {
        case 0:
            canvas.line(tip, offset(base, normal, half), thickness, gray);
            canvas.line(tip, offset(base, normal, -half), thickness, gray);
            break;
        case 1:
            for (int k = -2; k <= 2; ++k) canvas.line(tip, offset(base, normal, k), thickness, gray);
            break;
        default: {
            const Vec2 diag{along.x + normal.x, along.y + normal.y};
            canvas.line(offset(tip, diag, -2.0), offset(tip, diag, 2.0), thickness, gray);
            break;
        }
    }
}

void draw_dimension(Canvas& canvas, const Node& dim, const Node* line, const RenderStyle& style) {
    constexpr int side = 140;
    const PixelPoint center = point_px(dim, 0, side);
    if (line) {
        const PixelPoint a = point_px(*line, 0, side);
        const PixelPoint b = point_px(*line, 1, side);
        const double lx = b.x - a.x, ly = b.y - a.y;
        const double len = std::sqrt(lx * lx + ly * ly);
        if (len > 0) {
            Vec2 along{lx / len, ly / len};
            Vec2 normal{-along.y, along.x};
            const double mx = (a.x + b.x) / 2.0, my = (a.y + b.y) / 2.0;
            if ((center.x - mx) * normal.x + (center.y - my) * normal.y < 0) normal = {-normal.x, -normal.y};
            canvas.line(offset(a, normal, 2), offset(a, normal, 12), style.thickness, style.gray);
            canvas.line(offset(b, normal, 2), offset(b, normal, 12), style.thickness, style.gray);
            const PixelPoint da = offset(a, normal, 9);
            const PixelPoint db = offset(b, normal, 9);
            canvas.line(da, db, style.thickness, style.gray);
            draw_arrowhead(canvas, da, {-along.x, -along.y}, normal, style.arrow, style.thickness, style.gray);
            draw_arrowhead(canvas, db, along, normal, style.arrow, style.thickness, style.gray);
        }
    }
    draw_number(canvas, dim.discrete.at(0), center, style.font, style.font_size, style.gray);
}

void draw_note(Canvas& canvas, int x, int duration, int pitch) {
    using namespace music_layout;
    const int cy = pitch_y(pitch);
    const auto& head = duration <= 1 ? glyphs::hollow_head() : glyphs::filled_head();
    canvas.bitmap(head, x, cy - head.height / 2, 1, 1, 0);
    if (duration == 0) return;
    const int stem_x = x + head.width - 1;
    const int top = cy - 22;
    canvas.line({stem_x, cy - 1}, {stem_x, top}, 1, 0);
    for (int f = 0; f < duration - 2; ++f) {
        canvas.line({stem_x, top + 5 * f}, {stem_x + 4, top + 5 * f + 5}, 1, 0);
    }
}

void draw_timesig(Canvas& canvas, int x, int timesig) {
    using namespace music_layout;
    if (timesig == 3) {
        canvas.bitmap(glyphs::common_time(), x, kStaffTop + 9, 2, 2, 0);
        return;
    }
    canvas.bitmap(glyphs::digit(timesig + 1), x, kStaffTop + 1, 2, 2, 0);
    canvas.bitmap(glyphs::digit(4), x, kStaffTop + 17, 2, 2, 0);
}

}  // namespace

void RenderStyle::check() const {
    if (thickness < 1 || thickness > 4) throw InvalidInput("stroke thickness must be in [1, 4]");
    if (arrow < 0 || arrow >= glyphs::kArrowStyleCount) throw InvalidInput("arrow style out of range");
    if (font < 0 || font >= glyphs::kFontCount) throw InvalidInput("font index out of range");
    if (font_size < 0 || font_size >= glyphs::kFontSizeCount) throw InvalidInput("font size index out of range");
}

RenderStyle sample_style(Domain domain, std::uint64_t seed) {
    RenderStyle style;
    if (domain != Domain::LShape) return style;
    CounterRng rng = CounterRng(seed).fork(0x57F1E);
    static constexpr std::array<std::uint8_t, 4> grays{0, 32, 64, 96};
    style.thickness = rng.range(1, 2);
    style.gray = grays[static_cast<std::size_t>(rng.range(0, 3))];
    style.arrow = rng.range(0, glyphs::kArrowStyleCount - 1);
    style.font = rng.range(0, glyphs::kFontCount - 1);
    style.font_size = rng.range(0, glyphs::kFontSizeCount - 1);
    style.blur = rng.bernoulli(0.25);
    return style;
}

std::vector<int> music_note_columns(const Record& record) {
    using namespace music_layout;
    std::vector<int> cols;
    int x = 4;
    int capacity = 0;
    int filled = 0;
    for (const auto& n : record.nodes) {
        if (n.type == music::kClef || n.type == music::kTimeSig) {
            if (n.type == music::kTimeSig) capacity = music::bar_units(n.discrete.at(0));
            x += 18;
            continue;
        }
        cols.push_back(x);
        x += kNoteAdvance;
        filled += music::duration_units(n.discrete.at(0));
        if (capacity > 0 && filled >= capacity) {
            x += kBarAdvance;
            filled = 0;
        }
    }
    return cols;
}

DocumentImage render_music(const Record& record) {
    using namespace music_layout;
    validate_record(music_schema(), record);
    // Layout pass: clef and time signature take 18 px each, notes a fixed advance, bar lines 8 px.
    int x = 4;
    int capacity = 0;
    int filled = 0;
    struct Item {
        int kind;  // 0 clef, 1 timesig, 2 note, 3 bar line
        int x;
        const Node* node;
    };
    std::vector<Item> items;
    for (const auto& n : record.nodes) {
        if (n.type == music::kClef || n.type == music::kTimeSig) {
            items.push_back({n.type, x, &n});
            if (n.type == music::kTimeSig) capacity = music::bar_units(n.discrete.at(0));
            x += 18;
            continue;
        }
        items.push_back({2, x, &n});
        x += kNoteAdvance;
        filled += music::duration_units(n.discrete.at(0));
        if (capacity > 0 && filled >= capacity) {
            items.push_back({3, x + 1, nullptr});
            x += kBarAdvance;
            filled = 0;
        }
    }
    const int width = std::max(60, (x + 8 + 9) / 10 * 10);
    Canvas canvas(width, kHeight);
    for (int i = 0; i < 5; ++i) {
        const int y = kStaffTop + i * kStaffSpacing;
        canvas.line({0, y}, {width - 1, y}, 1, 0);
    }
    for (const auto& it : items) {
        switch (it.kind) {
            case 0: {
                const bool treble = it.node->discrete.at(0) == 0;
                const auto& g = treble ? glyphs::treble_clef() : glyphs::bass_clef();
                canvas.bitmap(g, it.x, treble ? kStaffTop - 8 : kStaffTop, 1, 2, 0);
                break;
            }
            case 1: draw_timesig(canvas, it.x + 2, it.node->discrete.at(0)); break;
            case 2: draw_note(canvas, it.x, it.node->discrete.at(0), it.node->discrete.at(1)); break;
            default: canvas.line({it.x, kStaffTop}, {it.x, kStaffTop + 4 * kStaffSpacing}, 1, 0); break;
        }
    }
    return canvas.take();
}

DocumentImage render_shapes(const Record& record, const RenderStyle& style) {
    style.check();
    validate_record(shapes_schema(), record);
    constexpr int side = 280;
    Canvas canvas(side, side);
    for (const auto& n : record.nodes) draw_shape_node(canvas, n, side, style.thickness, style.gray);
    auto img = canvas.take();
    return style.blur ? box_blur(img) : img;
}

DocumentImage render_lshape(const Record& record, const RenderStyle& style) {
    style.check();
    validate_record(lshape_schema(), record);
    constexpr int side = 140;
    Canvas canvas(side, side);
    for (const auto& n : record.nodes) {
        if (n.type == lshape::kLine) draw_shape_node(canvas, n, side, style.thickness, style.gray);
    }
    for (std::size_t i = 0; i < record.nodes.size(); ++i) {
        const auto& n = record.nodes[i];
        if (n.type != lshape::kDimension) continue;
        const Node* target = nullptr;
        for (const auto& rel : record.relationships) {
            if (rel.type != lshape::kLink || rel.endpoints[0] != static_cast<int>(i)) continue;
            const auto& cand = record.nodes[static_cast<std::size_t>(rel.endpoints[1])];
            if (cand.type == lshape::kLine) target = &cand;
            break;
        }
        draw_dimension(canvas, n, target, style);
    }
    auto img = canvas.take();
    return style.blur ? box_blur(img) : img;
}

DocumentImage render_record(Domain domain, const Record& record, const RenderStyle& style) {
    switch (domain) {
        case Domain::Music: return render_music(record);
        case Domain::Shapes: return render_shapes(record, style);
        case Domain::LShape: return render_lshape(record, style);
    }
    throw InvalidInput("unknown domain");
}

DocumentImage box_blur(const DocumentImage& img) {
    DocumentImage out(img.width, img.height);
    for (int y = 0; y < img.height; ++y) {
        for (int x = 0; x < img.width; ++x) {
            int sum = 0;
            for (int dy = -1; dy <= 1; ++dy) {
                for (int dx = -1; dx <= 1; ++dx) {
                    const int sx = std::clamp(x + dx, 0, img.width - 1);
                    const int sy = std::clamp(y + dy, 0, img.height - 1);
                    sum += img.at(sx, sy);
                }
            }
            out.at(x, y) = static_cast<std::uint8_t>((sum + 4) / 9);
        }
    }
    return out;
}

}  // namespace docrec
