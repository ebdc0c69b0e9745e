#include "glyphs.hpp"

#include <array>
#include <stdexcept>

namespace docrec::glyphs {

namespace {

Bitmap make(std::vector<std::string_view> rows) {
    Bitmap b;
    b.height = static_cast<int>(rows.size());
    b.width = rows.empty() ? 0 : static_cast<int>(rows.front().size());
    for (auto r : rows) {
        if (static_cast<int>(r.size()) != b.width) throw std::logic_error("ragged glyph bitmap");
    }
    b.rows = std::move(rows);
    return b;
}

}  // namespace

const Bitmap& treble_clef() {
    static const Bitmap b = make({
        "....##...",
        "...#..#..",
        "...#..#..",
        "...#..#..",
        "...#.#...",
        "...##....",
        "...#.....",
        "..##.....",
        ".#.#.....",
        "#..#.....",
        "#..#.....",
        "#..####..",
        "#.##...#.",
        "#.#.#..#.",
        "#.#..#.#.",
        ".##...##.",
        "..#######",
        "...#.....",
        "...#.....",
        "...#.....",
        ".#.#.....",
        ".###.....",
    });
    return b;
}

const Bitmap& bass_clef() {
    static const Bitmap b = make({
        ".###.....",
        "#...#..#.",
        "#....#...",
        ".##..#.#.",
        ".##..#...",
        ".....#...",
        "....#....",
        "...#.....",
        "..#......",
        ".#.......",
        "#........",
    });
    return b;
}

const Bitmap& common_time() {
    static const Bitmap b = make({
        ".####",
        "#...#",
        "#....",
        "#....",
        "#....",
        "#...#",
        ".###.",
    });
    return b;
}

const Bitmap& filled_head() {
    static const Bitmap b = make({
        "..###..",
        ".#####.",
        "#######",
        ".#####.",
        "..###..",
    });
    return b;
}

const Bitmap& hollow_head() {
    static const Bitmap b = make({
        "..###..",
        ".#...#.",
        "#.....#",
        ".#...#.",
        "..###..",
    });
    return b;
}

const Bitmap& digit(int d) {
    static const std::array<Bitmap, 10> digits = {
        make({".###.", "#...#", "#..##", "#.#.#", "##..#", "#...#", ".###."}),
        make({"..#..", ".##..", "..#..", "..#..", "..#..", "..#..", ".###."}),
        make({".###.", "#...#", "....#", "...#.", "..#..", ".#...", "#####"}),
        make({"#####", "...#.", "..#..", "...#.", "....#", "#...#", ".###."}),
        make({"...#.", "..##.", ".#.#.", "#..#.", "#####", "...#.", "...#."}),
        make({"#####", "#....", "####.", "....#", "....#", "#...#", ".###."}),
        make({"..##.", ".#...", "#....", "####.", "#...#", "#...#", ".###."}),
        make({"#####", "....#", "...#.", "..#..", ".#...", ".#...", ".#..."}),
        make({".###.", "#...#", "#...#", ".###.", "#...#", "#...#", ".###."}),
        make({".###.", "#...#", "#...#", ".####", "....#", "...#.", ".##.."}),
    };
    if (d < 0 || d > 9) throw std::out_of_range("digit out of range");
    return digits[static_cast<std::size_t>(d)];
}

std::vector<std::vector<bool>> segment_digit(int d, int w, int h) {
    // Segments a..g: top, upper right, lower right, bottom, lower left, upper left, middle.
    static constexpr std::array<unsigned, 10> masks = {0x3F, 0x06, 0x5B, 0x4F, 0x66, 0x6D, 0x7D, 0x07, 0x7F, 0x6F};
    if (d < 0 || d > 9) throw std::out_of_range("digit out of range");
    const unsigned m = masks[static_cast<std::size_t>(d)];
    std::vector<std::vector<bool>> grid(static_cast<std::size_t>(h), std::vector<bool>(static_cast<std::size_t>(w), false));
    const int mid = h / 2;
    auto hline = [&](int y) {
        for (int x = 0; x < w; ++x) grid[static_cast<std::size_t>(y)][static_cast<std::size_t>(x)] = true;
    };
    auto vline = [&](int x, int y0, int y1) {
        for (int y = y0; y <= y1; ++y) grid[static_cast<std::size_t>(y)][static_cast<std::size_t>(x)] = true;
    };
    if (m & 0x01) hline(0);
    if (m & 0x02) vline(w - 1, 0, mid);
    if (m & 0x04) vline(w - 1, mid, h - 1);
    if (m & 0x08) hline(h - 1);
    if (m & 0x10) vline(0, mid, h - 1);
    if (m & 0x20) vline(0, 0, mid);
    if (m & 0x40) hline(mid);
    return grid;
}

}  // namespace docrec::glyphs
