#include "docrec/engines.hpp"

#include <algorithm>
#include <array>
#include <cstdlib>
#include <optional>

#include "docrec/geometry.hpp"
#include "docrec/rng.hpp"

namespace docrec {

namespace {

RecordSchema make_music_schema() {
    RecordSchema s;
    s.name = "music";
    s.structure = RecordStructure::Sequence;
    s.max_nodes = 68;  // clef + time signature + 4 bars of sixteenths
    s.types = {
        {"clef", {{"clef", music::kClefValues}}, {}, 0, true},
        {"timesig", {{"timesig", music::kTimeSigValues}}, {}, 0, true},
        {"note", {{"duration", music::kDurationValues}, {"pitch", music::kPitchValues}}, {}, 0, true},
    };
    s.check();
    return s;
}

RecordSchema make_shapes_schema() {
    RecordSchema s;
    s.name = "shapes";
    s.structure = RecordStructure::Set;
    s.max_nodes = 16;
    s.types = {
        {"line", {}, {"start", "end"}, 0, true},
        {"circle", {}, {"leftmost", "rightmost"}, 0, true},
    };
    s.check();
    return s;
}

RecordSchema make_lshape_schema() {
    RecordSchema s;
    s.name = "lshape";
    s.structure = RecordStructure::Graph;
    s.max_nodes = 16;
    s.types = {
        {"line", {}, {"start", "end"}, 0, true},
        {"dimension", {{"value", lshape::kDimensionValues}}, {"center"}, 0, true},
        {"connection", {}, {}, 2, false},
        {"link", {}, {}, 2, true},
    };
    s.check();
    return s;
}

struct Segment {
    PixelPoint a;
    PixelPoint b;
};

long long cross(PixelPoint o, PixelPoint p, PixelPoint q) {
    return static_cast<long long>(p.x - o.x) * (q.y - o.y) - static_cast<long long>(p.y - o.y) * (q.x - o.x);
}

// True if two segments are collinear and share more than a single point.
bool collinear_overlap(const Segment& s, const Segment& t) {
    if (cross(s.a, s.b, t.a) != 0 || cross(s.a, s.b, t.b) != 0) return false;
    const bool use_x = s.a.x != s.b.x;
    auto coord = [use_x](PixelPoint p) { return use_x ? p.x : p.y; };
    const int s0 = std::min(coord(s.a), coord(s.b));
    const int s1 = std::max(coord(s.a), coord(s.b));
    const int t0 = std::min(coord(t.a), coord(t.b));
    const int t1 = std::max(coord(t.a), coord(t.b));
    return std::min(s1, t1) - std::max(s0, t0) > 0;
}

Segment canonical(Segment s) {
    if (s.b < s.a) std::swap(s.a, s.b);
    return s;
}

long long squared_length(const Segment& s) {
    const long long dx = s.b.x - s.a.x;
    const long long dy = s.b.y - s.a.y;
    return dx * dx + dy * dy;
}

Node point_node(int type, std::initializer_list<PixelPoint> points, int side) {
    Node n;
    n.type = type;
    for (const auto& p : points) {
        n.continuous.push_back(pixel_center(p.x, side));
        n.continuous.push_back(pixel_center(p.y, side));
    }
    return n;
}

// Primitive in an abstract integer frame before augmentation.
struct FramePrimitive {
    bool circle = false;
    PixelPoint a;  // line start or circle center
    PixelPoint b;  // line end
    int radius = 0;
};

std::vector<FramePrimitive> sample_rectilinear(CounterRng& rng, int count) {
    std::vector<FramePrimitive> out;
    PixelPoint cur{0, 0};
    bool horizontal = rng.bernoulli(0.5);
    int attempts = 0;
    while (static_cast<int>(out.size()) < count && attempts < 200) {
        ++attempts;
        const int len = rng.range(100, 400) * (rng.bernoulli(0.5) ? 1 : -1);
        PixelPoint next = horizontal ? PixelPoint{cur.x + len, cur.y} : PixelPoint{cur.x, cur.y + len};
        const Segment seg{cur, next};
        bool clash = false;
        for (const auto& p : out) clash = clash || collinear_overlap(seg, {p.a, p.b});
        if (clash) continue;
        out.push_back({false, cur, next, 0});
        cur = next;
        horizontal = !horizontal;
    }
    return out;
}

std::vector<FramePrimitive> sample_free(CounterRng& rng, int count) {
    std::vector<FramePrimitive> out;
    for (int i = 0; i < count; ++i) {
        if (rng.bernoulli(0.3)) {
            out.push_back({true, {rng.range(0, 1000), rng.range(0, 1000)}, {}, rng.range(40, 250)});
        } else {
            PixelPoint a{rng.range(0, 1000), rng.range(0, 1000)};
            PixelPoint b{rng.range(0, 1000), rng.range(0, 1000)};
            out.push_back({false, a, b, 0});
        }
    }
    return out;
}

std::optional<Record> place_shapes(const ShapesConfig& cfg, const std::vector<FramePrimitive>& prims,
                                   CounterRng& rng) {
    constexpr int side = 280;
    int minx = INT32_MAX, miny = INT32_MAX, maxx = INT32_MIN, maxy = INT32_MIN;
    for (const auto& p : prims) {
        const int r = p.circle ? p.radius : 0;
        for (const auto& q : p.circle ? std::vector<PixelPoint>{p.a} : std::vector<PixelPoint>{p.a, p.b}) {
            minx = std::min(minx, q.x - r);
            miny = std::min(miny, q.y - r);
            maxx = std::max(maxx, q.x + r);
            maxy = std::max(maxy, q.y + r);
        }
    }
    const long long span = std::max({maxx - minx, maxy - miny, 1});
    const int margin = static_cast<int>((cfg.margin_min + rng.uniform() * (cfg.margin_max - cfg.margin_min)) * side);
    const int avail = side - 1 - 2 * margin;
    if (avail < 20) return std::nullopt;
    const long long scale = static_cast<long long>(avail) * rng.range(60, 100) / 100;
    const int bw = static_cast<int>((maxx - minx) * scale / span);
    const int bh = static_cast<int>((maxy - miny) * scale / span);
    const int tx = rng.range(margin, std::max(margin, side - 1 - margin - bw));
    const int ty = rng.range(margin, std::max(margin, side - 1 - margin - bh));
    const bool mirror_x = rng.bernoulli(0.5);
    const bool mirror_y = rng.bernoulli(0.5);
    auto map = [&](PixelPoint q) {
        PixelPoint m{tx + static_cast<int>((q.x - minx) * scale / span), ty + static_cast<int>((q.y - miny) * scale / span)};
        if (mirror_x) m.x = side - 1 - m.x;
        if (mirror_y) m.y = side - 1 - m.y;
        return m;
    };

    const int min_len = static_cast<int>(std::ceil(cfg.min_line_length * side));
    const int min_r = static_cast<int>(std::ceil(cfg.min_radius * side));
    std::vector<Segment> lines;
    std::vector<std::array<int, 3>> circles;
    for (const auto& p : prims) {
        if (p.circle) {
            const PixelPoint c = map(p.a);
            const int r = static_cast<int>(p.radius * scale / span);
            if (r < min_r || c.x - r < 0 || c.x + r > side - 1 || c.y - r < 0 || c.y + r > side - 1) return std::nullopt;
            const std::array<int, 3> circ{c.x, c.y, r};
            if (std::find(circles.begin(), circles.end(), circ) != circles.end()) return std::nullopt;
            circles.push_back(circ);
        } else {
            const Segment s = canonical({map(p.a), map(p.b)});
            if (squared_length(s) < static_cast<long long>(min_len) * min_len) return std::nullopt;
            for (const auto& t : lines) {
                if (collinear_overlap(s, t) || (s.a == t.a && s.b == t.b)) return std::nullopt;
            }
            lines.push_back(s);
        }
    }
    Record r;
    for (const auto& s : lines) r.nodes.push_back(point_node(shapes::kLine, {s.a, s.b}, side));
    for (const auto& c : circles) {
        r.nodes.push_back(point_node(shapes::kCircle, {{c[0] - c[2], c[1]}, {c[0] + c[2], c[1]}}, side));
    }
    return r;
}

}  // namespace

std::string_view to_string(Domain d) {
    switch (d) {
        case Domain::Music: return "music";
        case Domain::Shapes: return "shapes";
        case Domain::LShape: return "lshape";
    }
    return "unknown";
}

Domain parse_domain(std::string_view name) {
    if (name == "music") return Domain::Music;
    if (name == "shapes") return Domain::Shapes;
    if (name == "lshape" || name == "lshapes") return Domain::LShape;
    throw InvalidInput("unknown domain '" + std::string(name) + "'");
}

const RecordSchema& music_schema() {
    static const RecordSchema s = make_music_schema();
    return s;
}

const RecordSchema& shapes_schema() {
    static const RecordSchema s = make_shapes_schema();
    return s;
}

const RecordSchema& lshape_schema() {
    static const RecordSchema s = make_lshape_schema();
    return s;
}

const RecordSchema& schema_for(Domain d) {
    switch (d) {
        case Domain::Music: return music_schema();
        case Domain::Shapes: return shapes_schema();
        case Domain::LShape: return lshape_schema();
    }
    throw InvalidInput("unknown domain");
}

const RecordSchema& schema_by_name(std::string_view name) { return schema_for(parse_domain(name)); }

int canvas_side(Domain d) {
    switch (d) {
        case Domain::Music: return 100;
        case Domain::Shapes: return 280;
        case Domain::LShape: return 140;
    }
    return 100;
}

double default_eps(Domain d) { return 4.0 / canvas_side(d); }

void MusicConfig::check() const {
    if (bars <= 0) throw InvalidInput("music bars must be positive");
    if (forced_timesig < -1 || forced_timesig >= music::kTimeSigValues) throw InvalidInput("invalid forced time signature");
}

void ShapesConfig::check() const {
    if (max_primitives < 1 || max_primitives > 10) throw InvalidInput("max_primitives must be in [1, 10]");
    if (min_primitives < 1 || min_primitives > max_primitives) throw InvalidInput("min_primitives must be in [1, max]");
    if (!(margin_min >= 0 && margin_min <= margin_max && margin_max < 0.4)) throw InvalidInput("invalid margin bounds");
    if (!(min_line_length > 0 && min_radius > 0)) throw InvalidInput("minimum sizes must be positive");
}

void LShapeConfig::check() const {
    if (!(annotation_probability >= 0 && annotation_probability <= 1)) throw InvalidInput("invalid annotation probability");
    if (value_max < 0 || value_max >= lshape::kDimensionValues) throw InvalidInput("value_max must be in [0, 100]");
}

Record gen_music(const MusicConfig& cfg, std::uint64_t seed) {
    cfg.check();
    CounterRng rng(seed);
    Record r;
    const int clef = rng.range(0, music::kClefValues - 1);
    const int timesig = cfg.forced_timesig >= 0 ? cfg.forced_timesig : rng.range(0, music::kTimeSigValues - 1);
    r.nodes.push_back({music::kClef, {clef}, {}});
    r.nodes.push_back({music::kTimeSig, {timesig}, {}});
    for (int bar = 0; bar < cfg.bars; ++bar) {
        int remaining = music::bar_units(timesig);
        while (remaining > 0) {
            std::array<int, music::kDurationValues> fits{};
            int n = 0;
            for (int d = 0; d < music::kDurationValues; ++d) {
                if (music::duration_units(d) <= remaining) fits[static_cast<std::size_t>(n++)] = d;
            }
            const int duration = fits[static_cast<std::size_t>(rng.range(0, n - 1))];
            const int pitch = rng.range(0, music::kPitchValues - 1);
            r.nodes.push_back({music::kNote, {duration, pitch}, {}});
            remaining -= music::duration_units(duration);
        }
    }
    return r;
}

Record gen_shapes(const ShapesConfig& cfg, std::uint64_t seed) {
    cfg.check();
    CounterRng rng(seed);
    for (;;) {
        const int count = rng.range(cfg.min_primitives, cfg.max_primitives);
        auto prims = rng.bernoulli(cfg.rectilinear_probability) ? sample_rectilinear(rng, count) : sample_free(rng, count);
        if (static_cast<int>(prims.size()) != count) continue;
        if (auto placed = place_shapes(cfg, prims, rng)) return *std::move(placed);
    }
}

Record gen_lshape(const LShapeConfig& cfg, std::uint64_t seed) {
    cfg.check();
    constexpr int side = 140;
    constexpr int margin = 28;  // room for outward annotations
    CounterRng rng(seed);
    const int w = rng.range(50, 80);
    const int h = rng.range(50, 80);
    const int cw = rng.range(28, w - 18);
    const int ch = rng.range(28, h - 18);
    std::array<PixelPoint, 6> v{{{0, 0}, {w - cw, 0}, {w - cw, ch}, {w, ch}, {w, h}, {0, h}}};

    const int turns = rng.range(0, 3);
    for (auto& p : v) {
        for (int t = 0; t < turns; ++t) p = {-p.y, p.x};
    }
    if (rng.bernoulli(0.5)) {
        for (auto& p : v) p.x = -p.x;
    }
    int minx = INT32_MAX, miny = INT32_MAX, maxx = INT32_MIN, maxy = INT32_MIN;
    for (const auto& p : v) {
        minx = std::min(minx, p.x);
        miny = std::min(miny, p.y);
        maxx = std::max(maxx, p.x);
        maxy = std::max(maxy, p.y);
    }
    const int tx = rng.range(margin, side - 1 - margin - (maxx - minx));
    const int ty = rng.range(margin, side - 1 - margin - (maxy - miny));
    for (auto& p : v) p = {p.x - minx + tx, p.y - miny + ty};

    // Orientation decides which side of each edge is outside the polygon.
    long long area2 = 0;
    for (std::size_t i = 0; i < v.size(); ++i) {
        const auto& p = v[i];
        const auto& q = v[(i + 1) % v.size()];
        area2 += static_cast<long long>(p.x) * q.y - static_cast<long long>(q.x) * p.y;
    }
    const int orient = area2 > 0 ? 1 : -1;

    Record r;
    for (std::size_t i = 0; i < v.size(); ++i) {
        const Segment s = canonical({v[i], v[(i + 1) % v.size()]});
        r.nodes.push_back(point_node(lshape::kLine, {s.a, s.b}, side));
    }
    for (int i = 0; i < 6; ++i) {
        const int j = (i + 1) % 6;
        r.relationships.push_back({lshape::kConnection, {std::min(i, j), std::max(i, j)}, {}, {}});
    }
    for (int i = 0; i < 6; ++i) {
        if (!rng.bernoulli(cfg.annotation_probability)) continue;
        const int value = rng.range(0, cfg.value_max);
        const auto& p = v[static_cast<std::size_t>(i)];
        const auto& q = v[static_cast<std::size_t>((i + 1) % 6)];
        const int dx = (q.x > p.x) - (q.x < p.x);
        const int dy = (q.y > p.y) - (q.y < p.y);
        // Outward normal of an axis-aligned edge in image coordinates (y down).
        const int nx = -dy * orient;
        const int ny = dx * orient;
        constexpr int text_offset = 19;
        const PixelPoint center{(p.x + q.x) / 2 + nx * text_offset, (p.y + q.y) / 2 + ny * text_offset};
        Node dim = point_node(lshape::kDimension, {center}, side);
        dim.discrete = {value};
        const int dim_index = static_cast<int>(r.nodes.size());
        r.nodes.push_back(std::move(dim));
        r.relationships.push_back({lshape::kLink, {dim_index, i}, {}, {}});
    }
    return r;
}

Record generate(const EngineConfig& cfg, std::uint64_t seed) {
    switch (cfg.domain) {
        case Domain::Music: return gen_music(cfg.music, seed);
        case Domain::Shapes: return gen_shapes(cfg.shapes, seed);
        case Domain::LShape: return gen_lshape(cfg.lshape, seed);
    }
    throw InvalidInput("unknown domain");
}

std::vector<int> music_note_bars(const Record& record) {
    std::vector<int> bars;
    if (record.nodes.size() < 2 || record.nodes[1].type != music::kTimeSig) return bars;
    const int capacity = music::bar_units(record.nodes[1].discrete.at(0));
    int filled = 0;
    int bar = 0;
    for (std::size_t i = 2; i < record.nodes.size(); ++i) {
        const auto& n = record.nodes[i];
        if (n.type != music::kNote) return {};
        if (filled >= capacity) {
            ++bar;
            filled = 0;
        }
        bars.push_back(bar);
        filled += music::duration_units(n.discrete.at(0));
    }
    return bars;
}

std::vector<int> music_bar_fill(const Record& record) {
    std::vector<int> fill;
    const auto bars = music_note_bars(record);
    if (bars.size() + 2 != record.nodes.size()) return fill;
    for (std::size_t i = 0; i < bars.size(); ++i) {
        const auto b = static_cast<std::size_t>(bars[i]);
        if (fill.size() <= b) fill.resize(b + 1, 0);
        fill[b] += music::duration_units(record.nodes[i + 2].discrete.at(0));
    }
    return fill;
}

}  // namespace docrec
