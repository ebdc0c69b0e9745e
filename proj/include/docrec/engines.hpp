#pragma once

#include <cstdint>
#include <string>
#include <string_view>

#include "docrec/record.hpp"

namespace docrec {

enum class Domain { Music, Shapes, LShape };

std::string_view to_string(Domain d);
Domain parse_domain(std::string_view name);

/// Schemas are fixed per domain; vocabularies are frozen here.
const RecordSchema& music_schema();
const RecordSchema& shapes_schema();
const RecordSchema& lshape_schema();
const RecordSchema& schema_for(Domain d);
const RecordSchema& schema_by_name(std::string_view name);

/// Square canvas side for the geometric domains; music images are 100 px high.
int canvas_side(Domain d);

/// Default continuous-coordinate tolerance: 4 pixels on the domain canvas.
double default_eps(Domain d);

namespace music {
// Node type indices in music_schema().
inline constexpr int kClef = 0;
inline constexpr int kTimeSig = 1;
inline constexpr int kNote = 2;
inline constexpr int kClefValues = 2;
inline constexpr int kTimeSigValues = 4;  // 1/4, 2/4, 3/4, 4/4 (common time)
inline constexpr int kDurationValues = 5; // whole, half, quarter, eighth, sixteenth
inline constexpr int kPitchValues = 9;    // bottom line (0) to top line (8)

/// Length of a duration index in sixteenth units: whole = 16 ... sixteenth = 1.
constexpr int duration_units(int duration) { return 16 >> duration; }
/// Capacity of one bar in sixteenth units for a time-signature index.
constexpr int bar_units(int timesig) { return (timesig + 1) * 4; }
}  // namespace music

namespace shapes {
inline constexpr int kLine = 0;
inline constexpr int kCircle = 1;
}  // namespace shapes

namespace lshape {
inline constexpr int kLine = 0;
inline constexpr int kDimension = 1;
inline constexpr int kConnection = 2;
inline constexpr int kLink = 3;
inline constexpr int kDimensionValues = 101;
}  // namespace lshape

struct MusicConfig {
    int bars = 4;
    int forced_timesig = -1;  // -1 samples uniformly
    void check() const;
};

struct ShapesConfig {
    int max_primitives = 10;
    int min_primitives = 1;
    double min_line_length = 0.05;  // normalized
    double min_radius = 0.02;       // normalized
    double margin_min = 0.05;       // fraction of the canvas
    double margin_max = 0.15;
    double rectilinear_probability = 0.5;
    void check() const;
};

struct LShapeConfig {
    double annotation_probability = 0.3;
    int value_max = 100;
    void check() const;
};

Record gen_music(const MusicConfig& cfg, std::uint64_t seed);
Record gen_shapes(const ShapesConfig& cfg, std::uint64_t seed);
Record gen_lshape(const LShapeConfig& cfg, std::uint64_t seed);

/// Domain-agnostic front end used by training and the CLI.
struct EngineConfig {
    Domain domain = Domain::Music;
    MusicConfig music;
    ShapesConfig shapes;
    LShapeConfig lshape;
};

Record generate(const EngineConfig& cfg, std::uint64_t seed);

/// Sum of note durations per bar, in sixteenth units; empty if the record is not valid music.
std::vector<int> music_bar_fill(const Record& record);
/// Bar index of every note node (nodes 2..) under greedy bar filling.
std::vector<int> music_note_bars(const Record& record);

}  // namespace docrec
