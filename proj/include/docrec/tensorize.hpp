#pragma once

#include <cstdint>
#include <vector>

#include "docrec/image.hpp"
#include "docrec/record.hpp"

namespace docrec {

inline constexpr int kPatchSize = 10;
inline constexpr int kPatchPixels = kPatchSize * kPatchSize;
inline constexpr std::uint8_t kDefaultBackgroundThreshold = 250;

/// Informative 10x10 patches of one image.
///
/// Pixel values are ink intensities (255 - gray) / 255, so background maps to 0.
struct PatchSet {
    int image_width = 0;
    int image_height = 0;
    int grid_rows = 0;
    int grid_cols = 0;
    std::vector<float> values;  // count x 100, row-major within each patch
    std::vector<int> rows;      // grid row of each patch
    std::vector<int> cols;      // grid column of each patch

    int count() const { return static_cast<int>(rows.size()); }
    /// Index of the patch at a grid cell, or -1 when that cell was filtered out.
    int find(int grid_row, int grid_col) const;
};

/// Keeps patches whose darkest pixel is below `background_threshold`. Images whose sides are
/// not multiples of 10 are padded right/bottom with background.
PatchSet patchify(const DocumentImage& img, std::uint8_t background_threshold = kDefaultBackgroundThreshold);

/// Patch and in-patch pixel index (row-major, 0..99) of a normalized coordinate.
struct PatchTarget {
    int grid_row = 0;
    int grid_col = 0;
    int pixel = 0;
};
PatchTarget locate(double x, double y, int image_width, int image_height);

/// Normalized pixel-center coordinate reconstructed from a patch grid cell and in-patch pixel.
/// Ties in the distributions that select the cell and pixel resolve to the lowest index.
std::pair<double, double> reconstruct(int grid_row, int grid_col, int pixel, int image_width, int image_height);

enum class TokenKind : std::uint8_t { Pad, Bos, Prediction, Node };

/// One decoder input slot: a special token or a (flat) record node.
struct Token {
    TokenKind kind = TokenKind::Node;
    Node node;
    int position = -1;  // 1-D positional-encoding index, -1 for none
};

/// Structure-of-arrays node batch: every field padded to the batch's longest sequence and
/// to the schema's widest discrete / continuous arity, with validity masks.
struct NodeBatch {
    int batch = 0;
    int length = 0;
    int discrete_width = 0;
    int continuous_width = 0;
    std::vector<TokenKind> kind;            // batch x length
    std::vector<int> type;                  // -1 unless kind == Node
    std::vector<int> discrete;              // batch x length x discrete_width, -1 padded
    std::vector<double> continuous;         // batch x length x continuous_width, 0 padded
    std::vector<std::uint8_t> discrete_mask;
    std::vector<std::uint8_t> continuous_mask;
    std::vector<int> position;              // batch x length, -1 for none
    std::vector<int> lengths;

    bool valid(int item, int pos) const { return pos < lengths[static_cast<std::size_t>(item)]; }
    std::size_t slot(int item, int pos) const {
        return static_cast<std::size_t>(item) * static_cast<std::size_t>(length) + static_cast<std::size_t>(pos);
    }
};

struct SchemaArity {
    int discrete = 0;
    int continuous = 0;
};
SchemaArity max_arity(const RecordSchema& schema);

NodeBatch encode_node_batch(const std::vector<std::vector<Token>>& sequences, const RecordSchema& schema);
NodeBatch encode_node_batch(const std::vector<std::vector<Node>>& sequences, const RecordSchema& schema);

/// Inverse of encode_node_batch for one item.
std::vector<Token> decode_node_batch(const NodeBatch& batch, int item);

/// Index of the largest value; ties resolve to the lowest index.
template <typename It>
int argmax_index(It begin, It end) {
    int best = -1;
    int i = 0;
    for (auto it = begin; it != end; ++it, ++i) {
        if (best < 0 || *it > *(begin + best)) best = i;
    }
    return best;
}

/// Fixed sinusoidal encodings. The 2-D form gives the first half of the dimensions to the
/// row and the second half to the column.
std::vector<double> sinusoid_1d(int position, int dim);
std::vector<double> sinusoid_2d(int row, int col, int dim);

}  // namespace docrec
