#include "docrec/tensorize.hpp"

#include <algorithm>
#include <cmath>

namespace docrec {

int PatchSet::find(int grid_row, int grid_col) const {
    for (int i = 0; i < count(); ++i) {
        if (rows[static_cast<std::size_t>(i)] == grid_row && cols[static_cast<std::size_t>(i)] == grid_col) return i;
    }
    return -1;
}

PatchSet patchify(const DocumentImage& img, std::uint8_t background_threshold) {
    PatchSet ps;
    ps.image_width = img.width;
    ps.image_height = img.height;
    ps.grid_rows = (img.height + kPatchSize - 1) / kPatchSize;
    ps.grid_cols = (img.width + kPatchSize - 1) / kPatchSize;
    for (int gr = 0; gr < ps.grid_rows; ++gr) {
        for (int gc = 0; gc < ps.grid_cols; ++gc) {
            std::uint8_t darkest = 255;
            for (int y = 0; y < kPatchSize; ++y) {
                for (int x = 0; x < kPatchSize; ++x) {
                    const int px = gc * kPatchSize + x;
                    const int py = gr * kPatchSize + y;
                    if (img.contains(px, py)) darkest = std::min(darkest, img.at(px, py));
                }
            }
            if (darkest >= background_threshold) continue;
            ps.rows.push_back(gr);
            ps.cols.push_back(gc);
            for (int y = 0; y < kPatchSize; ++y) {
                for (int x = 0; x < kPatchSize; ++x) {
                    const int px = gc * kPatchSize + x;
                    const int py = gr * kPatchSize + y;
                    const int v = img.contains(px, py) ? img.at(px, py) : 255;
                    ps.values.push_back(static_cast<float>(255 - v) / 255.0f);
                }
            }
        }
    }
    return ps;
}

PatchTarget locate(double x, double y, int image_width, int image_height) {
    const int px = std::clamp(static_cast<int>(std::floor(x * image_width)), 0, image_width - 1);
    const int py = std::clamp(static_cast<int>(std::floor(y * image_height)), 0, image_height - 1);
    return {py / kPatchSize, px / kPatchSize, (py % kPatchSize) * kPatchSize + px % kPatchSize};
}

std::pair<double, double> reconstruct(int grid_row, int grid_col, int pixel, int image_width, int image_height) {
    const int px = grid_col * kPatchSize + pixel % kPatchSize;
    const int py = grid_row * kPatchSize + pixel / kPatchSize;
    return {(px + 0.5) / image_width, (py + 0.5) / image_height};
}

SchemaArity max_arity(const RecordSchema& schema) {
    SchemaArity a;
    for (const auto& t : schema.types) {
        a.discrete = std::max(a.discrete, t.endpoints + t.discrete_count());
        a.continuous = std::max(a.continuous, t.scalar_count());
    }
    return a;
}

NodeBatch encode_node_batch(const std::vector<std::vector<Token>>& sequences, const RecordSchema& schema) {
    NodeBatch b;
    const auto arity = max_arity(schema);
    b.batch = static_cast<int>(sequences.size());
    b.discrete_width = arity.discrete;
    b.continuous_width = arity.continuous;
    for (const auto& s : sequences) b.length = std::max(b.length, static_cast<int>(s.size()));
    const std::size_t slots = static_cast<std::size_t>(b.batch) * static_cast<std::size_t>(b.length);
    b.kind.assign(slots, TokenKind::Pad);
    b.type.assign(slots, -1);
    b.position.assign(slots, -1);
    b.discrete.assign(slots * static_cast<std::size_t>(b.discrete_width), -1);
    b.discrete_mask.assign(slots * static_cast<std::size_t>(b.discrete_width), 0);
    b.continuous.assign(slots * static_cast<std::size_t>(b.continuous_width), 0.0);
    b.continuous_mask.assign(slots * static_cast<std::size_t>(b.continuous_width), 0);
    for (int i = 0; i < b.batch; ++i) {
        const auto& seq = sequences[static_cast<std::size_t>(i)];
        b.lengths.push_back(static_cast<int>(seq.size()));
        for (int p = 0; p < static_cast<int>(seq.size()); ++p) {
            const auto& tok = seq[static_cast<std::size_t>(p)];
            if (tok.kind == TokenKind::Pad) throw InvalidInput("explicit pad tokens are not allowed in a sequence");
            const std::size_t s = b.slot(i, p);
            b.kind[s] = tok.kind;
            b.position[s] = tok.position;
            if (tok.kind != TokenKind::Node) continue;
            validate_node(schema, tok.node);
            b.type[s] = tok.node.type;
            for (std::size_t k = 0; k < tok.node.discrete.size(); ++k) {
                b.discrete[s * static_cast<std::size_t>(b.discrete_width) + k] = tok.node.discrete[k];
                b.discrete_mask[s * static_cast<std::size_t>(b.discrete_width) + k] = 1;
            }
            for (std::size_t k = 0; k < tok.node.continuous.size(); ++k) {
                b.continuous[s * static_cast<std::size_t>(b.continuous_width) + k] = tok.node.continuous[k];
                b.continuous_mask[s * static_cast<std::size_t>(b.continuous_width) + k] = 1;
            }
        }
    }
    return b;
}

NodeBatch encode_node_batch(const std::vector<std::vector<Node>>& sequences, const RecordSchema& schema) {
    std::vector<std::vector<Token>> tokens;
    tokens.reserve(sequences.size());
    for (const auto& seq : sequences) {
        auto& out = tokens.emplace_back();
        for (const auto& n : seq) out.push_back({TokenKind::Node, n, -1});
    }
    return encode_node_batch(tokens, schema);
}

std::vector<Token> decode_node_batch(const NodeBatch& batch, int item) {
    std::vector<Token> out;
    for (int p = 0; p < batch.lengths.at(static_cast<std::size_t>(item)); ++p) {
        const std::size_t s = batch.slot(item, p);
        Token tok;
        tok.kind = batch.kind[s];
        tok.position = batch.position[s];
        if (tok.kind == TokenKind::Node) {
            tok.node.type = batch.type[s];
            for (int k = 0; k < batch.discrete_width; ++k) {
                const std::size_t d = s * static_cast<std::size_t>(batch.discrete_width) + static_cast<std::size_t>(k);
                if (batch.discrete_mask[d]) tok.node.discrete.push_back(batch.discrete[d]);
            }
            for (int k = 0; k < batch.continuous_width; ++k) {
                const std::size_t c = s * static_cast<std::size_t>(batch.continuous_width) + static_cast<std::size_t>(k);
                if (batch.continuous_mask[c]) tok.node.continuous.push_back(batch.continuous[c]);
            }
        }
        out.push_back(std::move(tok));
    }
    return out;
}

std::vector<double> sinusoid_1d(int position, int dim) {
    std::vector<double> pe(static_cast<std::size_t>(dim), 0.0);
    for (int i = 0; i + 1 < dim; i += 2) {
        const double freq = std::pow(10000.0, -static_cast<double>(i) / dim);
        pe[static_cast<std::size_t>(i)] = std::sin(position * freq);
        pe[static_cast<std::size_t>(i) + 1] = std::cos(position * freq);
    }
    return pe;
}

std::vector<double> sinusoid_2d(int row, int col, int dim) {
    const int half = dim / 2;
    auto r = sinusoid_1d(row, half);
    auto c = sinusoid_1d(col, dim - half);
    r.insert(r.end(), c.begin(), c.end());
    return r;
}

}  // namespace docrec
