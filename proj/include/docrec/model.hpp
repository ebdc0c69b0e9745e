#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include "docrec/autodiff.hpp"
#include "docrec/record.hpp"
#include "docrec/tensorize.hpp"

namespace docrec {

struct ModelConfig {
    int embed_dim = 512;
    int encoder_layers = 3;
    int decoder_layers = 3;
    int heads = 8;
    int ffn_hidden = 2048;
    int property_dim = 64;
    int patch_size = kPatchSize;
    int pixel_vocab = kPatchPixels;

    /// Full-size configuration: embed 512, 3+3 layers, 8 heads, FFN 2048.
    static ModelConfig full();
    /// Default for CPU runs: embed 128, 2+2 layers, 4 heads, FFN 512.
    static ModelConfig desk();
    /// Gradient-check size: embed 16, 1+1 layers.
    static ModelConfig tiny();

    void check() const;
    friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

/// Index bookkeeping that maps a schema onto the embedding tables and output heads.
///
/// Flat discrete slots of a type are its relationship endpoints (vocabulary max_nodes)
/// followed by its discrete properties. Every coordinate point gets its own head.
struct SchemaLayout {
    int type_count = 0;
    int discrete_width = 0;
    int continuous_width = 0;
    std::vector<std::vector<int>> vocab;         // [type][slot]
    std::vector<std::vector<int>> embed_row;     // first row of [type][slot] in the discrete table
    int discrete_rows = 0;                       // value rows; null rows follow, one per slot
    std::vector<std::vector<int>> logit_offset;  // [type][slot] in the discrete logits
    int discrete_logits = 0;
    std::vector<std::vector<int>> scalar_row;    // [type][scalar]
    int scalar_rows = 0;                         // null rows follow, one per scalar slot
    std::vector<std::vector<int>> coord_head;    // [type][point]
    std::vector<std::pair<int, int>> head_owner; // head -> (type, point)
    int coord_heads = 0;

    explicit SchemaLayout(const RecordSchema& schema);
    SchemaLayout() = default;
};

template <typename T>
struct ParameterSet {
    std::map<std::string, ad::Matrix<T>> values;
    std::map<std::string, ad::Matrix<T>> grads;

    void add(const std::string& name, int rows, int cols);
    void zero_grads();
    std::size_t scalar_count() const;
    ad::Matrix<T>& at(const std::string& name);
    const ad::Matrix<T>& at(const std::string& name) const;

    template <typename U>
    ParameterSet<U> cast() const {
        ParameterSet<U> out;
        for (const auto& [k, v] : values) {
            out.values[k] = v.template cast<U>();
            out.grads[k] = ad::Matrix<U>::Zero(v.rows(), v.cols());
        }
        return out;
    }
};

/// A tape bound to one parameter set; parameters are bound lazily, once per tape.
/// The const form records nothing and never touches gradients.
template <typename T>
class Session {
public:
    Session(ParameterSet<T>& params, bool record) : tape(record), values_(&params), grads_(record ? &params : nullptr) {}
    explicit Session(const ParameterSet<T>& params) : tape(false), values_(&params) {}
    ad::Tape<T> tape;
    ad::Var<T> param(const std::string& name);

private:
    const ParameterSet<T>* values_;
    ParameterSet<T>* grads_ = nullptr;
    std::unordered_map<std::string, ad::Var<T>> bound_;
};

/// Encoder output for a batch of images, padded to the largest patch count.
template <typename T>
struct EncodedImages {
    ad::Var<T> embeddings;   // batch*patch_len x embed_dim
    int batch = 0;
    int patch_len = 0;
    std::vector<int> counts;
    std::shared_ptr<const std::vector<std::uint8_t>> self_mask;
};

/// Head outputs for a selection of decoder rows.
template <typename T>
struct HeadOutput {
    std::vector<int> rows;          // decoder rows (item * length + position)
    std::vector<int> items;
    ad::Var<T> type_logits;         // n x (types + 1)
    ad::Var<T> discrete_logits;     // n x discrete_logits (unset when the schema has none)
    ad::Var<T> patch_scores;        // (n * heads) x patch_len, rows ordered (row, head)
    std::vector<ad::Var<T>> pixel_logits;    // per head: n x pixel_vocab
    std::vector<std::vector<int>> patch_argmax;  // [head][row], -1 when the image has no patches
};

template <typename T>
class Network {
public:
    Network(const ModelConfig& config, const RecordSchema& schema);

    const ModelConfig& config() const { return config_; }
    const RecordSchema& schema() const { return schema_; }
    const SchemaLayout& layout() const { return layout_; }
    ParameterSet<T>& params() { return params_; }
    const ParameterSet<T>& params() const { return params_; }

    /// Deterministic initialisation from a seed.
    void init(std::uint64_t seed);

    EncodedImages<T> encode(Session<T>& s, const std::vector<const PatchSet*>& images) const;
    ad::Var<T> embed(Session<T>& s, const NodeBatch& batch) const;
    /// `mask` is batch x length x length, 1 = query may attend to key.
    ad::Var<T> decode(Session<T>& s, ad::Var<T> x, const EncodedImages<T>& enc, int batch, int length,
                      std::shared_ptr<const std::vector<std::uint8_t>> mask) const;
    HeadOutput<T> heads(Session<T>& s, ad::Var<T> h, const EncodedImages<T>& enc, int length,
                        std::vector<int> rows) const;

    /// Softmax distributions and reconstructed coordinates for one selected row.
    NodePrediction prediction(const HeadOutput<T>& out, int index, const PatchSet& patches) const;

private:
    ad::Var<T> attention_block(Session<T>& s, const std::string& prefix, ad::Var<T> xq, ad::Var<T> xkv,
                               const ad::AttentionLayout& layout) const;
    ad::Var<T> feed_forward(Session<T>& s, const std::string& prefix, ad::Var<T> x) const;

    ModelConfig config_;
    RecordSchema schema_;
    SchemaLayout layout_;
    ParameterSet<T> params_;
};

}  // namespace docrec
