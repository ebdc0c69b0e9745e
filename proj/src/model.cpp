#include "docrec/model.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "docrec/rng.hpp"

namespace docrec {

using ad::Matrix;
using ad::Var;

ModelConfig ModelConfig::full() { return ModelConfig{}; }

ModelConfig ModelConfig::desk() {
    ModelConfig c;
    c.embed_dim = 128;
    c.encoder_layers = 2;
    c.decoder_layers = 2;
    c.heads = 4;
    c.ffn_hidden = 512;
    return c;
}

ModelConfig ModelConfig::tiny() {
    ModelConfig c;
    c.embed_dim = 16;
    c.encoder_layers = 1;
    c.decoder_layers = 1;
    c.heads = 2;
    c.ffn_hidden = 32;
    c.property_dim = 8;
    return c;
}

void ModelConfig::check() const {
    if (embed_dim <= 0 || heads <= 0 || ffn_hidden <= 0 || property_dim <= 0) {
        throw InvalidInput("model dimensions must be positive");
    }
    if (encoder_layers < 0 || decoder_layers < 0) throw InvalidInput("layer counts must be non-negative");
    if (embed_dim % heads != 0) throw InvalidInput("embed_dim must be divisible by heads");
    if (patch_size != kPatchSize || pixel_vocab != patch_size * patch_size) {
        throw InvalidInput("pixel vocabulary must equal patch_size^2 with patch_size 10");
    }
}

SchemaLayout::SchemaLayout(const RecordSchema& schema) {
    type_count = schema.type_count();
    for (int t = 0; t < type_count; ++t) {
        const auto& spec = schema.type(t);
        auto& v = vocab.emplace_back();
        auto& er = embed_row.emplace_back();
        auto& lo = logit_offset.emplace_back();
        for (int k = 0; k < spec.endpoints; ++k) v.push_back(schema.max_nodes);
        for (const auto& d : spec.discrete) v.push_back(d.vocab);
        for (int size : v) {
            er.push_back(discrete_rows);
            lo.push_back(discrete_logits);
            discrete_rows += size;
            discrete_logits += size;
        }
        discrete_width = std::max(discrete_width, static_cast<int>(v.size()));
        auto& sr = scalar_row.emplace_back();
        for (int j = 0; j < spec.scalar_count(); ++j) sr.push_back(scalar_rows++);
        continuous_width = std::max(continuous_width, spec.scalar_count());
        auto& ch = coord_head.emplace_back();
        for (int p = 0; p < static_cast<int>(spec.points.size()); ++p) {
            ch.push_back(coord_heads++);
            head_owner.emplace_back(t, p);
        }
    }
}

template <typename T>
void ParameterSet<T>::add(const std::string& name, int rows, int cols) {
    if (values.count(name)) throw std::logic_error("duplicate parameter " + name);
    values[name] = Matrix<T>::Zero(rows, cols);
    grads[name] = Matrix<T>::Zero(rows, cols);
}

template <typename T>
void ParameterSet<T>::zero_grads() {
    for (auto& [k, g] : grads) g.setZero();
}

template <typename T>
std::size_t ParameterSet<T>::scalar_count() const {
    std::size_t n = 0;
    for (const auto& [k, v] : values) n += static_cast<std::size_t>(v.size());
    return n;
}

template <typename T>
Matrix<T>& ParameterSet<T>::at(const std::string& name) {
    auto it = values.find(name);
    if (it == values.end()) throw std::out_of_range("unknown parameter " + name);
    return it->second;
}

template <typename T>
const Matrix<T>& ParameterSet<T>::at(const std::string& name) const {
    auto it = values.find(name);
    if (it == values.end()) throw std::out_of_range("unknown parameter " + name);
    return it->second;
}

template <typename T>
Var<T> Session<T>::param(const std::string& name) {
    auto it = bound_.find(name);
    if (it != bound_.end()) return it->second;
    const auto& value = values_->at(name);
    auto v = tape.parameter(value, grads_ ? &grads_->grads.at(name) : nullptr);
    bound_.emplace(name, v);
    return v;
}

template <typename T>
Network<T>::Network(const ModelConfig& config, const RecordSchema& schema)
    : config_(config), schema_(schema), layout_(schema) {
    config_.check();
    schema_.check();
    const int D = config_.embed_dim;
    const int F = config_.ffn_hidden;
    const int P = config_.property_dim;
    auto add_ffn = [&](const std::string& pre) {
        params_.add(pre + ".ffn.w1", D, F);
        params_.add(pre + ".ffn.ln1.g", 1, F);
        params_.add(pre + ".ffn.ln1.b", 1, F);
        params_.add(pre + ".ffn.w2", F, D);
        params_.add(pre + ".ffn.ln2.g", 1, D);
        params_.add(pre + ".ffn.ln2.b", 1, D);
    };
    auto add_attn = [&](const std::string& pre) {
        for (const char* m : {".q", ".k", ".v", ".o"}) params_.add(pre + m, D, D);
    };
    params_.add("enc.patch.w", config_.pixel_vocab, D);
    params_.add("enc.patch.b", 1, D);
    for (int l = 0; l < config_.encoder_layers; ++l) {
        const std::string pre = "enc." + std::to_string(l);
        add_attn(pre + ".attn");
        add_ffn(pre);
    }
    for (int l = 0; l < config_.decoder_layers; ++l) {
        const std::string pre = "dec." + std::to_string(l);
        add_attn(pre + ".self");
        add_attn(pre + ".cross");
        add_ffn(pre);
    }
    const auto& L = layout_;
    params_.add("embed.type", L.type_count, P);
    params_.add("embed.discrete", L.discrete_rows + L.discrete_width, P);
    params_.add("embed.scalar.w", std::max(1, L.scalar_rows), P);
    params_.add("embed.scalar.b", L.scalar_rows + L.continuous_width, P);
    params_.add("embed.proj.w", P * (1 + L.discrete_width + L.continuous_width), D);
    params_.add("embed.proj.b", 1, D);
    params_.add("embed.special", 2, D);
    params_.add("head.type.w", D, L.type_count + 1);
    params_.add("head.type.b", 1, L.type_count + 1);
    if (L.discrete_logits > 0) {
        params_.add("head.discrete.w", D, L.discrete_logits);
        params_.add("head.discrete.b", 1, L.discrete_logits);
    }
    if (L.coord_heads > 0) {
        params_.add("head.coord.query", D, D * L.coord_heads);
        params_.add("head.coord.key", D, D);
        for (int c = 0; c < L.coord_heads; ++c) {
            params_.add("head.pixel." + std::to_string(c) + ".w", 2 * D, config_.pixel_vocab);
            params_.add("head.pixel." + std::to_string(c) + ".b", 1, config_.pixel_vocab);
        }
    }
    init(0);
}

template <typename T>
void Network<T>::init(std::uint64_t seed) {
    CounterRng root(seed);
    for (auto& [name, m] : params_.values) {
        // Each array draws from its own stream so adding a parameter never shifts the others.
        std::uint64_t tag = 1469598103934665603ULL;
        for (char ch : name) tag = (tag ^ static_cast<unsigned char>(ch)) * 1099511628211ULL;
        CounterRng rng = root.fork(tag);
        const bool is_gain = name.size() > 2 && name.compare(name.size() - 2, 2, ".g") == 0;
        const bool is_bias = name.size() > 2 && name.compare(name.size() - 2, 2, ".b") == 0;
        const bool is_table = name == "embed.type" || name == "embed.discrete" || name == "embed.scalar.w" ||
                              name == "embed.scalar.b" || name == "embed.special";
        if (is_table) {
            for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<T>(rng.normal());
        } else if (is_gain) {
            m.setOnes();
        } else if (is_bias) {
            m.setZero();
        } else {
            const double sd = 1.0 / std::sqrt(static_cast<double>(m.rows()));
            for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<T>(rng.normal() * sd);
        }
    }
}

template <typename T>
Var<T> Network<T>::attention_block(Session<T>& s, const std::string& prefix, Var<T> xq, Var<T> xkv,
                                   const ad::AttentionLayout& layout) const {
    auto q = ad::matmul(xq, s.param(prefix + ".q"));
    auto k = ad::matmul(xkv, s.param(prefix + ".k"));
    auto v = ad::matmul(xkv, s.param(prefix + ".v"));
    return ad::matmul(ad::attention(q, k, v, layout), s.param(prefix + ".o"));
}

template <typename T>
Var<T> Network<T>::feed_forward(Session<T>& s, const std::string& prefix, Var<T> x) const {
    auto h = ad::gelu(ad::matmul(x, s.param(prefix + ".ffn.w1")));
    h = ad::layer_norm(h, s.param(prefix + ".ffn.ln1.g"), s.param(prefix + ".ffn.ln1.b"));
    h = ad::matmul(h, s.param(prefix + ".ffn.w2"));
    return ad::layer_norm(h, s.param(prefix + ".ffn.ln2.g"), s.param(prefix + ".ffn.ln2.b"));
}

template <typename T>
EncodedImages<T> Network<T>::encode(Session<T>& s, const std::vector<const PatchSet*>& images) const {
    EncodedImages<T> out;
    out.batch = static_cast<int>(images.size());
    int longest = 0;
    for (const auto* ps : images) {
        out.counts.push_back(ps->count());
        longest = std::max(longest, ps->count());
    }
    // At least one (masked) slot keeps every matrix non-empty.
    out.patch_len = std::max(1, longest);
    const int D = config_.embed_dim;
    const Eigen::Index rows = static_cast<Eigen::Index>(out.batch) * out.patch_len;
    Matrix<T> pixels = Matrix<T>::Zero(rows, config_.pixel_vocab);
    Matrix<T> pe = Matrix<T>::Zero(rows, D);
    std::vector<T> present(static_cast<std::size_t>(rows), T(0));
    for (int b = 0; b < out.batch; ++b) {
        const auto& ps = *images[static_cast<std::size_t>(b)];
        for (int i = 0; i < ps.count(); ++i) {
            const Eigen::Index r = static_cast<Eigen::Index>(b) * out.patch_len + i;
            for (int j = 0; j < config_.pixel_vocab; ++j) {
                pixels(r, j) = static_cast<T>(ps.values[static_cast<std::size_t>(i) * kPatchPixels + static_cast<std::size_t>(j)]);
            }
            const auto enc = sinusoid_2d(ps.rows[static_cast<std::size_t>(i)], ps.cols[static_cast<std::size_t>(i)], D);
            for (int j = 0; j < D; ++j) pe(r, j) = static_cast<T>(enc[static_cast<std::size_t>(j)]);
            present[static_cast<std::size_t>(r)] = T(1);
        }
    }
    auto x = ad::add_row(ad::matmul(s.tape.constant(std::move(pixels)), s.param("enc.patch.w")), s.param("enc.patch.b"));
    x = ad::add(ad::scale_rows(x, present), s.tape.constant(std::move(pe)));
    auto mask = std::make_shared<std::vector<std::uint8_t>>(static_cast<std::size_t>(out.batch) * out.patch_len * out.patch_len, 0);
    for (int b = 0; b < out.batch; ++b) {
        for (int i = 0; i < out.patch_len; ++i) {
            for (int j = 0; j < out.counts[static_cast<std::size_t>(b)]; ++j) {
                (*mask)[(static_cast<std::size_t>(b) * out.patch_len + i) * out.patch_len + j] = 1;
            }
        }
    }
    out.self_mask = mask;
    ad::AttentionLayout layout{out.batch, config_.heads, out.patch_len, out.patch_len, mask};
    for (int l = 0; l < config_.encoder_layers; ++l) {
        const std::string pre = "enc." + std::to_string(l);
        x = ad::add(x, attention_block(s, pre + ".attn", x, x, layout));
        x = ad::add(x, feed_forward(s, pre, x));
    }
    out.embeddings = x;
    return out;
}

template <typename T>
Var<T> Network<T>::embed(Session<T>& s, const NodeBatch& batch) const {
    const auto& L = layout_;
    if (batch.discrete_width > L.discrete_width || batch.continuous_width > L.continuous_width) {
        throw InvalidInput("node batch is wider than the network schema");
    }
    const std::size_t n = static_cast<std::size_t>(batch.batch) * static_cast<std::size_t>(batch.length);
    const int D = config_.embed_dim;
    std::vector<int> type_idx(n, -1);
    std::vector<std::vector<int>> disc_idx(static_cast<std::size_t>(L.discrete_width), std::vector<int>(n, -1));
    std::vector<std::vector<int>> scal_w(static_cast<std::size_t>(L.continuous_width), std::vector<int>(n, -1));
    std::vector<std::vector<int>> scal_b(static_cast<std::size_t>(L.continuous_width), std::vector<int>(n, -1));
    std::vector<std::vector<T>> scal_x(static_cast<std::size_t>(L.continuous_width), std::vector<T>(n, T(0)));
    std::vector<T> is_node(n, T(0));
    std::vector<int> special(n, -1);
    Matrix<T> pe = Matrix<T>::Zero(static_cast<Eigen::Index>(n), D);
    for (std::size_t r = 0; r < n; ++r) {
        const auto kind = batch.kind[r];
        if (kind == TokenKind::Bos) special[r] = 0;
        if (kind == TokenKind::Prediction) special[r] = 1;
        if (kind != TokenKind::Pad && batch.position[r] >= 0) {
            const auto enc = sinusoid_1d(batch.position[r], D);
            for (int j = 0; j < D; ++j) pe(static_cast<Eigen::Index>(r), j) = static_cast<T>(enc[static_cast<std::size_t>(j)]);
        }
        if (kind != TokenKind::Node) continue;
        const int t = batch.type[r];
        is_node[r] = T(1);
        type_idx[r] = t;
        for (int k = 0; k < L.discrete_width; ++k) {
            const std::size_t d = r * static_cast<std::size_t>(batch.discrete_width) + static_cast<std::size_t>(k);
            const bool has = k < batch.discrete_width && batch.discrete_mask[d];
            disc_idx[static_cast<std::size_t>(k)][r] =
                has ? L.embed_row[static_cast<std::size_t>(t)][static_cast<std::size_t>(k)] + batch.discrete[d]
                    : L.discrete_rows + k;
        }
        for (int j = 0; j < L.continuous_width; ++j) {
            const std::size_t c = r * static_cast<std::size_t>(batch.continuous_width) + static_cast<std::size_t>(j);
            const bool has = j < batch.continuous_width && batch.continuous_mask[c];
            if (has) {
                const int row = L.scalar_row[static_cast<std::size_t>(t)][static_cast<std::size_t>(j)];
                scal_w[static_cast<std::size_t>(j)][r] = row;
                scal_b[static_cast<std::size_t>(j)][r] = row;
                scal_x[static_cast<std::size_t>(j)][r] = static_cast<T>(batch.continuous[c]);
            } else {
                scal_b[static_cast<std::size_t>(j)][r] = L.scalar_rows + j;
            }
        }
    }
    std::vector<Var<T>> parts;
    parts.push_back(ad::gather_rows(s.param("embed.type"), type_idx));
    for (auto& idx : disc_idx) parts.push_back(ad::gather_rows(s.param("embed.discrete"), std::move(idx)));
    for (int j = 0; j < L.continuous_width; ++j) {
        auto w = ad::scale_rows(ad::gather_rows(s.param("embed.scalar.w"), std::move(scal_w[static_cast<std::size_t>(j)])),
                                std::move(scal_x[static_cast<std::size_t>(j)]));
        parts.push_back(ad::add(w, ad::gather_rows(s.param("embed.scalar.b"), std::move(scal_b[static_cast<std::size_t>(j)]))));
    }
    auto nodes = ad::add_row(ad::matmul(ad::concat_cols(parts), s.param("embed.proj.w")), s.param("embed.proj.b"));
    auto x = ad::add(ad::scale_rows(nodes, std::move(is_node)), ad::gather_rows(s.param("embed.special"), std::move(special)));
    return ad::add(x, s.tape.constant(std::move(pe)));
}

template <typename T>
Var<T> Network<T>::decode(Session<T>& s, Var<T> x, const EncodedImages<T>& enc, int batch, int length,
                          std::shared_ptr<const std::vector<std::uint8_t>> mask) const {
    if (!mask || mask->size() != static_cast<std::size_t>(batch) * length * length) {
        throw InvalidInput("decoder mask does not match the sequence shape");
    }
    if (enc.batch != batch) throw InvalidInput("image batch does not match node batch");
    auto cross = std::make_shared<std::vector<std::uint8_t>>(static_cast<std::size_t>(batch) * length * enc.patch_len, 0);
    for (int b = 0; b < batch; ++b) {
        for (int i = 0; i < length; ++i) {
            for (int j = 0; j < enc.counts[static_cast<std::size_t>(b)]; ++j) {
                (*cross)[(static_cast<std::size_t>(b) * length + i) * enc.patch_len + j] = 1;
            }
        }
    }
    ad::AttentionLayout self_layout{batch, config_.heads, length, length, mask};
    ad::AttentionLayout cross_layout{batch, config_.heads, length, enc.patch_len, cross};
    for (int l = 0; l < config_.decoder_layers; ++l) {
        const std::string pre = "dec." + std::to_string(l);
        x = ad::add(x, attention_block(s, pre + ".self", x, x, self_layout));
        x = ad::add(x, attention_block(s, pre + ".cross", x, enc.embeddings, cross_layout));
        x = ad::add(x, feed_forward(s, pre, x));
    }
    return x;
}

template <typename T>
HeadOutput<T> Network<T>::heads(Session<T>& s, Var<T> h, const EncodedImages<T>& enc, int length,
                                std::vector<int> rows) const {
    HeadOutput<T> out;
    if (!std::is_sorted(rows.begin(), rows.end())) throw InvalidInput("head rows must be sorted");
    for (int r : rows) out.items.push_back(r / length);
    out.rows = std::move(rows);
    auto hs = ad::gather_rows(h, out.rows);
    out.type_logits = ad::add_row(ad::matmul(hs, s.param("head.type.w")), s.param("head.type.b"));
    if (layout_.discrete_logits > 0) {
        out.discrete_logits = ad::add_row(ad::matmul(hs, s.param("head.discrete.w")), s.param("head.discrete.b"));
    }
    const int C = layout_.coord_heads;
    if (C == 0 || out.rows.empty()) return out;
    auto queries = ad::matmul(hs, s.param("head.coord.query"));
    auto keys = ad::matmul(enc.embeddings, s.param("head.coord.key"));
    out.patch_scores = ad::grouped_scores(queries, keys, out.items, C, enc.patch_len);
    const auto& scores = out.patch_scores.value();
    const std::size_t n = out.rows.size();
    out.patch_argmax.assign(static_cast<std::size_t>(C), std::vector<int>(n, -1));
    for (int c = 0; c < C; ++c) {
        std::vector<int> gather(n, -1);
        for (std::size_t i = 0; i < n; ++i) {
            const int item = out.items[i];
            const int count = enc.counts[static_cast<std::size_t>(item)];
            if (count == 0) continue;
            const auto row = scores.row(static_cast<Eigen::Index>(i) * C + c);
            const int best = argmax_index(row.data(), row.data() + count);
            out.patch_argmax[static_cast<std::size_t>(c)][i] = best;
            gather[i] = item * enc.patch_len + best;
        }
        auto picked = ad::gather_rows(enc.embeddings, std::move(gather));
        const std::string pre = "head.pixel." + std::to_string(c);
        out.pixel_logits.push_back(
            ad::add_row(ad::matmul(ad::concat_cols(std::vector<Var<T>>{hs, picked}), s.param(pre + ".w")), s.param(pre + ".b")));
    }
    return out;
}

namespace {

template <typename Row>
std::vector<double> softmax(const Row& row, Eigen::Index begin, Eigen::Index count) {
    std::vector<double> p(static_cast<std::size_t>(count));
    double mx = -INFINITY;
    for (Eigen::Index j = 0; j < count; ++j) mx = std::max(mx, static_cast<double>(row(begin + j)));
    double total = 0.0;
    for (Eigen::Index j = 0; j < count; ++j) {
        p[static_cast<std::size_t>(j)] = std::exp(static_cast<double>(row(begin + j)) - mx);
        total += p[static_cast<std::size_t>(j)];
    }
    for (auto& v : p) v /= total;
    return p;
}

}  // namespace

template <typename T>
NodePrediction Network<T>::prediction(const HeadOutput<T>& out, int index, const PatchSet& patches) const {
    const auto& L = layout_;
    NodePrediction pred;
    const auto i = static_cast<Eigen::Index>(index);
    pred.type_dist = softmax(out.type_logits.value().row(i), 0, L.type_count + 1);
    pred.discrete.resize(static_cast<std::size_t>(L.type_count));
    pred.points.resize(static_cast<std::size_t>(L.type_count));
    for (int t = 0; t < L.type_count; ++t) {
        const auto& voc = L.vocab[static_cast<std::size_t>(t)];
        for (std::size_t k = 0; k < voc.size(); ++k) {
            pred.discrete[static_cast<std::size_t>(t)].push_back(
                softmax(out.discrete_logits.value().row(i), L.logit_offset[static_cast<std::size_t>(t)][k], voc[k]));
        }
    }
    const int C = L.coord_heads;
    if (C == 0) return pred;
    if (patches.count() == 0) throw InvalidInput("coordinate prediction needs at least one informative patch");
    for (int c = 0; c < C; ++c) {
        const auto [t, p] = L.head_owner[static_cast<std::size_t>(c)];
        PointPrediction pt;
        pt.patch_dist = softmax(out.patch_scores.value().row(i * C + c), 0, patches.count());
        pt.pixel_dist = softmax(out.pixel_logits[static_cast<std::size_t>(c)].value().row(i), 0, config_.pixel_vocab);
        const int patch = out.patch_argmax[static_cast<std::size_t>(c)][static_cast<std::size_t>(index)];
        const int pixel = argmax_index(pt.pixel_dist.begin(), pt.pixel_dist.end());
        const auto [x, y] = reconstruct(patches.rows[static_cast<std::size_t>(patch)], patches.cols[static_cast<std::size_t>(patch)],
                                        pixel, patches.image_width, patches.image_height);
        pt.x = x;
        pt.y = y;
        pred.points[static_cast<std::size_t>(t)].push_back(std::move(pt));
        (void)p;
    }
    return pred;
}

template struct ParameterSet<float>;
template struct ParameterSet<double>;
template class Session<float>;
template class Session<double>;
template class Network<float>;
template class Network<double>;

}  // namespace docrec
