#include "docrec/autodiff.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace docrec::ad {

namespace {

template <typename T>
void require_same_tape(Var<T> a, Var<T> b) {
    if (a.tape != b.tape) throw std::logic_error("vars from different tapes");
}

template <typename T>
void require_shape(bool ok, const char* op) {
    if (!ok) throw std::invalid_argument(std::string("shape mismatch in ") + op);
}

}  // namespace

template <typename T>
Var<T> matmul(Var<T> a, Var<T> b) {
    require_same_tape(a, b);
    require_shape<T>(a.cols() == b.rows(), "matmul");
    Tape<T>* tape = a.tape;
    Matrix<T> out = a.value() * b.value();
    const bool ng = tape->needs_grad(a.id) || tape->needs_grad(b.id);
    return tape->push(std::move(out), ng, [tape, a, b](const Matrix<T>& g) {
        if (tape->needs_grad(a.id)) tape->grad(a.id).noalias() += g * b.value().transpose();
        if (tape->needs_grad(b.id)) tape->grad(b.id).noalias() += a.value().transpose() * g;
    });
}

template <typename T>
Var<T> add(Var<T> a, Var<T> b) {
    require_same_tape(a, b);
    require_shape<T>(a.rows() == b.rows() && a.cols() == b.cols(), "add");
    Tape<T>* tape = a.tape;
    Matrix<T> out = a.value() + b.value();
    const bool ng = tape->needs_grad(a.id) || tape->needs_grad(b.id);
    return tape->push(std::move(out), ng, [tape, a, b](const Matrix<T>& g) {
        if (tape->needs_grad(a.id)) tape->grad(a.id) += g;
        if (tape->needs_grad(b.id)) tape->grad(b.id) += g;
    });
}

template <typename T>
Var<T> add_row(Var<T> a, Var<T> row) {
    require_same_tape(a, row);
    require_shape<T>(row.rows() == 1 && row.cols() == a.cols(), "add_row");
    Tape<T>* tape = a.tape;
    Matrix<T> out = a.value().rowwise() + row.value().row(0);
    const bool ng = tape->needs_grad(a.id) || tape->needs_grad(row.id);
    return tape->push(std::move(out), ng, [tape, a, row](const Matrix<T>& g) {
        if (tape->needs_grad(a.id)) tape->grad(a.id) += g;
        if (tape->needs_grad(row.id)) tape->grad(row.id) += g.colwise().sum();
    });
}

template <typename T>
Var<T> scale(Var<T> a, T factor) {
    Tape<T>* tape = a.tape;
    Matrix<T> out = a.value() * factor;
    return tape->push(std::move(out), tape->needs_grad(a.id),
                      [tape, a, factor](const Matrix<T>& g) { tape->grad(a.id) += g * factor; });
}

template <typename T>
Var<T> gelu(Var<T> a) {
    Tape<T>* tape = a.tape;
    const T inv_sqrt2 = T(0.70710678118654752440);
    Matrix<T> out = a.value().unaryExpr([inv_sqrt2](T x) { return T(0.5) * x * (T(1) + std::erf(x * inv_sqrt2)); });
    return tape->push(std::move(out), tape->needs_grad(a.id), [tape, a, inv_sqrt2](const Matrix<T>& g) {
        const T inv_sqrt_2pi = T(0.39894228040143267794);
        Matrix<T> d = a.value().unaryExpr([&](T x) {
            return T(0.5) * (T(1) + std::erf(x * inv_sqrt2)) + x * inv_sqrt_2pi * std::exp(T(-0.5) * x * x);
        });
        tape->grad(a.id) += g.cwiseProduct(d);
    });
}

template <typename T>
Var<T> layer_norm(Var<T> a, Var<T> gain, Var<T> bias, T eps) {
    require_same_tape(a, gain);
    require_same_tape(a, bias);
    require_shape<T>(gain.cols() == a.cols() && bias.cols() == a.cols() && gain.rows() == 1 && bias.rows() == 1,
                     "layer_norm");
    Tape<T>* tape = a.tape;
    const auto& x = a.value();
    const Eigen::Index n = x.cols();
    auto xhat = std::make_shared<Matrix<T>>(x.rows(), n);
    auto inv_std = std::make_shared<std::vector<T>>(static_cast<std::size_t>(x.rows()));
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
        const T mean = x.row(r).mean();
        const T var = (x.row(r).array() - mean).square().mean();
        const T is = T(1) / std::sqrt(var + eps);
        (*inv_std)[static_cast<std::size_t>(r)] = is;
        xhat->row(r) = (x.row(r).array() - mean) * is;
    }
    Matrix<T> out = (xhat->array().rowwise() * gain.value().row(0).array()).rowwise() + bias.value().row(0).array();
    const bool ng = tape->needs_grad(a.id) || tape->needs_grad(gain.id) || tape->needs_grad(bias.id);
    return tape->push(std::move(out), ng, [tape, a, gain, bias, xhat, inv_std, n](const Matrix<T>& g) {
        if (tape->needs_grad(gain.id)) tape->grad(gain.id) += g.cwiseProduct(*xhat).colwise().sum();
        if (tape->needs_grad(bias.id)) tape->grad(bias.id) += g.colwise().sum();
        if (!tape->needs_grad(a.id)) return;
        auto& ga = tape->grad(a.id);
        const auto gamma = gain.value().row(0).array();
        for (Eigen::Index r = 0; r < g.rows(); ++r) {
            const Eigen::Array<T, 1, Eigen::Dynamic> dxhat = g.row(r).array() * gamma;
            const T m1 = dxhat.mean();
            const T m2 = (dxhat * xhat->row(r).array()).mean();
            ga.row(r).array() += (dxhat - m1 - xhat->row(r).array() * m2) * (*inv_std)[static_cast<std::size_t>(r)];
        }
        (void)n;
    });
}

template <typename T>
Var<T> attention(Var<T> q, Var<T> k, Var<T> v, const AttentionLayout& layout) {
    require_same_tape(q, k);
    require_same_tape(q, v);
    const int B = layout.batch, H = layout.heads, Lq = layout.query_len, Lk = layout.key_len;
    const Eigen::Index D = q.cols();
    require_shape<T>(q.rows() == static_cast<Eigen::Index>(B) * Lq && k.rows() == static_cast<Eigen::Index>(B) * Lk &&
                         v.rows() == k.rows() && k.cols() == D && v.cols() == D && D % H == 0,
                     "attention");
    if (layout.mask) {
        require_shape<T>(layout.mask->size() == static_cast<std::size_t>(B) * Lq * Lk, "attention mask");
    }
    Tape<T>* tape = q.tape;
    const Eigen::Index dh = D / H;
    const T scale_factor = T(1) / std::sqrt(static_cast<T>(dh));
    // Softmax weights per (item, head), kept for the backward pass.
    auto probs = std::make_shared<std::vector<Matrix<T>>>(static_cast<std::size_t>(B) * H);
    Matrix<T> out = Matrix<T>::Zero(q.rows(), D);
    const auto& Q = q.value();
    const auto& K = k.value();
    const auto& V = v.value();
    const std::uint8_t* mask = layout.mask ? layout.mask->data() : nullptr;
    for (int b = 0; b < B; ++b) {
        for (int h = 0; h < H; ++h) {
            Matrix<T> s = Q.block(static_cast<Eigen::Index>(b) * Lq, h * dh, Lq, dh) *
                          K.block(static_cast<Eigen::Index>(b) * Lk, h * dh, Lk, dh).transpose();
            s *= scale_factor;
            for (int i = 0; i < Lq; ++i) {
                T mx = -std::numeric_limits<T>::infinity();
                const std::uint8_t* mrow = mask ? mask + (static_cast<std::size_t>(b) * Lq + i) * Lk : nullptr;
                for (int j = 0; j < Lk; ++j) {
                    if (!mrow || mrow[j]) mx = std::max(mx, s(i, j));
                }
                if (mx == -std::numeric_limits<T>::infinity()) {
                    s.row(i).setZero();
                    continue;
                }
                T total = 0;
                for (int j = 0; j < Lk; ++j) {
                    const T e = (!mrow || mrow[j]) ? std::exp(s(i, j) - mx) : T(0);
                    s(i, j) = e;
                    total += e;
                }
                s.row(i) /= total;
            }
            out.block(static_cast<Eigen::Index>(b) * Lq, h * dh, Lq, dh).noalias() =
                s * V.block(static_cast<Eigen::Index>(b) * Lk, h * dh, Lk, dh);
            (*probs)[static_cast<std::size_t>(b) * H + h] = std::move(s);
        }
    }
    const bool ng = tape->needs_grad(q.id) || tape->needs_grad(k.id) || tape->needs_grad(v.id);
    return tape->push(std::move(out), ng, [tape, q, k, v, B, H, Lq, Lk, dh, scale_factor, probs](const Matrix<T>& g) {
        const auto& Q = q.value();
        const auto& K = k.value();
        const auto& V = v.value();
        const bool gq = tape->needs_grad(q.id), gk = tape->needs_grad(k.id), gv = tape->needs_grad(v.id);
        for (int b = 0; b < B; ++b) {
            for (int h = 0; h < H; ++h) {
                const Matrix<T>& p = (*probs)[static_cast<std::size_t>(b) * H + h];
                const auto go = g.block(static_cast<Eigen::Index>(b) * Lq, h * dh, Lq, dh);
                if (gv) {
                    tape->grad(v.id).block(static_cast<Eigen::Index>(b) * Lk, h * dh, Lk, dh).noalias() += p.transpose() * go;
                }
                if (!gq && !gk) continue;
                Matrix<T> dp = go * V.block(static_cast<Eigen::Index>(b) * Lk, h * dh, Lk, dh).transpose();
                const Eigen::Matrix<T, Eigen::Dynamic, 1> rowdot = (dp.cwiseProduct(p)).rowwise().sum();
                Matrix<T> ds = p.cwiseProduct(dp.colwise() - rowdot) * scale_factor;
                if (gq) {
                    tape->grad(q.id).block(static_cast<Eigen::Index>(b) * Lq, h * dh, Lq, dh).noalias() +=
                        ds * K.block(static_cast<Eigen::Index>(b) * Lk, h * dh, Lk, dh);
                }
                if (gk) {
                    tape->grad(k.id).block(static_cast<Eigen::Index>(b) * Lk, h * dh, Lk, dh).noalias() +=
                        ds.transpose() * Q.block(static_cast<Eigen::Index>(b) * Lq, h * dh, Lq, dh);
                }
            }
        }
    });
}

template <typename T>
Var<T> gather_rows(Var<T> src, std::vector<int> index) {
    Tape<T>* tape = src.tape;
    const auto& s = src.value();
    Matrix<T> out(static_cast<Eigen::Index>(index.size()), s.cols());
    for (std::size_t i = 0; i < index.size(); ++i) {
        if (index[i] < 0) {
            out.row(static_cast<Eigen::Index>(i)).setZero();
        } else {
            if (index[i] >= s.rows()) throw std::out_of_range("gather_rows index out of range");
            out.row(static_cast<Eigen::Index>(i)) = s.row(index[i]);
        }
    }
    return tape->push(std::move(out), tape->needs_grad(src.id), [tape, src, index = std::move(index)](const Matrix<T>& g) {
        auto& gs = tape->grad(src.id);
        for (std::size_t i = 0; i < index.size(); ++i) {
            if (index[i] >= 0) gs.row(index[i]) += g.row(static_cast<Eigen::Index>(i));
        }
    });
}

template <typename T>
Var<T> scale_rows(Var<T> a, std::vector<T> factor) {
    require_shape<T>(static_cast<Eigen::Index>(factor.size()) == a.rows(), "scale_rows");
    Tape<T>* tape = a.tape;
    const Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>> f(factor.data(), static_cast<Eigen::Index>(factor.size()));
    Matrix<T> out = a.value().array().colwise() * f.array();
    return tape->push(std::move(out), tape->needs_grad(a.id), [tape, a, factor = std::move(factor)](const Matrix<T>& g) {
        const Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>> f(factor.data(), static_cast<Eigen::Index>(factor.size()));
        tape->grad(a.id).array() += g.array().colwise() * f.array();
    });
}

template <typename T>
Var<T> concat_cols(const std::vector<Var<T>>& parts) {
    if (parts.empty()) throw std::invalid_argument("concat_cols of nothing");
    Tape<T>* tape = parts.front().tape;
    const Eigen::Index rows = parts.front().rows();
    Eigen::Index cols = 0;
    bool ng = false;
    for (const auto& p : parts) {
        require_shape<T>(p.tape == tape && p.rows() == rows, "concat_cols");
        cols += p.cols();
        ng = ng || tape->needs_grad(p.id);
    }
    Matrix<T> out(rows, cols);
    Eigen::Index c = 0;
    for (const auto& p : parts) {
        out.middleCols(c, p.cols()) = p.value();
        c += p.cols();
    }
    return tape->push(std::move(out), ng, [tape, parts](const Matrix<T>& g) {
        Eigen::Index c = 0;
        for (const auto& p : parts) {
            if (tape->needs_grad(p.id)) tape->grad(p.id) += g.middleCols(c, p.cols());
            c += p.cols();
        }
    });
}

template <typename T>
Var<T> concat_rows(const std::vector<Var<T>>& parts) {
    if (parts.empty()) throw std::invalid_argument("concat_rows of nothing");
    Tape<T>* tape = parts.front().tape;
    const Eigen::Index cols = parts.front().cols();
    Eigen::Index rows = 0;
    bool ng = false;
    for (const auto& p : parts) {
        require_shape<T>(p.tape == tape && p.cols() == cols, "concat_rows");
        rows += p.rows();
        ng = ng || tape->needs_grad(p.id);
    }
    Matrix<T> out(rows, cols);
    Eigen::Index r = 0;
    for (const auto& p : parts) {
        out.middleRows(r, p.rows()) = p.value();
        r += p.rows();
    }
    return tape->push(std::move(out), ng, [tape, parts](const Matrix<T>& g) {
        Eigen::Index r = 0;
        for (const auto& p : parts) {
            if (tape->needs_grad(p.id)) tape->grad(p.id) += g.middleRows(r, p.rows());
            r += p.rows();
        }
    });
}

template <typename T>
Var<T> grouped_scores(Var<T> queries, Var<T> keys, const std::vector<int>& item, int heads, int key_len) {
    require_same_tape(queries, keys);
    const Eigen::Index d = keys.cols();
    require_shape<T>(queries.cols() == heads * d && static_cast<Eigen::Index>(item.size()) == queries.rows(),
                     "grouped_scores");
    Tape<T>* tape = queries.tape;
    const T sf = T(1) / std::sqrt(static_cast<T>(d));
    // Contiguous runs of rows that belong to the same item share one matrix product.
    struct Run {
        Eigen::Index begin;
        Eigen::Index len;
        int item;
    };
    auto runs = std::make_shared<std::vector<Run>>();
    for (Eigen::Index r = 0; r < queries.rows();) {
        Eigen::Index e = r;
        while (e < queries.rows() && item[static_cast<std::size_t>(e)] == item[static_cast<std::size_t>(r)]) ++e;
        if (static_cast<Eigen::Index>(item[static_cast<std::size_t>(r)] + 1) * key_len > keys.rows()) {
            throw std::out_of_range("grouped_scores item out of range");
        }
        runs->push_back({r, e - r, item[static_cast<std::size_t>(r)]});
        r = e;
    }
    const auto& Q = queries.value();
    const auto& K = keys.value();
    Matrix<T> out(queries.rows() * heads, key_len);
    for (const auto& run : *runs) {
        const auto kb = K.middleRows(static_cast<Eigen::Index>(run.item) * key_len, key_len);
        for (int h = 0; h < heads; ++h) {
            const Matrix<T> s = (Q.block(run.begin, h * d, run.len, d) * kb.transpose()) * sf;
            for (Eigen::Index i = 0; i < run.len; ++i) out.row((run.begin + i) * heads + h) = s.row(i);
        }
    }
    const bool ng = tape->needs_grad(queries.id) || tape->needs_grad(keys.id);
    return tape->push(std::move(out), ng, [tape, queries, keys, runs, heads, key_len, d, sf](const Matrix<T>& g) {
        const auto& Q = queries.value();
        const auto& K = keys.value();
        for (const auto& run : *runs) {
            const auto kb = K.middleRows(static_cast<Eigen::Index>(run.item) * key_len, key_len);
            for (int h = 0; h < heads; ++h) {
                Matrix<T> gs(run.len, key_len);
                for (Eigen::Index i = 0; i < run.len; ++i) gs.row(i) = g.row((run.begin + i) * heads + h);
                gs *= sf;
                if (tape->needs_grad(queries.id)) {
                    tape->grad(queries.id).block(run.begin, h * d, run.len, d).noalias() += gs * kb;
                }
                if (tape->needs_grad(keys.id)) {
                    tape->grad(keys.id).middleRows(static_cast<Eigen::Index>(run.item) * key_len, key_len).noalias() +=
                        gs.transpose() * Q.block(run.begin, h * d, run.len, d);
                }
            }
        }
    });
}

template <typename T>
Var<T> cross_entropy(Var<T> logits, std::vector<CrossEntropyTerm> terms) {
    Tape<T>* tape = logits.tape;
    const auto& z = logits.value();
    T total = 0;
    for (const auto& t : terms) {
        if (t.count <= 0 || t.target < 0 || t.target >= t.count || t.begin + t.count > z.cols() || t.row >= z.rows()) {
            throw std::out_of_range("cross_entropy term out of range");
        }
        const auto seg = z.row(t.row).segment(t.begin, t.count);
        const T mx = seg.maxCoeff();
        const T lse = mx + std::log((seg.array() - mx).exp().sum());
        total += lse - seg(t.target);
    }
    Matrix<T> out(1, 1);
    out(0, 0) = total;
    return tape->push(std::move(out), tape->needs_grad(logits.id), [tape, logits, terms = std::move(terms)](const Matrix<T>& g) {
        const auto& z = logits.value();
        auto& gz = tape->grad(logits.id);
        const T w = g(0, 0);
        for (const auto& t : terms) {
            const auto seg = z.row(t.row).segment(t.begin, t.count);
            const T mx = seg.maxCoeff();
            Eigen::Array<T, 1, Eigen::Dynamic> p = (seg.array() - mx).exp();
            p /= p.sum();
            p(t.target) -= T(1);
            gz.row(t.row).segment(t.begin, t.count).array() += w * p;
        }
    });
}

template <typename T>
Var<T> sum(const std::vector<Var<T>>& scalars) {
    if (scalars.empty()) throw std::invalid_argument("sum of nothing");
    Var<T> acc = scalars.front();
    for (std::size_t i = 1; i < scalars.size(); ++i) acc = add(acc, scalars[i]);
    return acc;
}

#define DOCREC_INSTANTIATE(T)                                                                                   \
    template Var<T> matmul(Var<T>, Var<T>);                                                                     \
    template Var<T> add(Var<T>, Var<T>);                                                                        \
    template Var<T> add_row(Var<T>, Var<T>);                                                                    \
    template Var<T> scale(Var<T>, T);                                                                           \
    template Var<T> gelu(Var<T>);                                                                               \
    template Var<T> layer_norm(Var<T>, Var<T>, Var<T>, T);                                                      \
    template Var<T> attention(Var<T>, Var<T>, Var<T>, const AttentionLayout&);                                  \
    template Var<T> gather_rows(Var<T>, std::vector<int>);                                                      \
    template Var<T> scale_rows(Var<T>, std::vector<T>);                                                         \
    template Var<T> concat_cols(const std::vector<Var<T>>&);                                                    \
    template Var<T> concat_rows(const std::vector<Var<T>>&);                                                    \
    template Var<T> grouped_scores(Var<T>, Var<T>, const std::vector<int>&, int, int);                          \
    template Var<T> cross_entropy(Var<T>, std::vector<CrossEntropyTerm>);                                       \
    template Var<T> sum(const std::vector<Var<T>>&);

DOCREC_INSTANTIATE(float)
DOCREC_INSTANTIATE(double)

#undef DOCREC_INSTANTIATE

}  // namespace docrec::ad
