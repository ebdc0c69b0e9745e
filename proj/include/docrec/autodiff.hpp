#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <deque>
#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace docrec::ad {

template <typename T>
using Matrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename T>
class Tape;

/// Handle to a value recorded on a tape.
template <typename T>
struct Var {
    Tape<T>* tape = nullptr;
    int id = -1;

    const Matrix<T>& value() const { return tape->value(id); }
    Eigen::Index rows() const { return value().rows(); }
    Eigen::Index cols() const { return value().cols(); }
};

/// Reverse-mode tape of 2-D values.
///
/// Nodes live in a deque so references stay valid while the tape grows. Parameters are
/// referenced, not copied; their gradients accumulate into caller-owned storage. A tape
/// created with `record = false` keeps values only and skips every backward closure.
template <typename T>
class Tape {
public:
    explicit Tape(bool record = true) : record_(record) {}
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    Var<T> constant(Matrix<T> value) {
        auto& n = nodes_.emplace_back();
        n.own_value = std::move(value);
        n.value = &n.own_value;
        return {this, static_cast<int>(nodes_.size()) - 1};
    }

    Var<T> parameter(const Matrix<T>& value, Matrix<T>* grad) {
        auto& n = nodes_.emplace_back();
        n.value = &value;
        n.ext_grad = record_ ? grad : nullptr;
        n.needs_grad = record_ && grad != nullptr;
        return {this, static_cast<int>(nodes_.size()) - 1};
    }

    /// Records an op result. `backward` receives the output gradient and must only
    /// accumulate into inputs for which needs_grad() is true.
    Var<T> push(Matrix<T> value, bool needs_grad, std::function<void(const Matrix<T>&)> backward) {
        auto& n = nodes_.emplace_back();
        n.own_value = std::move(value);
        n.value = &n.own_value;
        n.needs_grad = record_ && needs_grad;
        if (n.needs_grad) n.backward = std::move(backward);
        return {this, static_cast<int>(nodes_.size()) - 1};
    }

    const Matrix<T>& value(int id) const { return *nodes_[static_cast<std::size_t>(id)].value; }
    bool needs_grad(int id) const { return nodes_[static_cast<std::size_t>(id)].needs_grad; }
    bool recording() const { return record_; }

    /// Gradient buffer of a node, zero-initialised on first use.
    Matrix<T>& grad(int id) {
        auto& n = nodes_[static_cast<std::size_t>(id)];
        if (n.ext_grad) return *n.ext_grad;
        if (n.own_grad.size() == 0) n.own_grad = Matrix<T>::Zero(n.value->rows(), n.value->cols());
        return n.own_grad;
    }

    /// Seeds d(root)/d(root) = 1 for a 1x1 root and runs every closure in reverse order.
    void backward(Var<T> root) {
        if (!record_) throw std::logic_error("backward on a non-recording tape");
        if (root.rows() != 1 || root.cols() != 1) throw std::logic_error("backward root must be a scalar");
        if (!needs_grad(root.id)) return;
        grad(root.id)(0, 0) += T(1);
        for (int id = root.id; id >= 0; --id) {
            auto& n = nodes_[static_cast<std::size_t>(id)];
            if (!n.backward || n.own_grad.size() == 0) continue;
            n.backward(n.own_grad);
        }
    }

    std::size_t size() const { return nodes_.size(); }

private:
    struct Node {
        Matrix<T> own_value;
        const Matrix<T>* value = nullptr;
        Matrix<T> own_grad;
        Matrix<T>* ext_grad = nullptr;
        bool needs_grad = false;
        std::function<void(const Matrix<T>&)> backward;
    };

    bool record_;
    std::deque<Node> nodes_;
};

/// Attention layout for `attention`: `batch` items, `heads` heads, query/key lengths per item.
/// `mask` (batch x lq x lk, 1 = allowed) is optional; without it every key is allowed.
/// Query rows with no allowed key produce zeros.
struct AttentionLayout {
    int batch = 1;
    int heads = 1;
    int query_len = 0;
    int key_len = 0;
    std::shared_ptr<const std::vector<std::uint8_t>> mask;
};

/// One softmax cross-entropy term over columns [begin, begin + count) of a logits row.
struct CrossEntropyTerm {
    int row = 0;
    int begin = 0;
    int count = 0;
    int target = 0;  // relative to begin
};

template <typename T> Var<T> matmul(Var<T> a, Var<T> b);
template <typename T> Var<T> add(Var<T> a, Var<T> b);
template <typename T> Var<T> add_row(Var<T> a, Var<T> row);
template <typename T> Var<T> scale(Var<T> a, T factor);
template <typename T> Var<T> gelu(Var<T> a);
template <typename T> Var<T> layer_norm(Var<T> a, Var<T> gain, Var<T> bias, T eps = T(1e-5));
template <typename T> Var<T> attention(Var<T> q, Var<T> k, Var<T> v, const AttentionLayout& layout);

/// Rows of `src` picked by index; index -1 yields a zero row.
template <typename T> Var<T> gather_rows(Var<T> src, std::vector<int> index);
/// Multiplies row i by a constant factor[i].
template <typename T> Var<T> scale_rows(Var<T> a, std::vector<T> factor);
template <typename T> Var<T> concat_cols(const std::vector<Var<T>>& parts);
template <typename T> Var<T> concat_rows(const std::vector<Var<T>>& parts);

/// Per-item scaled dot products between queries and keys.
///
/// `queries` is (n x heads*d), `keys` is (batch*key_len x d); row r of the result block for
/// head h is q[r, h*d:(h+1)*d] . keys[item[r]*key_len + c] / sqrt(d) at column c.
/// The result has n*heads rows ordered (row, head).
template <typename T> Var<T> grouped_scores(Var<T> queries, Var<T> keys, const std::vector<int>& item, int heads, int key_len);

/// Sum of softmax cross-entropies of the listed terms, as a 1x1 value.
template <typename T> Var<T> cross_entropy(Var<T> logits, std::vector<CrossEntropyTerm> terms);
template <typename T> Var<T> sum(const std::vector<Var<T>>& scalars);

}  // namespace docrec::ad
