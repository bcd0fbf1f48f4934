#pragma once

// Tape-based reverse-mode differentiation over 2-D tensors.
//
// A Graph records every operation in creation order, which is a valid
// topological order. backward() walks the tape once in reverse. Graphs are
// single-use for differentiation: a second backward() without clear_grads()
// is rejected.

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "genreg/tensor.h"

namespace genreg {

class Graph;

class Var {
public:
    Var() = default;

    Graph* graph() const { return graph_; }
    std::size_t id() const { return id_; }
    bool valid() const { return graph_ != nullptr; }

    const Tensor& value() const;
    const Tensor& grad() const;
    std::size_t rows() const { return value().rows(); }
    std::size_t cols() const { return value().cols(); }

private:
    friend class Graph;
    Var(Graph* g, std::size_t id) : graph_(g), id_(id) {}

    Graph* graph_ = nullptr;
    std::size_t id_ = 0;
};

class Graph {
public:
    using BackwardFn = std::function<void(Graph&, const Tensor& out_grad)>;

    Graph() = default;
    /// With record_gradients=false parameters are plain constants and no
    /// backward closures are kept (inference).
    explicit Graph(bool record_gradients) : record_gradients_(record_gradients) {}
    Graph(const Graph&) = delete;
    Graph& operator=(const Graph&) = delete;

    Var constant(Tensor value);
    Var variable(Tensor value);
    /// Leaf that reads `value` in place. The referenced tensor must outlive the graph.
    Var parameter(const Tensor& value);

    const Tensor& value(Var v) const;
    /// Gradient of the last backward() target; zeros if the node received none.
    const Tensor& grad(Var v) const;
    bool requires_grad(Var v) const;

    void backward(Var loss);
    void clear_grads();
    std::size_t size() const { return nodes_.size(); }

    // Used by op implementations.
    Var record(Tensor value, std::initializer_list<Var> inputs, BackwardFn fn);
    Tensor& grad_buffer(Var v);

private:
    struct Node {
        Tensor owned;
        const Tensor* external = nullptr;
        Tensor grad;
        bool requires_grad = false;
        BackwardFn backward;

        const Tensor& value() const { return external ? *external : owned; }
    };

    Node& node(Var v);
    const Node& node(Var v) const;

    std::vector<Node> nodes_;
    bool backward_done_ = false;
    bool record_gradients_ = true;
    mutable Tensor zero_scratch_;
};

// ---- operations -----------------------------------------------------------

Var matmul(Var a, Var b);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double s);
/// a[r, :] + bias[0, :] for every row r.
Var add_row(Var a, Var bias);
Var relu(Var a);
Var sigmoid(Var a);
Var sum(Var a);
Var layer_norm(Var x, Var gamma, Var beta, double eps = 1e-5);
Var softmax_rows(Var x);
Var gather_rows(Var table, std::span<const int> ids);
/// out[r] = take_first[r] ? a[r] : b[r].
Var select_rows(Var a, Var b, const std::vector<bool>& take_first);

struct AttentionShape {
    std::size_t batch = 1;
    std::size_t query_len = 1;
    std::size_t key_len = 1;
    std::size_t heads = 1;
    bool causal = false;
};

/// Multi-head scaled dot-product attention on pre-projected inputs.
/// q is [batch*query_len x D], k and v are [batch*key_len x D]; D is split
/// evenly over heads. Disallowed positions receive an additive -1e9.
Var attention(Var q, Var k, Var v, const AttentionShape& shape);

/// Sum over rows of weight[r] * (-log softmax(logits[r])[target[r]]).
/// Rows with zero weight contribute neither value nor gradient.
Var masked_cross_entropy(Var logits, std::span<const int> targets, std::span<const double> weights);

/// Sum over rows of weight[r] * huber(pred[r, 0] - target[r]).
Var huber_sum(Var pred, std::span<const double> targets, std::span<const double> weights, double delta);

/// Sum of weight * binary cross-entropy with logits against 0/1 targets of the same shape.
Var bce_with_logits(Var logits, const Tensor& targets, double weight);

/// Window-softmax fusion of embedding rows around `centers[r]`, clamped to
/// ids [lo, hi]. Rows whose center lies outside [lo, hi] copy table[center].
Var window_mixup(Var logits, Var table, std::span<const int> centers, int half_width, int lo, int hi);

}  // namespace genreg
