#include "genreg/autograd.h"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace genreg {

namespace {

constexpr double kMaskedScore = -1e9;

Graph& graph_of(Var a) {
    if (!a.valid()) {
        throw std::invalid_argument("autograd: operation on an unbound variable");
    }
    return *a.graph();
}

Graph& graph_of(Var a, Var b) {
    if (a.graph() != b.graph()) {
        throw std::invalid_argument("autograd: operands belong to different graphs");
    }
    return graph_of(a);
}

void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b)) {
        throw std::invalid_argument(std::string(op) + ": shape mismatch " + a.shape_string() +
                                    " vs " + b.shape_string());
    }
}

}  // namespace

// ---- Var / Graph ----------------------------------------------------------

const Tensor& Var::value() const { return graph_of(*this).value(*this); }
const Tensor& Var::grad() const { return graph_of(*this).grad(*this); }

Graph::Node& Graph::node(Var v) {
    if (v.graph() != this || v.id() >= nodes_.size()) {
        throw std::invalid_argument("autograd: variable does not belong to this graph");
    }
    return nodes_[v.id()];
}

const Graph::Node& Graph::node(Var v) const {
    if (v.graph() != this || v.id() >= nodes_.size()) {
        throw std::invalid_argument("autograd: variable does not belong to this graph");
    }
    return nodes_[v.id()];
}

Var Graph::constant(Tensor value) {
    Node n;
    n.owned = std::move(value);
    nodes_.push_back(std::move(n));
    return Var(this, nodes_.size() - 1);
}

Var Graph::variable(Tensor value) {
    Node n;
    n.owned = std::move(value);
    n.requires_grad = record_gradients_;
    nodes_.push_back(std::move(n));
    return Var(this, nodes_.size() - 1);
}

Var Graph::parameter(const Tensor& value) {
    Node n;
    n.external = &value;
    n.requires_grad = record_gradients_;
    nodes_.push_back(std::move(n));
    return Var(this, nodes_.size() - 1);
}

const Tensor& Graph::value(Var v) const { return node(v).value(); }

const Tensor& Graph::grad(Var v) const {
    const Node& n = node(v);
    if (n.grad.size() == 0 && n.value().size() != 0) {
        zero_scratch_ = Tensor(n.value().rows(), n.value().cols());
        return zero_scratch_;
    }
    return n.grad;
}

bool Graph::requires_grad(Var v) const { return node(v).requires_grad; }

Var Graph::record(Tensor value, std::initializer_list<Var> inputs, BackwardFn fn) {
    bool needs = false;
    for (Var in : inputs) {
        if (in.graph() != this) {
            throw std::invalid_argument("autograd: operands belong to different graphs");
        }
        needs = needs || nodes_[in.id()].requires_grad;
    }
    Node n;
    n.owned = std::move(value);
    n.requires_grad = needs;
    if (needs) {
        n.backward = std::move(fn);
    }
    nodes_.push_back(std::move(n));
    return Var(this, nodes_.size() - 1);
}

Tensor& Graph::grad_buffer(Var v) {
    Node& n = node(v);
    if (n.grad.size() == 0) {
        n.grad = Tensor(n.value().rows(), n.value().cols());
    }
    return n.grad;
}

void Graph::backward(Var loss) {
    if (backward_done_) {
        throw std::logic_error("autograd: backward() already ran on this graph; call clear_grads() first");
    }
    const Node& root = node(loss);
    if (root.value().size() != 1) {
        throw std::invalid_argument("autograd: backward() needs a scalar loss, got " +
                                    root.value().shape_string());
    }
    backward_done_ = true;
    if (!root.requires_grad) {
        return;
    }
    grad_buffer(loss)[0] = 1.0;
    for (std::size_t i = loss.id() + 1; i-- > 0;) {
        Node& n = nodes_[i];
        if (!n.requires_grad || !n.backward || n.grad.size() == 0) {
            continue;
        }
        // Closures only add to their inputs' grads, which precede n on the tape.
        n.backward(*this, n.grad);
    }
}

void Graph::clear_grads() {
    for (Node& n : nodes_) {
        n.grad = Tensor();
    }
    backward_done_ = false;
}

// ---- elementwise and linear ops ------------------------------------------

Var matmul(Var a, Var b) {
    Graph& g = graph_of(a, b);
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    if (av.cols() != bv.rows()) {
        throw std::invalid_argument("matmul: inner dimensions differ, " + av.shape_string() + " x " +
                                    bv.shape_string());
    }
    Tensor out(av.rows(), bv.cols());
    gemm_accumulate(av, false, bv, false, out);
    return g.record(std::move(out), {a, b}, [a, b](Graph& g, const Tensor& d) {
        if (g.requires_grad(a)) {
            gemm_accumulate(d, false, g.value(b), true, g.grad_buffer(a));
        }
        if (g.requires_grad(b)) {
            gemm_accumulate(g.value(a), true, d, false, g.grad_buffer(b));
        }
    });
}

namespace {

template <typename Fwd, typename DA, typename DB>
Var binary_elementwise(const char* name, Var a, Var b, Fwd fwd, DA da, DB db) {
    Graph& g = graph_of(a, b);
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    require_same_shape(name, av, bv);
    Tensor out(av.rows(), av.cols());
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = fwd(av[i], bv[i]);
    }
    return g.record(std::move(out), {a, b}, [a, b, da, db](Graph& g, const Tensor& d) {
        const Tensor& av = g.value(a);
        const Tensor& bv = g.value(b);
        if (g.requires_grad(a)) {
            Tensor& ga = g.grad_buffer(a);
            for (std::size_t i = 0; i < d.size(); ++i) {
                ga[i] += d[i] * da(av[i], bv[i]);
            }
        }
        if (g.requires_grad(b)) {
            Tensor& gb = g.grad_buffer(b);
            for (std::size_t i = 0; i < d.size(); ++i) {
                gb[i] += d[i] * db(av[i], bv[i]);
            }
        }
    });
}

}  // namespace

Var add(Var a, Var b) {
    return binary_elementwise(
        "add", a, b, [](double x, double y) { return x + y; }, [](double, double) { return 1.0; },
        [](double, double) { return 1.0; });
}

Var sub(Var a, Var b) {
    return binary_elementwise(
        "sub", a, b, [](double x, double y) { return x - y; }, [](double, double) { return 1.0; },
        [](double, double) { return -1.0; });
}

Var mul(Var a, Var b) {
    return binary_elementwise(
        "mul", a, b, [](double x, double y) { return x * y; }, [](double, double y) { return y; },
        [](double x, double) { return x; });
}

Var scale(Var a, double s) {
    Graph& g = graph_of(a);
    Tensor out = a.value();
    for (double& v : out.values()) {
        v *= s;
    }
    return g.record(std::move(out), {a}, [a, s](Graph& g, const Tensor& d) {
        Tensor& ga = g.grad_buffer(a);
        for (std::size_t i = 0; i < d.size(); ++i) {
            ga[i] += s * d[i];
        }
    });
}

Var add_row(Var a, Var bias) {
    Graph& g = graph_of(a, bias);
    const Tensor& av = a.value();
    const Tensor& bv = bias.value();
    if (bv.rows() != 1 || bv.cols() != av.cols()) {
        throw std::invalid_argument("add_row: bias " + bv.shape_string() + " does not broadcast over " +
                                    av.shape_string());
    }
    Tensor out = av;
    for (std::size_t r = 0; r < out.rows(); ++r) {
        for (std::size_t c = 0; c < out.cols(); ++c) {
            out(r, c) += bv[c];
        }
    }
    return g.record(std::move(out), {a, bias}, [a, bias](Graph& g, const Tensor& d) {
        if (g.requires_grad(a)) {
            Tensor& ga = g.grad_buffer(a);
            for (std::size_t i = 0; i < d.size(); ++i) {
                ga[i] += d[i];
            }
        }
        if (g.requires_grad(bias)) {
            Tensor& gb = g.grad_buffer(bias);
            for (std::size_t r = 0; r < d.rows(); ++r) {
                for (std::size_t c = 0; c < d.cols(); ++c) {
                    gb[c] += d(r, c);
                }
            }
        }
    });
}

Var relu(Var a) {
    Graph& g = graph_of(a);
    Tensor out = a.value();
    for (double& v : out.values()) {
        v = v > 0.0 ? v : 0.0;
    }
    return g.record(std::move(out), {a}, [a](Graph& g, const Tensor& d) {
        const Tensor& av = g.value(a);
        Tensor& ga = g.grad_buffer(a);
        for (std::size_t i = 0; i < d.size(); ++i) {
            if (av[i] > 0.0) {
                ga[i] += d[i];
            }
        }
    });
}

Var sigmoid(Var a) {
    Graph& g = graph_of(a);
    Tensor out = a.value();
    for (double& v : out.values()) {
        v = 1.0 / (1.0 + std::exp(-v));
    }
    Tensor saved = out;
    return g.record(std::move(out), {a}, [a, saved = std::move(saved)](Graph& g, const Tensor& d) {
        Tensor& ga = g.grad_buffer(a);
        for (std::size_t i = 0; i < d.size(); ++i) {
            ga[i] += d[i] * saved[i] * (1.0 - saved[i]);
        }
    });
}

Var sum(Var a) {
    Graph& g = graph_of(a);
    double s = 0.0;
    for (double v : a.value().values()) {
        s += v;
    }
    return g.record(Tensor::scalar(s), {a}, [a](Graph& g, const Tensor& d) {
        Tensor& ga = g.grad_buffer(a);
        for (double& v : ga.values()) {
            v += d[0];
        }
    });
}

// ---- normalization and softmax -------------------------------------------

Var layer_norm(Var x, Var gamma, Var beta, double eps) {
    Graph& g = graph_of(x, gamma);
    graph_of(x, beta);
    const Tensor& xv = x.value();
    const std::size_t n = xv.cols();
    if (n == 0) {
        throw std::invalid_argument("layer_norm: empty normalization axis");
    }
    if (gamma.value().rows() != 1 || gamma.value().cols() != n || !gamma.value().same_shape(beta.value())) {
        throw std::invalid_argument("layer_norm: affine parameters " + gamma.value().shape_string() +
                                    " do not match rows of " + xv.shape_string());
    }
    Tensor normalized(xv.rows(), n);
    std::vector<double> inv_std(xv.rows());
    Tensor out(xv.rows(), n);
    const Tensor& gv = gamma.value();
    const Tensor& bv = beta.value();
    for (std::size_t r = 0; r < xv.rows(); ++r) {
        double mean = 0.0;
        for (std::size_t c = 0; c < n; ++c) {
            mean += xv(r, c);
        }
        mean /= static_cast<double>(n);
        double var = 0.0;
        for (std::size_t c = 0; c < n; ++c) {
            const double dev = xv(r, c) - mean;
            var += dev * dev;
        }
        var /= static_cast<double>(n);
        inv_std[r] = 1.0 / std::sqrt(var + eps);
        for (std::size_t c = 0; c < n; ++c) {
            normalized(r, c) = (xv(r, c) - mean) * inv_std[r];
            out(r, c) = gv[c] * normalized(r, c) + bv[c];
        }
    }
    return g.record(std::move(out), {x, gamma, beta},
                    [x, gamma, beta, normalized = std::move(normalized),
                     inv_std = std::move(inv_std)](Graph& g, const Tensor& d) {
                        const std::size_t n = d.cols();
                        const Tensor& gv = g.value(gamma);
                        if (g.requires_grad(gamma)) {
                            Tensor& gg = g.grad_buffer(gamma);
                            for (std::size_t r = 0; r < d.rows(); ++r) {
                                for (std::size_t c = 0; c < n; ++c) {
                                    gg[c] += d(r, c) * normalized(r, c);
                                }
                            }
                        }
                        if (g.requires_grad(beta)) {
                            Tensor& gb = g.grad_buffer(beta);
                            for (std::size_t r = 0; r < d.rows(); ++r) {
                                for (std::size_t c = 0; c < n; ++c) {
                                    gb[c] += d(r, c);
                                }
                            }
                        }
                        if (g.requires_grad(x)) {
                            Tensor& gx = g.grad_buffer(x);
                            for (std::size_t r = 0; r < d.rows(); ++r) {
                                double mean_dn = 0.0;
                                double mean_dn_n = 0.0;
                                for (std::size_t c = 0; c < n; ++c) {
                                    const double dn = d(r, c) * gv[c];
                                    mean_dn += dn;
                                    mean_dn_n += dn * normalized(r, c);
                                }
                                mean_dn /= static_cast<double>(n);
                                mean_dn_n /= static_cast<double>(n);
                                for (std::size_t c = 0; c < n; ++c) {
                                    const double dn = d(r, c) * gv[c];
                                    gx(r, c) += inv_std[r] * (dn - mean_dn - normalized(r, c) * mean_dn_n);
                                }
                            }
                        }
                    });
}

Var softmax_rows(Var x) {
    Graph& g = graph_of(x);
    Tensor out = x.value();
    for (std::size_t r = 0; r < out.rows(); ++r) {
        softmax_inplace(out.row_span(r));
    }
    Tensor saved = out;
    return g.record(std::move(out), {x}, [x, saved = std::move(saved)](Graph& g, const Tensor& d) {
        Tensor& gx = g.grad_buffer(x);
        for (std::size_t r = 0; r < d.rows(); ++r) {
            double dot = 0.0;
            for (std::size_t c = 0; c < d.cols(); ++c) {
                dot += d(r, c) * saved(r, c);
            }
            for (std::size_t c = 0; c < d.cols(); ++c) {
                gx(r, c) += saved(r, c) * (d(r, c) - dot);
            }
        }
    });
}

// ---- row plumbing ---------------------------------------------------------

Var gather_rows(Var table, std::span<const int> ids) {
    Graph& g = graph_of(table);
    const Tensor& tv = table.value();
    Tensor out(ids.size(), tv.cols());
    for (std::size_t r = 0; r < ids.size(); ++r) {
        if (ids[r] < 0 || static_cast<std::size_t>(ids[r]) >= tv.rows()) {
            throw std::out_of_range("gather_rows: id " + std::to_string(ids[r]) + " outside table " +
                                    tv.shape_string());
        }
        const auto src = tv.row_span(static_cast<std::size_t>(ids[r]));
        std::copy(src.begin(), src.end(), out.row_span(r).begin());
    }
    std::vector<int> saved(ids.begin(), ids.end());
    return g.record(std::move(out), {table}, [table, saved = std::move(saved)](Graph& g, const Tensor& d) {
        Tensor& gt = g.grad_buffer(table);
        for (std::size_t r = 0; r < saved.size(); ++r) {
            auto dst = gt.row_span(static_cast<std::size_t>(saved[r]));
            const auto src = d.row_span(r);
            for (std::size_t c = 0; c < dst.size(); ++c) {
                dst[c] += src[c];
            }
        }
    });
}

Var select_rows(Var a, Var b, const std::vector<bool>& take_first) {
    Graph& g = graph_of(a, b);
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    require_same_shape("select_rows", av, bv);
    if (take_first.size() != av.rows()) {
        throw std::invalid_argument("select_rows: mask length " + std::to_string(take_first.size()) +
                                    " does not match " + av.shape_string());
    }
    Tensor out(av.rows(), av.cols());
    for (std::size_t r = 0; r < av.rows(); ++r) {
        const auto src = take_first[r] ? av.row_span(r) : bv.row_span(r);
        std::copy(src.begin(), src.end(), out.row_span(r).begin());
    }
    return g.record(std::move(out), {a, b}, [a, b, take_first](Graph& g, const Tensor& d) {
        for (std::size_t r = 0; r < d.rows(); ++r) {
            const Var target = take_first[r] ? a : b;
            if (!g.requires_grad(target)) {
                continue;
            }
            auto dst = g.grad_buffer(target).row_span(r);
            const auto src = d.row_span(r);
            for (std::size_t c = 0; c < dst.size(); ++c) {
                dst[c] += src[c];
            }
        }
    });
}

// ---- attention ------------------------------------------------------------

Var attention(Var q, Var k, Var v, const AttentionShape& s) {
    Graph& g = graph_of(q, k);
    graph_of(q, v);
    const Tensor& qv = q.value();
    const Tensor& kv = k.value();
    const Tensor& vv = v.value();
    const std::size_t dim = qv.cols();
    if (s.heads == 0 || dim % s.heads != 0) {
        throw std::invalid_argument("attention: width " + std::to_string(dim) + " not divisible by " +
                                    std::to_string(s.heads) + " heads");
    }
    if (qv.rows() != s.batch * s.query_len || kv.rows() != s.batch * s.key_len || !kv.same_shape(vv) ||
        kv.cols() != dim) {
        throw std::invalid_argument("attention: inputs q" + qv.shape_string() + " k" + kv.shape_string() +
                                    " v" + vv.shape_string() + " do not match batch layout");
    }
    if (s.causal && s.query_len != s.key_len) {
        throw std::invalid_argument("attention: causal masking needs equal query and key lengths");
    }
    const std::size_t hd = dim / s.heads;
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(hd));

    // probs laid out as [batch][head][query][key]
    std::vector<double> probs(s.batch * s.heads * s.query_len * s.key_len);
    Tensor out(qv.rows(), dim);
    for (std::size_t b = 0; b < s.batch; ++b) {
        for (std::size_t h = 0; h < s.heads; ++h) {
            const std::size_t off = h * hd;
            for (std::size_t i = 0; i < s.query_len; ++i) {
                const std::size_t qi = b * s.query_len + i;
                std::span<double> row(probs.data() + ((b * s.heads + h) * s.query_len + i) * s.key_len,
                                      s.key_len);
                for (std::size_t j = 0; j < s.key_len; ++j) {
                    const std::size_t kj = b * s.key_len + j;
                    double dot = 0.0;
                    for (std::size_t c = 0; c < hd; ++c) {
                        dot += qv(qi, off + c) * kv(kj, off + c);
                    }
                    row[j] = dot * inv_sqrt + ((s.causal && j > i) ? kMaskedScore : 0.0);
                }
                softmax_inplace(row);
                for (std::size_t j = 0; j < s.key_len; ++j) {
                    const double p = row[j];
                    const std::size_t kj = b * s.key_len + j;
                    for (std::size_t c = 0; c < hd; ++c) {
                        out(qi, off + c) += p * vv(kj, off + c);
                    }
                }
            }
        }
    }

    return g.record(std::move(out), {q, k, v},
                    [q, k, v, s, hd, inv_sqrt, probs = std::move(probs)](Graph& g, const Tensor& d) {
                        const Tensor& qv = g.value(q);
                        const Tensor& kv = g.value(k);
                        const Tensor& vv = g.value(v);
                        Tensor* gq = g.requires_grad(q) ? &g.grad_buffer(q) : nullptr;
                        Tensor* gk = g.requires_grad(k) ? &g.grad_buffer(k) : nullptr;
                        Tensor* gv = g.requires_grad(v) ? &g.grad_buffer(v) : nullptr;
                        std::vector<double> dscore(s.key_len);
                        for (std::size_t b = 0; b < s.batch; ++b) {
                            for (std::size_t h = 0; h < s.heads; ++h) {
                                const std::size_t off = h * hd;
                                for (std::size_t i = 0; i < s.query_len; ++i) {
                                    const std::size_t qi = b * s.query_len + i;
                                    const double* p =
                                        probs.data() + ((b * s.heads + h) * s.query_len + i) * s.key_len;
                                    double dot = 0.0;
                                    for (std::size_t j = 0; j < s.key_len; ++j) {
                                        const std::size_t kj = b * s.key_len + j;
                                        double dp = 0.0;
                                        for (std::size_t c = 0; c < hd; ++c) {
                                            dp += d(qi, off + c) * vv(kj, off + c);
                                        }
                                        dscore[j] = dp;
                                        dot += dp * p[j];
                                        if (gv) {
                                            for (std::size_t c = 0; c < hd; ++c) {
                                                (*gv)(kj, off + c) += p[j] * d(qi, off + c);
                                            }
                                        }
                                    }
                                    for (std::size_t j = 0; j < s.key_len; ++j) {
                                        const double ds = p[j] * (dscore[j] - dot) * inv_sqrt;
                                        if (ds == 0.0) {
                                            continue;
                                        }
                                        const std::size_t kj = b * s.key_len + j;
                                        for (std::size_t c = 0; c < hd; ++c) {
                                            if (gq) {
                                                (*gq)(qi, off + c) += ds * kv(kj, off + c);
                                            }
                                            if (gk) {
                                                (*gk)(kj, off + c) += ds * qv(qi, off + c);
                                            }
                                        }
                                    }
                                }
                            }
                        }
                    });
}

// ---- losses ---------------------------------------------------------------

Var masked_cross_entropy(Var logits, std::span<const int> targets, std::span<const double> weights) {
    Graph& g = graph_of(logits);
    const Tensor& lv = logits.value();
    if (targets.size() != lv.rows() || weights.size() != lv.rows()) {
        throw std::invalid_argument("cross_entropy: " + std::to_string(targets.size()) + " targets and " +
                                    std::to_string(weights.size()) + " weights for logits " +
                                    lv.shape_string());
    }
    const int classes = static_cast<int>(lv.cols());
    Tensor probs(lv.rows(), lv.cols());
    double total = 0.0;
    for (std::size_t r = 0; r < lv.rows(); ++r) {
        if (weights[r] == 0.0) {
            continue;
        }
        if (targets[r] < 0 || targets[r] >= classes) {
            throw std::out_of_range("cross_entropy: target " + std::to_string(targets[r]) +
                                    " outside " + std::to_string(classes) + " classes");
        }
        auto row = probs.row_span(r);
        const auto src = lv.row_span(r);
        std::copy(src.begin(), src.end(), row.begin());
        const double mx = *std::max_element(row.begin(), row.end());
        double z = 0.0;
        for (double& v : row) {
            v = std::exp(v - mx);
            z += v;
        }
        for (double& v : row) {
            v /= z;
        }
        const double log_z = mx + std::log(z);
        total += weights[r] * (log_z - src[static_cast<std::size_t>(targets[r])]);
    }
    std::vector<int> t(targets.begin(), targets.end());
    std::vector<double> w(weights.begin(), weights.end());
    return g.record(Tensor::scalar(total), {logits},
                    [logits, probs = std::move(probs), t = std::move(t), w = std::move(w)](
                        Graph& g, const Tensor& d) {
                        Tensor& gl = g.grad_buffer(logits);
                        for (std::size_t r = 0; r < t.size(); ++r) {
                            if (w[r] == 0.0) {
                                continue;
                            }
                            const double scale = w[r] * d[0];
                            for (std::size_t c = 0; c < gl.cols(); ++c) {
                                gl(r, c) += scale * probs(r, c);
                            }
                            gl(r, static_cast<std::size_t>(t[r])) -= scale;
                        }
                    });
}

Var huber_sum(Var pred, std::span<const double> targets, std::span<const double> weights, double delta) {
    Graph& g = graph_of(pred);
    const Tensor& pv = pred.value();
    if (delta <= 0.0) {
        throw std::invalid_argument("huber: delta must be positive");
    }
    if (pv.cols() != 1 || targets.size() != pv.rows() || weights.size() != pv.rows()) {
        throw std::invalid_argument("huber: predictions " + pv.shape_string() + " do not match " +
                                    std::to_string(targets.size()) + " targets");
    }
    std::vector<double> slope(pv.rows());
    double total = 0.0;
    for (std::size_t r = 0; r < pv.rows(); ++r) {
        const double diff = pv[r] - targets[r];
        const double ad = std::abs(diff);
        total += weights[r] * (ad <= delta ? 0.5 * diff * diff : delta * (ad - 0.5 * delta));
        slope[r] = weights[r] * std::clamp(diff, -delta, delta);
    }
    return g.record(Tensor::scalar(total), {pred}, [pred, slope = std::move(slope)](Graph& g, const Tensor& d) {
        Tensor& gp = g.grad_buffer(pred);
        for (std::size_t r = 0; r < slope.size(); ++r) {
            gp[r] += d[0] * slope[r];
        }
    });
}

Var bce_with_logits(Var logits, const Tensor& targets, double weight) {
    Graph& g = graph_of(logits);
    const Tensor& lv = logits.value();
    require_same_shape("bce_with_logits", lv, targets);
    double total = 0.0;
    for (std::size_t i = 0; i < lv.size(); ++i) {
        const double x = lv[i];
        // softplus(x) - t*x, evaluated without overflow
        const double softplus = x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
        total += weight * (softplus - targets[i] * x);
    }
    return g.record(Tensor::scalar(total), {logits}, [logits, targets, weight](Graph& g, const Tensor& d) {
        const Tensor& lv = g.value(logits);
        Tensor& gl = g.grad_buffer(logits);
        for (std::size_t i = 0; i < lv.size(); ++i) {
            const double p = 1.0 / (1.0 + std::exp(-lv[i]));
            gl[i] += d[0] * weight * (p - targets[i]);
        }
    });
}

// ---- embedding mixup ------------------------------------------------------

Var window_mixup(Var logits, Var table, std::span<const int> centers, int half_width, int lo, int hi) {
    Graph& g = graph_of(logits, table);
    const Tensor& lv = logits.value();
    const Tensor& tv = table.value();
    if (centers.size() != lv.rows() || lv.cols() != tv.rows() || half_width < 0 || lo > hi || lo < 0 ||
        static_cast<std::size_t>(hi) >= tv.rows()) {
        throw std::invalid_argument("window_mixup: logits " + lv.shape_string() + " / table " +
                                    tv.shape_string() + " / window arguments inconsistent");
    }
    struct Window {
        int first = 0;
        int last = -1;  // empty window means raw copy of table[center]
        std::vector<double> weights;
    };
    std::vector<Window> windows(centers.size());
    Tensor out(centers.size(), tv.cols());
    for (std::size_t r = 0; r < centers.size(); ++r) {
        const int c = centers[r];
        if (c < 0 || static_cast<std::size_t>(c) >= tv.rows()) {
            throw std::out_of_range("window_mixup: center id " + std::to_string(c) + " out of range");
        }
        auto dst = out.row_span(r);
        if (c < lo || c > hi) {
            const auto src = tv.row_span(static_cast<std::size_t>(c));
            std::copy(src.begin(), src.end(), dst.begin());
            continue;
        }
        Window& w = windows[r];
        w.first = std::max(lo, c - half_width);
        w.last = std::min(hi, c + half_width);
        w.weights.assign(lv.row_span(r).begin() + w.first, lv.row_span(r).begin() + w.last + 1);
        softmax_inplace(w.weights);
        for (int j = w.first; j <= w.last; ++j) {
            const double sigma = w.weights[static_cast<std::size_t>(j - w.first)];
            const auto src = tv.row_span(static_cast<std::size_t>(j));
            for (std::size_t col = 0; col < dst.size(); ++col) {
                dst[col] += sigma * src[col];
            }
        }
    }
    std::vector<int> saved_centers(centers.begin(), centers.end());
    return g.record(std::move(out), {logits, table},
                    [logits, table, windows = std::move(windows), saved_centers = std::move(saved_centers)](
                        Graph& g, const Tensor& d) {
                        const Tensor& tv = g.value(table);
                        Tensor* gl = g.requires_grad(logits) ? &g.grad_buffer(logits) : nullptr;
                        Tensor* gt = g.requires_grad(table) ? &g.grad_buffer(table) : nullptr;
                        for (std::size_t r = 0; r < windows.size(); ++r) {
                            const auto dz = d.row_span(r);
                            const Window& w = windows[r];
                            if (w.last < w.first) {
                                if (gt) {
                                    auto dst = gt->row_span(static_cast<std::size_t>(saved_centers[r]));
                                    for (std::size_t c = 0; c < dst.size(); ++c) {
                                        dst[c] += dz[c];
                                    }
                                }
                                continue;
                            }
                            const std::size_t count = w.weights.size();
                            std::vector<double> dsigma(count, 0.0);
                            double dot = 0.0;
                            for (std::size_t i = 0; i < count; ++i) {
                                const auto row = tv.row_span(static_cast<std::size_t>(w.first) + i);
                                double s = 0.0;
                                for (std::size_t c = 0; c < dz.size(); ++c) {
                                    s += dz[c] * row[c];
                                }
                                dsigma[i] = s;
                                dot += s * w.weights[i];
                                if (gt) {
                                    auto dst = gt->row_span(static_cast<std::size_t>(w.first) + i);
                                    for (std::size_t c = 0; c < dz.size(); ++c) {
                                        dst[c] += w.weights[i] * dz[c];
                                    }
                                }
                            }
                            if (gl) {
                                for (std::size_t i = 0; i < count; ++i) {
                                    (*gl)(r, static_cast<std::size_t>(w.first) + i) +=
                                        w.weights[i] * (dsigma[i] - dot);
                                }
                            }
                        }
                    });
}

}  // namespace genreg
