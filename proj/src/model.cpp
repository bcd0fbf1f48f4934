#include "genreg/model.h"

#include <cmath>
#include <stdexcept>

#include "genreg/random.h"
#include "genreg/vocab.h"

namespace genreg {

namespace {

std::string block_name(std::size_t b, std::string_view leaf) { return "dec." + std::to_string(b) + "." + std::string(leaf); }
std::string enc_name(std::size_t l, std::string_view leaf) { return "enc." + std::to_string(l) + "." + std::string(leaf); }

Tensor uniform_tensor(std::size_t rows, std::size_t cols, double limit, SplitMix64& rng) {
    Tensor t(rows, cols);
    for (double& v : t.values()) {
        v = rng.uniform(-limit, limit);
    }
    return t;
}

Tensor xavier(std::size_t fan_in, std::size_t fan_out, SplitMix64& rng) {
    return uniform_tensor(fan_in, fan_out, std::sqrt(6.0 / static_cast<double>(fan_in + fan_out)), rng);
}

void add_linear(ParamStore& store, const std::string& w, const std::string& b, std::size_t in, std::size_t out,
                SplitMix64& rng) {
    store.add(w, xavier(in, out, rng));
    store.add(b, Tensor(1, out));
}

void add_norm(ParamStore& store, const std::string& prefix, std::size_t width) {
    store.add(prefix + ".gamma", Tensor(1, width, 1.0));
    store.add(prefix + ".beta", Tensor(1, width));
}

Var linear(const BoundParams& p, Var x, const std::string& w, const std::string& b) {
    return add_row(matmul(x, p[w]), p[b]);
}

Var norm(const BoundParams& p, Var x, const std::string& prefix) {
    return layer_norm(x, p[prefix + ".gamma"], p[prefix + ".beta"]);
}

std::size_t parse_size(const std::map<std::string, std::string>& kv, const std::string& key, std::size_t fallback) {
    const auto it = kv.find(key);
    if (it == kv.end()) {
        return fallback;
    }
    try {
        return static_cast<std::size_t>(std::stoull(it->second));
    } catch (const std::exception&) {
        throw std::invalid_argument("model config: bad value for " + key + ": '" + it->second + "'");
    }
}

}  // namespace

std::string to_string(HeadKind head) {
    switch (head) {
        case HeadKind::gr:
            return "gr";
        case HeadKind::vr:
            return "vr";
        case HeadKind::ordinal:
            return "ordinal";
    }
    return "gr";
}

HeadKind parse_head(std::string_view text) {
    if (text == "gr") {
        return HeadKind::gr;
    }
    if (text == "vr") {
        return HeadKind::vr;
    }
    if (text == "ordinal") {
        return HeadKind::ordinal;
    }
    throw std::invalid_argument("unknown head '" + std::string(text) + "' (expected gr|vr|ordinal)");
}

void ModelConfig::validate() const {
    if (feature_dim == 0 || hidden_dim == 0 || encoder_layers == 0) {
        throw std::invalid_argument("model config: feature_dim, hidden_dim and encoder_layers must be >= 1");
    }
    if (head == HeadKind::gr) {
        if (decoder_blocks == 0 || attention_heads == 0 || ffn_mult == 0 || max_len == 0) {
            throw std::invalid_argument("model config: decoder dims must be >= 1");
        }
        if (hidden_dim % attention_heads != 0) {
            throw std::invalid_argument("model config: hidden_dim " + std::to_string(hidden_dim) +
                                        " is not divisible by " + std::to_string(attention_heads) + " heads");
        }
        if (vocab_size <= static_cast<std::size_t>(kFirstValueId)) {
            throw std::invalid_argument("model config: vocab_size must include at least one value token");
        }
    }
    if (head == HeadKind::ordinal && ordinal_buckets == 0) {
        throw std::invalid_argument("model config: ordinal head needs at least one bucket");
    }
}

std::map<std::string, std::string> ModelConfig::to_map() const {
    return {
        {"head", to_string(head)},
        {"feature_dim", std::to_string(feature_dim)},
        {"hidden_dim", std::to_string(hidden_dim)},
        {"encoder_layers", std::to_string(encoder_layers)},
        {"decoder_blocks", std::to_string(decoder_blocks)},
        {"attention_heads", std::to_string(attention_heads)},
        {"ffn_mult", std::to_string(ffn_mult)},
        {"vocab_size", std::to_string(vocab_size)},
        {"max_len", std::to_string(max_len)},
        {"mixup_window", std::to_string(mixup_window)},
        {"ordinal_buckets", std::to_string(ordinal_buckets)},
        {"seed", std::to_string(seed)},
    };
}

ModelConfig ModelConfig::from_map(const std::map<std::string, std::string>& kv) {
    ModelConfig c;
    if (const auto it = kv.find("head"); it != kv.end()) {
        c.head = parse_head(it->second);
    }
    c.feature_dim = parse_size(kv, "feature_dim", c.feature_dim);
    c.hidden_dim = parse_size(kv, "hidden_dim", c.hidden_dim);
    c.encoder_layers = parse_size(kv, "encoder_layers", c.encoder_layers);
    c.decoder_blocks = parse_size(kv, "decoder_blocks", c.decoder_blocks);
    c.attention_heads = parse_size(kv, "attention_heads", c.attention_heads);
    c.ffn_mult = parse_size(kv, "ffn_mult", c.ffn_mult);
    c.vocab_size = parse_size(kv, "vocab_size", c.vocab_size);
    c.max_len = parse_size(kv, "max_len", c.max_len);
    c.mixup_window = parse_size(kv, "mixup_window", c.mixup_window);
    c.ordinal_buckets = parse_size(kv, "ordinal_buckets", c.ordinal_buckets);
    c.seed = parse_size(kv, "seed", c.seed);
    return c;
}

// ---- ParamStore -----------------------------------------------------------

Tensor& ParamStore::add(std::string name, Tensor value) {
    if (lookup_.contains(name)) {
        throw std::invalid_argument("param store: duplicate parameter " + name);
    }
    lookup_.emplace(name, names_.size());
    names_.push_back(std::move(name));
    tensors_.push_back(std::move(value));
    return tensors_.back();
}

std::size_t ParamStore::index(std::string_view name) const {
    const auto it = lookup_.find(std::string(name));
    if (it == lookup_.end()) {
        throw std::out_of_range("param store: no parameter named " + std::string(name));
    }
    return it->second;
}

bool ParamStore::contains(std::string_view name) const { return lookup_.contains(std::string(name)); }
Tensor& ParamStore::at(std::string_view name) { return tensors_[index(name)]; }
const Tensor& ParamStore::at(std::string_view name) const { return tensors_[index(name)]; }

std::size_t ParamStore::scalar_count() const {
    std::size_t n = 0;
    for (const Tensor& t : tensors_) {
        n += t.size();
    }
    return n;
}

std::vector<Tensor*> ParamStore::pointers() {
    std::vector<Tensor*> out;
    for (Tensor& t : tensors_) {
        out.push_back(&t);
    }
    return out;
}

BoundParams::BoundParams(Graph& graph, const ParamStore& store) : store_(&store) {
    for (const Tensor& t : store.tensors()) {
        vars_.push_back(graph.parameter(t));
    }
}

BoundParams::BoundParams(const ParamStore& layout, std::vector<Var> vars) : store_(&layout), vars_(std::move(vars)) {
    if (vars_.size() != layout.size()) {
        throw std::invalid_argument("BoundParams: " + std::to_string(vars_.size()) + " leaves for " +
                                    std::to_string(layout.size()) + " parameters");
    }
}

std::vector<Tensor> BoundParams::grads() const {
    std::vector<Tensor> out;
    out.reserve(vars_.size());
    for (Var v : vars_) {
        out.push_back(v.grad());
    }
    return out;
}

// ---- initialization -------------------------------------------------------

ParamStore init_params(const ModelConfig& c) {
    c.validate();
    SplitMix64 rng(c.seed);
    ParamStore store;
    const std::size_t d = c.hidden_dim;
    for (std::size_t l = 0; l < c.encoder_layers; ++l) {
        add_linear(store, enc_name(l, "w"), enc_name(l, "b"), l == 0 ? c.feature_dim : d, d, rng);
    }
    switch (c.head) {
        case HeadKind::vr:
            add_linear(store, "vr.w", "vr.b", d, 1, rng);
            return store;
        case HeadKind::ordinal:
            add_linear(store, "ord.w", "ord.b", d, c.ordinal_buckets, rng);
            return store;
        case HeadKind::gr:
            break;
    }
    const double emb_limit = 1.0 / std::sqrt(static_cast<double>(d));
    store.add("emb.token", uniform_tensor(c.vocab_size, d, emb_limit, rng));
    store.add("emb.pos", uniform_tensor(c.max_len + 2, d, emb_limit, rng));
    const std::size_t ffn = c.ffn_mult * d;
    for (std::size_t b = 0; b < c.decoder_blocks; ++b) {
        add_norm(store, block_name(b, "ln1"), d);
        for (const char* m : {"self", "cross"}) {
            for (const char* proj : {"q", "k", "v", "o"}) {
                const std::string base = block_name(b, std::string(m) + ".w" + proj);
                add_linear(store, base, block_name(b, std::string(m) + ".b" + proj), d, d, rng);
            }
            if (std::string_view(m) == "self") {
                add_norm(store, block_name(b, "ln2"), d);
            }
        }
        add_norm(store, block_name(b, "ln3"), d);
        add_linear(store, block_name(b, "ffn.w1"), block_name(b, "ffn.b1"), d, ffn, rng);
        add_linear(store, block_name(b, "ffn.w2"), block_name(b, "ffn.b2"), ffn, d, rng);
    }
    add_norm(store, "ln_f", d);
    add_linear(store, "out.w", "out.b", d, c.vocab_size, rng);
    return store;
}

std::size_t expected_param_count(const ModelConfig& c) {
    const std::size_t d = c.hidden_dim;
    std::size_t n = c.feature_dim * d + d + (c.encoder_layers - 1) * (d * d + d);
    switch (c.head) {
        case HeadKind::vr:
            return n + d + 1;
        case HeadKind::ordinal:
            return n + (d + 1) * c.ordinal_buckets;
        case HeadKind::gr:
            break;
    }
    const std::size_t ffn = c.ffn_mult * d;
    const std::size_t per_block = 3 * 2 * d + 8 * (d * d + d) + (d * ffn + ffn) + (ffn * d + d);
    n += c.vocab_size * d + (c.max_len + 2) * d;
    n += c.decoder_blocks * per_block;
    n += 2 * d + d * c.vocab_size + c.vocab_size;
    return n;
}

// ---- forward --------------------------------------------------------------

Var encode_features(const BoundParams& p, Var x, const ModelConfig& c) {
    if (x.cols() != c.feature_dim) {
        throw std::invalid_argument("encode_features: expected " + std::to_string(c.feature_dim) +
                                    " features, got " + x.value().shape_string());
    }
    Var h = x;
    for (std::size_t l = 0; l < c.encoder_layers; ++l) {
        if (l > 0) {
            h = relu(h);
        }
        h = linear(p, h, enc_name(l, "w"), enc_name(l, "b"));
    }
    return h;
}

Var embed_tokens(const BoundParams& p, std::span<const int> ids, const ModelConfig& c) {
    for (int id : ids) {
        if (id < 0 || static_cast<std::size_t>(id) >= c.vocab_size) {
            throw std::out_of_range("decoder: token id " + std::to_string(id) + " outside vocabulary of " +
                                    std::to_string(c.vocab_size));
        }
    }
    return gather_rows(p["emb.token"], ids);
}

Var decoder_logits(const BoundParams& p, Var inputs, Var h, std::size_t batch, std::size_t len,
                   const ModelConfig& c) {
    if (len == 0 || len > c.max_len + 1) {
        throw std::invalid_argument("decoder: sequence length " + std::to_string(len) + " outside [1, " +
                                    std::to_string(c.max_len + 1) + "]");
    }
    if (inputs.rows() != batch * len || inputs.cols() != c.hidden_dim || h.rows() != batch ||
        h.cols() != c.hidden_dim) {
        throw std::invalid_argument("decoder: inputs " + inputs.value().shape_string() + " / memory " +
                                    h.value().shape_string() + " do not match batch layout");
    }
    std::vector<int> positions(batch * len);
    for (std::size_t b = 0; b < batch; ++b) {
        for (std::size_t t = 0; t < len; ++t) {
            positions[b * len + t] = static_cast<int>(t);
        }
    }
    Var x = add(inputs, gather_rows(p["emb.pos"], positions));

    const AttentionShape self_shape{batch, len, len, c.attention_heads, true};
    const AttentionShape cross_shape{batch, len, 1, c.attention_heads, false};
    for (std::size_t b = 0; b < c.decoder_blocks; ++b) {
        auto n = [&](std::string_view leaf) { return block_name(b, leaf); };

        Var a = norm(p, x, n("ln1"));
        Var q = linear(p, a, n("self.wq"), n("self.bq"));
        Var k = linear(p, a, n("self.wk"), n("self.bk"));
        Var v = linear(p, a, n("self.wv"), n("self.bv"));
        x = add(x, linear(p, attention(q, k, v, self_shape), n("self.wo"), n("self.bo")));

        Var cq = linear(p, norm(p, x, n("ln2")), n("cross.wq"), n("cross.bq"));
        Var ck = linear(p, h, n("cross.wk"), n("cross.bk"));
        Var cv = linear(p, h, n("cross.wv"), n("cross.bv"));
        x = add(x, linear(p, attention(cq, ck, cv, cross_shape), n("cross.wo"), n("cross.bo")));

        Var f = relu(linear(p, norm(p, x, n("ln3")), n("ffn.w1"), n("ffn.b1")));
        x = add(x, linear(p, f, n("ffn.w2"), n("ffn.b2")));
    }
    return linear(p, norm(p, x, "ln_f"), "out.w", "out.b");
}

Var decoder_forward(const BoundParams& p, std::span<const int> ids, Var h, std::size_t batch, std::size_t len,
                    const ModelConfig& c) {
    if (ids.size() != batch * len) {
        throw std::invalid_argument("decoder: " + std::to_string(ids.size()) + " ids for batch " +
                                    std::to_string(batch) + " x length " + std::to_string(len));
    }
    return decoder_logits(p, embed_tokens(p, ids, c), h, batch, len, c);
}

Tensor encode_features(const Tensor& x, const ParamStore& params, const ModelConfig& config) {
    Graph g(false);
    BoundParams p(g, params);
    return encode_features(p, g.constant(x), config).value();
}

Tensor decoder_forward(const Tensor& h, std::span<const int> ids, std::size_t batch, std::size_t len,
                       const ParamStore& params, const ModelConfig& config) {
    Graph g(false);
    BoundParams p(g, params);
    return decoder_forward(p, ids, g.constant(h), batch, len, config).value();
}

}  // namespace genreg
