#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "genreg/autograd.h"
#include "genreg/tensor.h"

namespace genreg {

enum class HeadKind { gr, vr, ordinal };

std::string to_string(HeadKind head);
HeadKind parse_head(std::string_view text);

struct ModelConfig {
    HeadKind head = HeadKind::gr;
    std::size_t feature_dim = 8;
    std::size_t hidden_dim = 32;
    std::size_t encoder_layers = 3;
    std::size_t decoder_blocks = 2;
    std::size_t attention_heads = 2;
    std::size_t ffn_mult = 4;
    /// Value tokens plus the three special tokens.
    std::size_t vocab_size = 0;
    std::size_t max_len = 32;
    /// Embedding-mixup window n_w; the half-width is n_w / 2.
    std::size_t mixup_window = 2;
    /// Output width of the bucket-ordinal head.
    std::size_t ordinal_buckets = 0;
    std::uint64_t seed = 1;

    /// Throws std::invalid_argument naming the first violated constraint.
    void validate() const;

    std::map<std::string, std::string> to_map() const;
    static ModelConfig from_map(const std::map<std::string, std::string>& kv);
};

/// Named parameter tensors in a fixed order.
class ParamStore {
public:
    Tensor& add(std::string name, Tensor value);

    std::size_t size() const { return tensors_.size(); }
    const std::string& name(std::size_t i) const { return names_[i]; }
    Tensor& at(std::size_t i) { return tensors_[i]; }
    const Tensor& at(std::size_t i) const { return tensors_[i]; }
    Tensor& at(std::string_view name);
    const Tensor& at(std::string_view name) const;
    bool contains(std::string_view name) const;
    std::size_t index(std::string_view name) const;

    std::size_t scalar_count() const;
    std::vector<Tensor*> pointers();
    std::vector<Tensor>& tensors() { return tensors_; }
    const std::vector<Tensor>& tensors() const { return tensors_; }

    friend bool operator==(const ParamStore& a, const ParamStore& b) {
        return a.names_ == b.names_ && a.tensors_ == b.tensors_;
    }

private:
    std::vector<std::string> names_;
    std::vector<Tensor> tensors_;
    std::unordered_map<std::string, std::size_t> lookup_;
};

/// Graph leaves for every parameter of a store.
class BoundParams {
public:
    BoundParams(Graph& graph, const ParamStore& store);
    /// Binds existing leaves, aligned with the store order (used by gradient checks).
    BoundParams(const ParamStore& layout, std::vector<Var> vars);

    Var operator[](std::string_view name) const { return vars_[store_->index(name)]; }
    const std::vector<Var>& vars() const { return vars_; }
    /// Gradients after backward(), aligned with the store order.
    std::vector<Tensor> grads() const;

private:
    const ParamStore* store_;
    std::vector<Var> vars_;
};

/// Deterministic seeded initialization: scaled uniform weights, zero biases
/// and layer-norm offsets, unit layer-norm gains.
ParamStore init_params(const ModelConfig& config);

/// Parameter count implied by a config.
std::size_t expected_param_count(const ModelConfig& config);

// ---- graph building blocks ------------------------------------------------

/// h = W_L(... relu(W_1 x)); x is [batch x feature_dim], h is [batch x hidden_dim].
Var encode_features(const BoundParams& p, Var x, const ModelConfig& config);

Var embed_tokens(const BoundParams& p, std::span<const int> ids, const ModelConfig& config);

/// Causal decoder over input embeddings [batch*len x D] cross-attending to the
/// one-row memory h[b]; returns logits [batch*len x vocab_size].
Var decoder_logits(const BoundParams& p, Var inputs, Var h, std::size_t batch, std::size_t len,
                   const ModelConfig& config);

/// decoder_logits on embedded ids (SOS-framed, row-major [batch x len]).
Var decoder_forward(const BoundParams& p, std::span<const int> ids, Var h, std::size_t batch, std::size_t len,
                    const ModelConfig& config);

// ---- value-level conveniences (no gradient recording) ---------------------

Tensor encode_features(const Tensor& x, const ParamStore& params, const ModelConfig& config);
Tensor decoder_forward(const Tensor& h, std::span<const int> ids, std::size_t batch, std::size_t len,
                       const ParamStore& params, const ModelConfig& config);

}  // namespace genreg
