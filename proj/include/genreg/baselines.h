#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "genreg/autograd.h"
#include "genreg/model.h"

namespace genreg {

/// Buckets [edge_k, edge_{k+1}) with the last bucket closed at the upper end.
/// edges[0] is 0; spans[k] = edges[k+1] - edges[k] (upper end for the last).
struct BucketScheme {
    std::vector<double> edges;
    std::vector<double> spans;

    std::size_t size() const { return edges.size(); }
    double max_value() const;
    /// Throws unless edges strictly increase and spans are positive.
    void validate() const;
};

/// Equal-frequency edges from training targets (duplicates collapsed).
BucketScheme quantile_buckets(std::span<const double> targets, std::size_t buckets = 20);

/// Per-bucket binary labels 1[y > edge_k], one row per target.
Tensor ordinal_labels(std::span<const double> targets, const BucketScheme& scheme);

/// Linear output on h, unclamped (training signal). Shape [batch x 1].
Var vr_output(const BoundParams& p, Var h);
/// Bucket logits [batch x K].
Var ordinal_logits(const BoundParams& p, Var h);

/// max(0, w.h + b) per row.
std::vector<double> vr_head(const Tensor& h, const ParamStore& params);
/// sum_k sigmoid(logit_k) * span_k per row.
std::vector<double> ordinal_head(const Tensor& h, const ParamStore& params, const BucketScheme& scheme);
std::vector<double> ordinal_value(const Tensor& logits, const BucketScheme& scheme);

}  // namespace genreg
