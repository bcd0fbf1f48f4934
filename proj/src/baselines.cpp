#include "genreg/baselines.h"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "genreg/vocab.h"

namespace genreg {

double BucketScheme::max_value() const {
    double total = 0.0;
    for (double s : spans) {
        total += s;
    }
    return total;
}

void BucketScheme::validate() const {
    if (edges.empty() || edges.size() != spans.size()) {
        throw std::invalid_argument("bucket scheme: need one span per edge");
    }
    for (std::size_t k = 0; k < edges.size(); ++k) {
        if (k > 0 && !(edges[k] > edges[k - 1])) {
            throw std::invalid_argument("bucket scheme: edges must be strictly increasing");
        }
        if (!(spans[k] > 0.0)) {
            throw std::invalid_argument("bucket scheme: spans must be positive");
        }
    }
}

BucketScheme quantile_buckets(std::span<const double> targets, std::size_t buckets) {
    if (targets.empty() || buckets == 0) {
        throw std::invalid_argument("quantile_buckets: need targets and at least one bucket");
    }
    std::vector<double> sorted(targets.begin(), targets.end());
    std::sort(sorted.begin(), sorted.end());
    const double top = sorted.back();
    if (!(top > 0.0)) {
        throw std::invalid_argument("quantile_buckets: degenerate targets (all zero)");
    }
    BucketScheme scheme;
    scheme.edges.push_back(0.0);
    for (std::size_t k = 1; k < buckets; ++k) {
        const double edge = percentile(sorted, 100.0 * static_cast<double>(k) / static_cast<double>(buckets));
        if (edge > scheme.edges.back() && edge < top) {
            scheme.edges.push_back(edge);
        }
    }
    for (std::size_t k = 0; k < scheme.edges.size(); ++k) {
        const double upper = k + 1 < scheme.edges.size() ? scheme.edges[k + 1] : top;
        scheme.spans.push_back(upper - scheme.edges[k]);
    }
    scheme.validate();
    return scheme;
}

Tensor ordinal_labels(std::span<const double> targets, const BucketScheme& scheme) {
    Tensor labels(targets.size(), scheme.size());
    for (std::size_t r = 0; r < targets.size(); ++r) {
        for (std::size_t k = 0; k < scheme.size(); ++k) {
            labels(r, k) = targets[r] > scheme.edges[k] ? 1.0 : 0.0;
        }
    }
    return labels;
}

Var vr_output(const BoundParams& p, Var h) { return add_row(matmul(h, p["vr.w"]), p["vr.b"]); }

Var ordinal_logits(const BoundParams& p, Var h) { return add_row(matmul(h, p["ord.w"]), p["ord.b"]); }

std::vector<double> vr_head(const Tensor& h, const ParamStore& params) {
    Graph g(false);
    BoundParams p(g, params);
    const Tensor out = vr_output(p, g.constant(h)).value();
    std::vector<double> y(out.rows());
    for (std::size_t r = 0; r < out.rows(); ++r) {
        y[r] = std::max(0.0, out[r]);
    }
    return y;
}

std::vector<double> ordinal_value(const Tensor& logits, const BucketScheme& scheme) {
    if (logits.cols() != scheme.size()) {
        throw std::invalid_argument("ordinal head: " + std::to_string(logits.cols()) + " logits for " +
                                    std::to_string(scheme.size()) + " buckets");
    }
    std::vector<double> y(logits.rows(), 0.0);
    for (std::size_t r = 0; r < logits.rows(); ++r) {
        for (std::size_t k = 0; k < scheme.size(); ++k) {
            y[r] += scheme.spans[k] / (1.0 + std::exp(-logits(r, k)));
        }
    }
    return y;
}

std::vector<double> ordinal_head(const Tensor& h, const ParamStore& params, const BucketScheme& scheme) {
    Graph g(false);
    BoundParams p(g, params);
    return ordinal_value(ordinal_logits(p, g.constant(h)).value(), scheme);
}

}  // namespace genreg
