#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "genreg/tensor.h"
#include "genreg/vocab.h"

namespace genreg {

/// Mean absolute error. Throws on empty or mismatched inputs.
double mae(std::span<const double> preds, std::span<const double> labels);

/// Pairwise ordering agreement. Exhaustive over all pairs when N <= exhaustive_limit,
/// otherwise num_pairs uniformly drawn index pairs with a fixed seed.
/// Pred ties score 0.5, label ties are skipped; all-tied labels throw "degenerate labels".
double xauc(std::span<const double> preds, std::span<const double> labels, std::size_t num_pairs = 200000,
            std::uint64_t seed = 7, std::size_t exhaustive_limit = 2000);
double xauc_all_pairs(std::span<const double> preds, std::span<const double> labels);

struct IntervalRow {
    double lo = 0.0;
    /// +inf for the trailing open interval.
    double hi = 0.0;
    std::size_t count = 0;
    /// Absent (nullopt) when no label falls in the interval.
    std::optional<double> mae;
};

/// MAE per label interval [k*width, (k+1)*width); the last of `intervals` rows is open-ended.
std::vector<IntervalRow> interval_mae(std::span<const double> preds, std::span<const double> labels,
                                      double width = 2.0, std::size_t intervals = 6);

struct DistributionStats {
    double pred_mean = 0.0;
    double pred_variance = 0.0;
    double label_mean = 0.0;
    double label_variance = 0.0;
};

/// Means and sample (n-1) variances of both series.
DistributionStats distribution_stats(std::span<const double> preds, std::span<const double> labels);

/// e = sum_t (g(s_t) / y) * E[s_t]. Throws for y <= 0 or an empty sequence.
std::vector<double> aggregated_value_embedding(std::span<const int> ids, double y, const ValueVocabulary& vocab,
                                               const Tensor& embeddings);

/// Softmax of full-vocabulary logit rows restricted to the value-token columns.
Tensor value_token_probs(const Tensor& logits, const ValueVocabulary& vocab);

/// For each column i: mean over rows of the mean |P_i - P_j| over adjacent columns j = i +- 1.
std::vector<double> neighbor_prob_difference(const Tensor& probs);

struct EvalReport {
    std::size_t count = 0;
    double mae = 0.0;
    double xauc = 0.0;
    std::vector<IntervalRow> intervals;
    DistributionStats stats;
    /// Filled for generative heads only.
    double monotonicity_violation_rate = 0.0;
    double mean_seq_len = 0.0;
    std::size_t max_seq_len = 0;
    double eos_terminated_rate = 1.0;
};

EvalReport evaluate_predictions(std::span<const double> preds, std::span<const double> labels);

std::string report_to_json(const EvalReport& report);
std::string intervals_to_csv(const std::vector<IntervalRow>& rows);

}  // namespace genreg
