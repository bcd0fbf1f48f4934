#include "genreg/metrics.h"

#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "genreg/random.h"

namespace genreg {

namespace {

void check_pair(std::span<const double> preds, std::span<const double> labels, const char* what) {
    if (preds.size() != labels.size()) {
        throw std::invalid_argument(std::string(what) + ": " + std::to_string(preds.size()) + " predictions vs " +
                                    std::to_string(labels.size()) + " labels");
    }
    if (preds.empty()) {
        throw std::invalid_argument(std::string(what) + ": empty input");
    }
}

// 1 agree, 0 disagree, 0.5 pred tie; nullopt on a label tie.
std::optional<double> pair_score(double pi, double pj, double li, double lj) {
    if (li == lj) {
        return std::nullopt;
    }
    if (pi == pj) {
        return 0.5;
    }
    return ((pi < pj) == (li < lj)) ? 1.0 : 0.0;
}

double mean_of(std::span<const double> v) {
    double s = 0.0;
    for (double x : v) {
        s += x;
    }
    return s / static_cast<double>(v.size());
}

double sample_variance(std::span<const double> v, double mean) {
    if (v.size() < 2) {
        return 0.0;
    }
    double s = 0.0;
    for (double x : v) {
        s += (x - mean) * (x - mean);
    }
    return s / static_cast<double>(v.size() - 1);
}

}  // namespace

double mae(std::span<const double> preds, std::span<const double> labels) {
    check_pair(preds, labels, "mae");
    double s = 0.0;
    for (std::size_t i = 0; i < preds.size(); ++i) {
        s += std::abs(preds[i] - labels[i]);
    }
    return s / static_cast<double>(preds.size());
}

double xauc_all_pairs(std::span<const double> preds, std::span<const double> labels) {
    check_pair(preds, labels, "xauc");
    double total = 0.0;
    std::size_t used = 0;
    for (std::size_t i = 0; i < preds.size(); ++i) {
        for (std::size_t j = i + 1; j < preds.size(); ++j) {
            if (auto s = pair_score(preds[i], preds[j], labels[i], labels[j])) {
                total += *s;
                ++used;
            }
        }
    }
    if (used == 0) {
        throw std::invalid_argument("xauc: degenerate labels (every pair tied)");
    }
    return total / static_cast<double>(used);
}

double xauc(std::span<const double> preds, std::span<const double> labels, std::size_t num_pairs,
            std::uint64_t seed, std::size_t exhaustive_limit) {
    check_pair(preds, labels, "xauc");
    if (preds.size() < 2) {
        throw std::invalid_argument("xauc: need at least 2 samples");
    }
    if (preds.size() <= exhaustive_limit) {
        return xauc_all_pairs(preds, labels);
    }
    SplitMix64 rng(seed);
    const std::uint64_t n = preds.size();
    double total = 0.0;
    std::size_t used = 0;
    for (std::size_t k = 0; k < num_pairs; ++k) {
        const auto i = rng.below(n);
        auto j = rng.below(n - 1);
        if (j >= i) {
            ++j;
        }
        if (auto s = pair_score(preds[i], preds[j], labels[i], labels[j])) {
            total += *s;
            ++used;
        }
    }
    if (used == 0) {
        throw std::invalid_argument("xauc: degenerate labels (every sampled pair tied)");
    }
    return total / static_cast<double>(used);
}

std::vector<IntervalRow> interval_mae(std::span<const double> preds, std::span<const double> labels, double width,
                                      std::size_t intervals) {
    check_pair(preds, labels, "interval_mae");
    if (!(width > 0.0) || intervals == 0) {
        throw std::invalid_argument("interval_mae: width must be positive and intervals >= 1");
    }
    std::vector<IntervalRow> rows(intervals);
    std::vector<double> sums(intervals, 0.0);
    for (std::size_t k = 0; k < intervals; ++k) {
        rows[k].lo = static_cast<double>(k) * width;
        rows[k].hi = k + 1 == intervals ? std::numeric_limits<double>::infinity()
                                        : static_cast<double>(k + 1) * width;
    }
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const double slot = std::floor(labels[i] / width);
        auto k = slot <= 0.0 ? std::size_t{0} : static_cast<std::size_t>(slot);
        k = std::min(k, intervals - 1);
        rows[k].count++;
        sums[k] += std::abs(preds[i] - labels[i]);
    }
    for (std::size_t k = 0; k < intervals; ++k) {
        if (rows[k].count > 0) {
            rows[k].mae = sums[k] / static_cast<double>(rows[k].count);
        }
    }
    return rows;
}

DistributionStats distribution_stats(std::span<const double> preds, std::span<const double> labels) {
    check_pair(preds, labels, "distribution_stats");
    DistributionStats s;
    s.pred_mean = mean_of(preds);
    s.label_mean = mean_of(labels);
    s.pred_variance = sample_variance(preds, s.pred_mean);
    s.label_variance = sample_variance(labels, s.label_mean);
    return s;
}

std::vector<double> aggregated_value_embedding(std::span<const int> ids, double y, const ValueVocabulary& vocab,
                                               const Tensor& embeddings) {
    if (!(y > 0.0)) {
        throw std::invalid_argument("aggregated_value_embedding: y must be positive");
    }
    if (ids.empty()) {
        throw std::invalid_argument("aggregated_value_embedding: empty token sequence");
    }
    std::vector<double> e(embeddings.cols(), 0.0);
    for (int id : ids) {
        if (id < 0 || static_cast<std::size_t>(id) >= embeddings.rows()) {
            throw std::out_of_range("aggregated_value_embedding: id " + std::to_string(id) + " outside table");
        }
        const double r = vocab.value_of(id) / y;
        const auto row = embeddings.row_span(static_cast<std::size_t>(id));
        for (std::size_t c = 0; c < e.size(); ++c) {
            e[c] += r * row[c];
        }
    }
    return e;
}

Tensor value_token_probs(const Tensor& logits, const ValueVocabulary& vocab) {
    if (logits.cols() != vocab.size()) {
        throw std::invalid_argument("value_token_probs: logits have " + std::to_string(logits.cols()) +
                                    " columns, vocabulary has " + std::to_string(vocab.size()));
    }
    Tensor out(logits.rows(), vocab.value_count());
    std::vector<double> row(logits.cols());
    for (std::size_t r = 0; r < logits.rows(); ++r) {
        const auto src = logits.row_span(r);
        row.assign(src.begin(), src.end());
        softmax_inplace(row);
        for (std::size_t i = 0; i < vocab.value_count(); ++i) {
            out(r, i) = row[kFirstValueId + i];
        }
    }
    return out;
}

std::vector<double> neighbor_prob_difference(const Tensor& probs) {
    const std::size_t n = probs.cols();
    std::vector<double> score(n, 0.0);
    if (probs.rows() == 0 || n < 2) {
        return score;
    }
    for (std::size_t r = 0; r < probs.rows(); ++r) {
        for (std::size_t i = 0; i < n; ++i) {
            double s = 0.0;
            int neighbors = 0;
            if (i > 0) {
                s += std::abs(probs(r, i) - probs(r, i - 1));
                ++neighbors;
            }
            if (i + 1 < n) {
                s += std::abs(probs(r, i) - probs(r, i + 1));
                ++neighbors;
            }
            score[i] += s / neighbors;
        }
    }
    for (double& s : score) {
        s /= static_cast<double>(probs.rows());
    }
    return score;
}

EvalReport evaluate_predictions(std::span<const double> preds, std::span<const double> labels) {
    EvalReport r;
    r.count = preds.size();
    r.mae = mae(preds, labels);
    r.xauc = xauc(preds, labels);
    r.intervals = interval_mae(preds, labels);
    r.stats = distribution_stats(preds, labels);
    return r;
}

std::string report_to_json(const EvalReport& r) {
    nlohmann::ordered_json j;
    j["count"] = r.count;
    j["mae"] = r.mae;
    j["xauc"] = r.xauc;
    j["pred_mean"] = r.stats.pred_mean;
    j["pred_variance"] = r.stats.pred_variance;
    j["label_mean"] = r.stats.label_mean;
    j["label_variance"] = r.stats.label_variance;
    j["monotonicity_violation_rate"] = r.monotonicity_violation_rate;
    j["mean_seq_len"] = r.mean_seq_len;
    j["max_seq_len"] = r.max_seq_len;
    j["eos_terminated_rate"] = r.eos_terminated_rate;
    auto& rows = j["intervals"] = nlohmann::ordered_json::array();
    for (const auto& row : r.intervals) {
        nlohmann::ordered_json e;
        e["lo"] = row.lo;
        e["hi"] = std::isinf(row.hi) ? nlohmann::ordered_json(nullptr) : nlohmann::ordered_json(row.hi);
        e["count"] = row.count;
        e["mae"] = row.mae ? nlohmann::ordered_json(*row.mae) : nlohmann::ordered_json(nullptr);
        rows.push_back(std::move(e));
    }
    return j.dump(2) + "\n";
}

std::string intervals_to_csv(const std::vector<IntervalRow>& rows) {
    std::ostringstream out;
    out.precision(10);
    out << "lo,hi,count,mae\n";
    for (const auto& row : rows) {
        out << row.lo << ',';
        if (std::isinf(row.hi)) {
            out << "inf";
        } else {
            out << row.hi;
        }
        out << ',' << row.count << ',';
        if (row.mae) {
            out << *row.mae;
        } else {
            out << "NA";
        }
        out << '\n';
    }
    return out.str();
}

}  // namespace genreg
