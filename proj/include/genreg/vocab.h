#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace genreg {

inline constexpr int kPadId = 0;
inline constexpr int kSosId = 1;
inline constexpr int kEosId = 2;
inline constexpr int kFirstValueId = 3;

struct VocabMeta {
    std::string strategy = "manual";
    double q_start = 0.0;
    double q_end = 0.0;
    double alpha = 0.0;
    double eps = 0.0;
    double resolution = 0.0;
    double unit = 0.0;
    std::string source_fingerprint;
    int iterations = 0;
    double final_error = 0.0;
};

/// Value tokens sorted strictly decreasing, preceded by PAD/SOS/EOS.
/// Token id k >= 3 decodes to values()[k - 3]; special ids decode to 0.
class ValueVocabulary {
public:
    ValueVocabulary() = default;
    explicit ValueVocabulary(std::vector<double> descending_values, VocabMeta meta = {});

    std::size_t value_count() const { return values_.size(); }
    /// Total ids including the three special tokens.
    std::size_t size() const { return values_.size() + kFirstValueId; }
    int last_value_id() const { return static_cast<int>(size()) - 1; }
    bool is_value_id(int id) const { return id >= kFirstValueId && id <= last_value_id(); }

    double value_of(int id) const;
    /// Decode values indexed by id, zeros for the special tokens.
    std::vector<double> id_values() const;
    const std::vector<double>& values() const { return values_; }
    const VocabMeta& meta() const { return meta_; }

private:
    std::vector<double> values_;
    VocabMeta meta_;
};

struct DynamicVocabOptions {
    double q_start = 99.0;
    double q_end = 50.0;
    double alpha = 0.95;
    double eps = 0.001;
    /// Percentile values are rounded to this grid; 0 disables rounding.
    double resolution = 0.01;
    int max_iterations = 128;
};

/// Dynamic-percentile construction. Throws on invalid options, negative or
/// all-zero targets, and when eps is not reached within max_iterations.
ValueVocabulary build_dynamic(std::span<const double> targets, const DynamicVocabOptions& options = {});

/// unit, 2*unit, 4*unit, ... up to and including the first value above y_max.
/// Requires y_max >= unit > 0.
ValueVocabulary build_binary(double y_max, double unit);

ValueVocabulary build_manual(std::vector<double> values);

/// q-th percentile (0..100) with linear interpolation between order statistics.
double percentile(std::vector<double> values, double q);

std::string vocab_to_json(const ValueVocabulary& vocab);
ValueVocabulary vocab_from_json(std::string_view text);
void save_vocab(const ValueVocabulary& vocab, const std::string& path);
ValueVocabulary load_vocab(const std::string& path);

struct TokenFrequency {
    /// counts[i] is the usage of values()[i] across greedy encodings.
    std::vector<std::size_t> counts;

    /// (token id, count) pairs sorted by descending count, ties by id.
    std::vector<std::pair<int, std::size_t>> top_k(std::size_t k) const;
    /// max count / median count over all value tokens.
    double max_median_ratio() const;
};

TokenFrequency token_frequency(std::span<const double> targets, const ValueVocabulary& vocab,
                               std::size_t max_len = 32);

}  // namespace genreg
