#include "genreg/codec.h"

#include <algorithm>
#include <cmath>
#include <functional>
#include <iomanip>
#include <sstream>
#include <stdexcept>

namespace genreg {

namespace {

// Absorbs accumulated floating-point noise when comparing grid-aligned values.
constexpr double kSlack = 1e-9;

}  // namespace

TokenSeq encode(double y, const ValueVocabulary& vocab, const EncodeOptions& options) {
    if (!std::isfinite(y) || y < 0.0) {
        throw std::invalid_argument("encode: target must be finite and nonnegative, got " + std::to_string(y));
    }
    TokenSeq seq;
    const auto& values = vocab.values();
    double residual = y;
    const double tolerance = options.rel_tolerance * y;
    while (residual > tolerance) {
        if (seq.ids.size() >= options.max_len) {
            seq.truncated = true;
            break;
        }
        // first (largest) value that is <= residual
        const auto it = std::lower_bound(values.begin(), values.end(), residual + kSlack * std::max(1.0, residual),
                                         std::greater<double>());
        if (it == values.end()) {
            break;
        }
        seq.ids.push_back(kFirstValueId + static_cast<int>(it - values.begin()));
        residual -= *it;
        if (std::abs(residual) < kSlack) {
            residual = 0.0;
        }
    }
    seq.encoding_error = residual;
    return seq;
}

double decode(std::span<const int> ids, const ValueVocabulary& vocab) {
    double total = 0.0;
    for (int id : ids) {
        total += vocab.value_of(id);
    }
    return total;
}

RoundTripReport validate_roundtrip(std::span<const double> targets, const ValueVocabulary& vocab,
                                   const EncodeOptions& options) {
    RoundTripReport report;
    report.count = targets.size();
    if (targets.empty()) {
        return report;
    }
    double total_len = 0.0;
    for (double y : targets) {
        const TokenSeq seq = encode(y, vocab, options);
        const double rebuilt = decode(seq.ids, vocab);
        const double rel = y > 0.0 ? std::abs(y - rebuilt) / y : std::abs(rebuilt);
        report.max_rel_err = std::max(report.max_rel_err, rel);
        if (rel > options.rel_tolerance) {
            ++report.out_of_tolerance;
        }
        if (seq.truncated) {
            ++report.truncated;
        }
        total_len += static_cast<double>(seq.ids.size());
        report.max_seq_len = std::max(report.max_seq_len, seq.ids.size());
    }
    const double n = static_cast<double>(report.count);
    report.mean_seq_len = total_len / n;
    report.pct_within_tolerance = 100.0 * (n - static_cast<double>(report.out_of_tolerance)) / n;
    return report;
}

std::string format_roundtrip_table(const RoundTripReport& report) {
    std::ostringstream out;
    out << std::left << std::setw(24) << "metric" << "value\n";
    out << std::setw(24) << "samples" << report.count << '\n';
    out << std::setw(24) << "max_rel_err" << std::setprecision(6) << report.max_rel_err << '\n';
    out << std::setw(24) << "pct_within_tolerance" << std::setprecision(6) << report.pct_within_tolerance << '\n';
    out << std::setw(24) << "out_of_tolerance" << report.out_of_tolerance << '\n';
    out << std::setw(24) << "truncated" << report.truncated << '\n';
    out << std::setw(24) << "mean_seq_len" << std::setprecision(6) << report.mean_seq_len << '\n';
    out << std::setw(24) << "max_seq_len" << report.max_seq_len << '\n';
    return out.str();
}

}  // namespace genreg
