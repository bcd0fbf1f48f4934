#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "genreg/vocab.h"

namespace genreg {

/// Value-token ids of an encoded target, without SOS/EOS framing.
struct TokenSeq {
    std::vector<int> ids;
    /// y - decode(ids); nonnegative for greedy encodings.
    double encoding_error = 0.0;
    bool truncated = false;
};

struct EncodeOptions {
    std::size_t max_len = 32;
    double rel_tolerance = 0.001;
};

/// Greedy decomposition: repeatedly take the largest token not above the
/// remaining residual. Stops once the residual is within tolerance, when no
/// token fits, or at max_len. Never throws for nonnegative finite y.
TokenSeq encode(double y, const ValueVocabulary& vocab, const EncodeOptions& options = {});

/// Sum of token values; special ids contribute 0. Unknown ids throw.
double decode(std::span<const int> ids, const ValueVocabulary& vocab);

struct RoundTripReport {
    std::size_t count = 0;
    double max_rel_err = 0.0;
    double pct_within_tolerance = 100.0;
    double mean_seq_len = 0.0;
    std::size_t max_seq_len = 0;
    std::size_t out_of_tolerance = 0;
    std::size_t truncated = 0;
};

RoundTripReport validate_roundtrip(std::span<const double> targets, const ValueVocabulary& vocab,
                                   const EncodeOptions& options = {});

/// Two-column text table used by the encode-check command.
std::string format_roundtrip_table(const RoundTripReport& report);

}  // namespace genreg
