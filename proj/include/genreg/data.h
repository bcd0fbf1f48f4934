#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "genreg/tensor.h"

namespace genreg {

struct DatasetSchema {
    /// Empty means every column except the target.
    std::vector<std::string> feature_columns;
    std::string target_column = "y";
    std::string units = "seconds";
};

/// Dense features [n x d] with one nonnegative target per row. A feature-only
/// dataset (for prediction) has an empty target list.
struct Dataset {
    std::vector<std::string> feature_names;
    Tensor features;
    std::vector<double> targets;

    std::size_t size() const { return features.rows(); }
    std::size_t dim() const { return features.cols(); }
    bool has_targets() const { return !targets.empty(); }
    Dataset subset(std::span<const std::size_t> rows) const;
};

struct RowRejection {
    std::size_t line = 0;
    std::string reason;
};

struct LoadResult {
    Dataset data;
    std::vector<RowRejection> rejected;
};

/// Parses a headered CSV. Malformed rows are rejected with their 1-based line
/// number; more than 1% rejected rows (or a missing column) throws.
LoadResult read_csv(std::istream& in, const DatasetSchema& schema = {}, bool require_target = true);
LoadResult load_csv(const std::string& path, const DatasetSchema& schema = {}, bool require_target = true);
void write_csv(const Dataset& data, std::ostream& out);
void save_csv(const Dataset& data, const std::string& path);

/// Per-column mean/std frozen from a training split.
struct Standardizer {
    std::vector<double> mean;
    std::vector<double> stddev;

    static Standardizer fit(const Tensor& features);
    Tensor apply(const Tensor& features) const;
    bool empty() const { return mean.empty(); }
};

struct SynthParams {
    /// y = min(scale * exp(slope * w.x + noise * e), y_cap), rounded to resolution;
    /// rows with u.x below the zero_fraction quantile of N(0,1) get y = 0.
    double scale = 5.0;
    double slope = 1.0;
    double noise = 0.5;
    double y_cap = 300.0;
    double zero_fraction = 0.1;
    double resolution = 0.01;
};

Dataset synth_longtail(std::size_t n, std::size_t d, std::uint64_t seed, const SynthParams& params = {});

/// Seeded shuffle, then the first round(ratio * n) rows go to the first split.
std::pair<Dataset, Dataset> split(const Dataset& data, double ratio, std::uint64_t seed);
std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_indices(std::size_t n, double ratio,
                                                                            std::uint64_t seed);

double skewness(std::span<const double> values);

}  // namespace genreg
