#include "genreg/data.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>

#include "genreg/random.h"

namespace genreg {

namespace {

std::string trim(const std::string& s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string::npos) {
        return "";
    }
    const auto last = s.find_last_not_of(" \t\r");
    return s.substr(first, last - first + 1);
}

std::vector<std::string> split_cells(const std::string& line) {
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream in(line);
    while (std::getline(in, cell, ',')) {
        cells.push_back(trim(cell));
    }
    if (!line.empty() && line.back() == ',') {
        cells.emplace_back();
    }
    return cells;
}

bool parse_number(const std::string& cell, double& out) {
    if (cell.empty()) {
        return false;
    }
    char* end = nullptr;
    out = std::strtod(cell.c_str(), &end);
    return end == cell.c_str() + cell.size() && std::isfinite(out);
}

// Inverse of the standard normal CDF by bisection on erfc.
double normal_quantile(double p) {
    double lo = -10.0;
    double hi = 10.0;
    for (int i = 0; i < 200; ++i) {
        const double mid = 0.5 * (lo + hi);
        const double cdf = 0.5 * std::erfc(-mid / std::sqrt(2.0));
        (cdf < p ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
}

std::vector<double> unit_direction(std::size_t d, SplitMix64& rng) {
    std::vector<double> w(d);
    double norm = 0.0;
    for (double& v : w) {
        v = rng.normal();
        norm += v * v;
    }
    norm = std::sqrt(norm);
    for (double& v : w) {
        v /= norm;
    }
    return w;
}

}  // namespace

Dataset Dataset::subset(std::span<const std::size_t> rows) const {
    Dataset out;
    out.feature_names = feature_names;
    out.features = Tensor(rows.size(), dim());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto src = features.row_span(rows[i]);
        std::copy(src.begin(), src.end(), out.features.row_span(i).begin());
        if (has_targets()) {
            out.targets.push_back(targets[rows[i]]);
        }
    }
    return out;
}

LoadResult read_csv(std::istream& in, const DatasetSchema& schema, bool require_target) {
    std::string line;
    if (!std::getline(in, line)) {
        throw std::runtime_error("csv: missing header row");
    }
    const std::vector<std::string> header = split_cells(line);
    auto column_of = [&](const std::string& name) -> long {
        const auto it = std::find(header.begin(), header.end(), name);
        return it == header.end() ? -1 : static_cast<long>(it - header.begin());
    };

    const long target_col = column_of(schema.target_column);
    if (require_target && target_col < 0) {
        throw std::runtime_error("csv: missing target column '" + schema.target_column + "'");
    }
    std::vector<std::size_t> feature_cols;
    std::vector<std::string> names;
    if (schema.feature_columns.empty()) {
        for (std::size_t c = 0; c < header.size(); ++c) {
            if (static_cast<long>(c) != target_col) {
                feature_cols.push_back(c);
                names.push_back(header[c]);
            }
        }
    } else {
        for (const auto& name : schema.feature_columns) {
            const long c = column_of(name);
            if (c < 0) {
                throw std::runtime_error("csv: missing feature column '" + name + "'");
            }
            feature_cols.push_back(static_cast<std::size_t>(c));
            names.push_back(name);
        }
    }
    if (feature_cols.empty()) {
        throw std::runtime_error("csv: no feature columns");
    }

    LoadResult result;
    std::vector<double> values;
    std::vector<double> targets;
    std::size_t line_no = 1;
    std::size_t data_rows = 0;
    std::vector<double> row(feature_cols.size());
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) {
            continue;
        }
        ++data_rows;
        const auto cells = split_cells(line);
        if (cells.size() != header.size()) {
            result.rejected.push_back({line_no, "expected " + std::to_string(header.size()) + " cells, got " +
                                                    std::to_string(cells.size())});
            continue;
        }
        bool ok = true;
        for (std::size_t i = 0; i < feature_cols.size() && ok; ++i) {
            if (!parse_number(cells[feature_cols[i]], row[i])) {
                result.rejected.push_back({line_no, "non-numeric value in column '" + names[i] + "'"});
                ok = false;
            }
        }
        if (!ok) {
            continue;
        }
        if (require_target) {
            double y = 0.0;
            if (!parse_number(cells[static_cast<std::size_t>(target_col)], y)) {
                result.rejected.push_back({line_no, "non-numeric target"});
                continue;
            }
            if (y < 0.0) {
                result.rejected.push_back({line_no, "negative target"});
                continue;
            }
            targets.push_back(y);
        }
        values.insert(values.end(), row.begin(), row.end());
    }
    if (data_rows > 0 && static_cast<double>(result.rejected.size()) > 0.01 * static_cast<double>(data_rows)) {
        std::ostringstream msg;
        msg << "csv: rejected " << result.rejected.size() << " of " << data_rows << " rows (first: line "
            << result.rejected.front().line << ", " << result.rejected.front().reason << ")";
        throw std::runtime_error(msg.str());
    }
    const std::size_t n = values.size() / feature_cols.size();
    result.data.feature_names = std::move(names);
    result.data.features = Tensor(n, feature_cols.size(), std::move(values));
    result.data.targets = std::move(targets);
    return result;
}

LoadResult load_csv(const std::string& path, const DatasetSchema& schema, bool require_target) {
    std::ifstream in(path);
    if (!in) {
        throw std::runtime_error("cannot open " + path);
    }
    return read_csv(in, schema, require_target);
}

void write_csv(const Dataset& data, std::ostream& out) {
    for (std::size_t c = 0; c < data.dim(); ++c) {
        out << (c ? "," : "") << data.feature_names[c];
    }
    if (data.has_targets()) {
        out << ",y";
    }
    out << '\n' << std::setprecision(17);
    for (std::size_t r = 0; r < data.size(); ++r) {
        for (std::size_t c = 0; c < data.dim(); ++c) {
            out << (c ? "," : "") << data.features(r, c);
        }
        if (data.has_targets()) {
            out << ',' << data.targets[r];
        }
        out << '\n';
    }
}

void save_csv(const Dataset& data, const std::string& path) {
    std::ofstream out(path);
    if (!out) {
        throw std::runtime_error("cannot write " + path);
    }
    write_csv(data, out);
}

Standardizer Standardizer::fit(const Tensor& features) {
    Standardizer s;
    const std::size_t n = features.rows();
    const std::size_t d = features.cols();
    s.mean.assign(d, 0.0);
    s.stddev.assign(d, 1.0);
    if (n == 0) {
        return s;
    }
    for (std::size_t c = 0; c < d; ++c) {
        double mean = 0.0;
        for (std::size_t r = 0; r < n; ++r) {
            mean += features(r, c);
        }
        mean /= static_cast<double>(n);
        double var = 0.0;
        for (std::size_t r = 0; r < n; ++r) {
            const double dev = features(r, c) - mean;
            var += dev * dev;
        }
        var /= static_cast<double>(n);
        s.mean[c] = mean;
        // constant columns pass through centered
        s.stddev[c] = var > 0.0 ? std::sqrt(var) : 1.0;
    }
    return s;
}

Tensor Standardizer::apply(const Tensor& features) const {
    if (features.cols() != mean.size()) {
        throw std::invalid_argument("standardizer: fitted on " + std::to_string(mean.size()) +
                                    " columns, got " + features.shape_string());
    }
    Tensor out = features;
    for (std::size_t r = 0; r < out.rows(); ++r) {
        for (std::size_t c = 0; c < out.cols(); ++c) {
            out(r, c) = (out(r, c) - mean[c]) / stddev[c];
        }
    }
    return out;
}

Dataset synth_longtail(std::size_t n, std::size_t d, std::uint64_t seed, const SynthParams& p) {
    if (n == 0 || d == 0) {
        throw std::invalid_argument("synth_longtail: need n >= 1 and d >= 1");
    }
    SplitMix64 rng(seed);
    const std::vector<double> w = unit_direction(d, rng);
    const std::vector<double> gate = unit_direction(d, rng);
    const double gate_threshold = p.zero_fraction > 0.0 ? normal_quantile(p.zero_fraction) : -INFINITY;

    Dataset out;
    for (std::size_t c = 0; c < d; ++c) {
        out.feature_names.push_back("x" + std::to_string(c));
    }
    out.features = Tensor(n, d);
    out.targets.resize(n);
    for (std::size_t r = 0; r < n; ++r) {
        double proj = 0.0;
        double gate_proj = 0.0;
        for (std::size_t c = 0; c < d; ++c) {
            const double x = rng.normal();
            out.features(r, c) = x;
            proj += w[c] * x;
            gate_proj += gate[c] * x;
        }
        const double eps = rng.normal();
        double y = std::min(p.scale * std::exp(p.slope * proj + p.noise * eps), p.y_cap);
        if (gate_proj < gate_threshold) {
            y = 0.0;
        }
        if (p.resolution > 0.0) {
            y = std::round(y / p.resolution) * p.resolution;
        }
        out.targets[r] = y;
    }
    return out;
}

std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_indices(std::size_t n, double ratio,
                                                                            std::uint64_t seed) {
    if (!(ratio > 0.0 && ratio < 1.0)) {
        throw std::invalid_argument("split: ratio must lie in (0, 1)");
    }
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    SplitMix64 rng(seed);
    rng.shuffle(order);
    const auto cut = static_cast<std::size_t>(std::llround(ratio * static_cast<double>(n)));
    std::vector<std::size_t> first(order.begin(), order.begin() + static_cast<long>(cut));
    std::vector<std::size_t> second(order.begin() + static_cast<long>(cut), order.end());
    return {std::move(first), std::move(second)};
}

std::pair<Dataset, Dataset> split(const Dataset& data, double ratio, std::uint64_t seed) {
    const auto [a, b] = split_indices(data.size(), ratio, seed);
    return {data.subset(a), data.subset(b)};
}

double skewness(std::span<const double> values) {
    const double n = static_cast<double>(values.size());
    if (values.size() < 2) {
        return 0.0;
    }
    double mean = 0.0;
    for (double v : values) {
        mean += v;
    }
    mean /= n;
    double m2 = 0.0;
    double m3 = 0.0;
    for (double v : values) {
        const double d = v - mean;
        m2 += d * d;
        m3 += d * d * d;
    }
    m2 /= n;
    m3 /= n;
    return m2 > 0.0 ? m3 / std::pow(m2, 1.5) : 0.0;
}

}  // namespace genreg
