#include "genreg/vocab.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "genreg/codec.h"
#include "genreg/fingerprint.h"

namespace genreg {

namespace {

constexpr int kFormatVersion = 1;
constexpr double kSlack = 1e-9;

double round_to(double v, double resolution) {
    if (resolution <= 0.0) {
        return v;
    }
    return std::round(v / resolution) * resolution;
}

}  // namespace

ValueVocabulary::ValueVocabulary(std::vector<double> descending_values, VocabMeta meta)
    : values_(std::move(descending_values)), meta_(std::move(meta)) {
    if (values_.empty()) {
        throw std::invalid_argument("vocabulary: no value tokens");
    }
    for (std::size_t i = 0; i < values_.size(); ++i) {
        if (!std::isfinite(values_[i]) || values_[i] <= 0.0) {
            throw std::invalid_argument("vocabulary: token values must be positive and finite");
        }
        if (i > 0 && !(values_[i] < values_[i - 1])) {
            throw std::invalid_argument("vocabulary: token values must be strictly decreasing (index " +
                                        std::to_string(i) + ")");
        }
    }
}

double ValueVocabulary::value_of(int id) const {
    if (id >= 0 && id < kFirstValueId) {
        return 0.0;
    }
    if (!is_value_id(id)) {
        throw std::out_of_range("vocabulary: unknown token id " + std::to_string(id));
    }
    return values_[static_cast<std::size_t>(id - kFirstValueId)];
}

std::vector<double> ValueVocabulary::id_values() const {
    std::vector<double> out(kFirstValueId, 0.0);
    out.insert(out.end(), values_.begin(), values_.end());
    return out;
}

double percentile(std::vector<double> values, double q) {
    if (values.empty()) {
        throw std::invalid_argument("percentile: empty input");
    }
    std::sort(values.begin(), values.end());
    const double pos = std::clamp(q, 0.0, 100.0) / 100.0 * static_cast<double>(values.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, values.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return values[lo] + frac * (values[hi] - values[lo]);
}

ValueVocabulary build_dynamic(std::span<const double> targets, const DynamicVocabOptions& options) {
    if (targets.empty()) {
        throw std::invalid_argument("build_dynamic: no targets");
    }
    if (!(options.q_end > 0.0 && options.q_end <= options.q_start && options.q_start <= 100.0)) {
        throw std::invalid_argument("build_dynamic: need 0 < q_end <= q_start <= 100");
    }
    if (!(options.alpha > 0.0 && options.alpha <= 1.0) || !(options.eps > 0.0) || options.resolution < 0.0 ||
        options.max_iterations < 1) {
        throw std::invalid_argument("build_dynamic: need 0 < alpha <= 1, eps > 0, resolution >= 0");
    }
    double max_target = 0.0;
    for (double y : targets) {
        if (!std::isfinite(y) || y < 0.0) {
            throw std::invalid_argument("build_dynamic: targets must be finite and nonnegative");
        }
        max_target = std::max(max_target, y);
    }
    if (max_target == 0.0) {
        throw std::invalid_argument("build_dynamic: degenerate targets (all zero)");
    }

    std::vector<double> residual(targets.begin(), targets.end());
    std::vector<double> tokens;
    std::vector<double> outstanding;
    double q = options.q_start;
    double err = std::numeric_limits<double>::infinity();
    int iteration = 0;
    while (err > options.eps) {
        if (iteration == options.max_iterations) {
            std::ostringstream msg;
            msg << "build_dynamic: restoration error " << err << " still above eps " << options.eps << " after "
                << iteration << " iterations";
            throw std::runtime_error(msg.str());
        }
        ++iteration;
        // Fully restored samples carry no information about the remaining mass.
        outstanding.clear();
        for (double r : residual) {
            if (r > 0.0) {
                outstanding.push_back(r);
            }
        }
        if (outstanding.empty()) {
            break;
        }
        const double o = round_to(percentile(outstanding, q), options.resolution);
        if (o <= 0.0) {
            break;
        }
        const bool duplicate =
            std::any_of(tokens.begin(), tokens.end(), [&](double t) { return std::abs(t - o) <= kSlack * o; });
        if (!duplicate) {
            tokens.push_back(o);
        }
        err = 0.0;
        for (std::size_t j = 0; j < residual.size(); ++j) {
            double& r = residual[j];
            if (r >= o - kSlack * o) {
                r -= o;
                if (std::abs(r) < kSlack) {
                    r = 0.0;
                }
            }
            if (targets[j] > 0.0) {
                err = std::max(err, r / targets[j]);
            }
        }
        q = std::max(q * options.alpha, options.q_end);
    }

    std::sort(tokens.begin(), tokens.end(), std::greater<double>());
    VocabMeta meta;
    meta.strategy = "dynamic";
    meta.q_start = options.q_start;
    meta.q_end = options.q_end;
    meta.alpha = options.alpha;
    meta.eps = options.eps;
    meta.resolution = options.resolution;
    Fingerprint fp;
    fp.update(targets);
    meta.source_fingerprint = fp.hex();
    meta.iterations = iteration;
    meta.final_error = err;
    return ValueVocabulary(std::move(tokens), std::move(meta));
}

ValueVocabulary build_binary(double y_max, double unit) {
    if (!(unit > 0.0) || !(y_max >= unit) || !std::isfinite(y_max)) {
        throw std::invalid_argument("build_binary: need y_max >= unit > 0");
    }
    std::vector<double> tokens;
    double v = unit;
    tokens.push_back(v);
    while (v <= y_max) {
        v *= 2.0;
        tokens.push_back(v);
    }
    std::reverse(tokens.begin(), tokens.end());
    VocabMeta meta;
    meta.strategy = "binary";
    meta.unit = unit;
    return ValueVocabulary(std::move(tokens), std::move(meta));
}

ValueVocabulary build_manual(std::vector<double> values) {
    if (values.empty()) {
        throw std::invalid_argument("build_manual: empty value list");
    }
    std::sort(values.begin(), values.end(), std::greater<double>());
    if (std::adjacent_find(values.begin(), values.end()) != values.end()) {
        throw std::invalid_argument("build_manual: duplicate token values");
    }
    VocabMeta meta;
    meta.strategy = "manual";
    return ValueVocabulary(std::move(values), std::move(meta));
}

std::string vocab_to_json(const ValueVocabulary& vocab) {
    const VocabMeta& m = vocab.meta();
    nlohmann::ordered_json j;
    j["format_version"] = kFormatVersion;
    j["strategy"] = m.strategy;
    j["value_tokens"] = vocab.values();
    j["special"] = {{"pad", kPadId}, {"sos", kSosId}, {"eos", kEosId}};
    j["meta"] = {{"q_start", m.q_start},       {"q_end", m.q_end},
                 {"alpha", m.alpha},           {"eps", m.eps},
                 {"resolution", m.resolution}, {"unit", m.unit},
                 {"source_fingerprint", m.source_fingerprint}, {"iterations", m.iterations},
                 {"final_error", m.final_error}};
    return j.dump(2) + "\n";
}

ValueVocabulary vocab_from_json(std::string_view text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw std::runtime_error(std::string("vocabulary: malformed JSON: ") + e.what());
    }
    if (!j.contains("format_version") || j["format_version"] != kFormatVersion) {
        throw std::runtime_error("vocabulary: unsupported format_version");
    }
    const auto& special = j.at("special");
    if (special.at("pad") != kPadId || special.at("sos") != kSosId || special.at("eos") != kEosId) {
        throw std::runtime_error("vocabulary: unexpected special token ids");
    }
    VocabMeta meta;
    meta.strategy = j.value("strategy", "manual");
    if (j.contains("meta")) {
        const auto& m = j["meta"];
        meta.q_start = m.value("q_start", 0.0);
        meta.q_end = m.value("q_end", 0.0);
        meta.alpha = m.value("alpha", 0.0);
        meta.eps = m.value("eps", 0.0);
        meta.resolution = m.value("resolution", 0.0);
        meta.unit = m.value("unit", 0.0);
        meta.source_fingerprint = m.value("source_fingerprint", "");
        meta.iterations = m.value("iterations", 0);
        meta.final_error = m.value("final_error", 0.0);
    }
    auto values = j.at("value_tokens").get<std::vector<double>>();
    try {
        return ValueVocabulary(std::move(values), std::move(meta));
    } catch (const std::invalid_argument& e) {
        throw std::runtime_error(std::string("vocabulary: rejected token list: ") + e.what());
    }
}

void save_vocab(const ValueVocabulary& vocab, const std::string& path) {
    std::ofstream out(path);
    if (!out) {
        throw std::runtime_error("cannot write " + path);
    }
    out << vocab_to_json(vocab);
}

ValueVocabulary load_vocab(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw std::runtime_error("cannot open vocabulary " + path);
    }
    std::stringstream buf;
    buf << in.rdbuf();
    return vocab_from_json(buf.str());
}

std::vector<std::pair<int, std::size_t>> TokenFrequency::top_k(std::size_t k) const {
    std::vector<std::pair<int, std::size_t>> out;
    for (std::size_t i = 0; i < counts.size(); ++i) {
        out.emplace_back(kFirstValueId + static_cast<int>(i), counts[i]);
    }
    std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
    if (out.size() > k) {
        out.resize(k);
    }
    return out;
}

double TokenFrequency::max_median_ratio() const {
    if (counts.empty()) {
        return 0.0;
    }
    std::vector<double> c(counts.begin(), counts.end());
    const double mx = *std::max_element(c.begin(), c.end());
    const double med = percentile(c, 50.0);
    if (med == 0.0) {
        return mx == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
    }
    return mx / med;
}

TokenFrequency token_frequency(std::span<const double> targets, const ValueVocabulary& vocab, std::size_t max_len) {
    TokenFrequency freq;
    freq.counts.assign(vocab.value_count(), 0);
    EncodeOptions options;
    options.max_len = max_len;
    for (double y : targets) {
        for (int id : encode(y, vocab, options).ids) {
            ++freq.counts[static_cast<std::size_t>(id - kFirstValueId)];
        }
    }
    return freq;
}

}  // namespace genreg
