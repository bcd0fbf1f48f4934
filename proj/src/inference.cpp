#include "genreg/inference.h"

#include <algorithm>
#include <stdexcept>

#include "genreg/baselines.h"
#include "genreg/codec.h"

namespace genreg {

namespace {

void decode_chunk(const Tensor& features, std::size_t begin, std::size_t end, const ParamStore& params,
                  const ModelConfig& config, const ValueVocabulary& vocab, const PredictOptions& options,
                  std::size_t max_len, std::vector<Prediction>& out) {
    const std::size_t d = config.hidden_dim;
    const Tensor& table = params.at("emb.token");

    Tensor x(end - begin, features.cols());
    for (std::size_t i = begin; i < end; ++i) {
        const auto src = features.row_span(i);
        std::copy(src.begin(), src.end(), x.row_span(i - begin).begin());
    }
    const Tensor h_all = encode_features(x, params, config);

    // active[a] is the sample index (relative to begin) of the a-th live sequence
    std::vector<std::size_t> active(end - begin);
    for (std::size_t a = 0; a < active.size(); ++a) {
        active[a] = a;
    }
    // inputs[a] holds the fed-back embedding rows so far, SOS first
    std::vector<std::vector<double>> inputs(active.size());
    for (auto& rows : inputs) {
        const auto sos = table.row_span(kSosId);
        rows.assign(sos.begin(), sos.end());
    }

    const int half = static_cast<int>(config.mixup_window / 2);
    for (std::size_t step = 0; !active.empty(); ++step) {
        const std::size_t len = step + 1;
        const std::size_t n = active.size();
        Tensor in(n * len, d);
        Tensor h(n, d);
        for (std::size_t a = 0; a < n; ++a) {
            std::copy(inputs[a].begin(), inputs[a].end(), in.row_span(a * len).begin());
            const auto src = h_all.row_span(active[a]);
            std::copy(src.begin(), src.end(), h.row_span(a).begin());
        }
        Graph g(false);
        BoundParams p(g, params);
        Var logits = decoder_logits(p, g.constant(std::move(in)), g.constant(std::move(h)), n, len, config);

        std::vector<int> last_rows(n);
        std::vector<int> chosen(n);
        for (std::size_t a = 0; a < n; ++a) {
            last_rows[a] = static_cast<int>(a * len + step);
            chosen[a] = greedy_token(logits.value().row_span(a * len + step), vocab);
        }
        Var last = gather_rows(logits, last_rows);
        Var next = options.apply_mixup
                       ? window_mixup(last, p["emb.token"], chosen, half, kFirstValueId, vocab.last_value_id())
                       : gather_rows(p["emb.token"], chosen);

        std::vector<std::size_t> still_active;
        std::vector<std::vector<double>> still_inputs;
        for (std::size_t a = 0; a < n; ++a) {
            Prediction& pred = out[begin + active[a]];
            if (chosen[a] == kEosId) {
                pred.terminated_by = Termination::eos;
                continue;
            }
            pred.token_ids.push_back(chosen[a]);
            if (pred.token_ids.size() >= max_len) {
                pred.terminated_by = Termination::max_len;
                continue;
            }
            const auto row = next.value().row_span(a);
            inputs[a].insert(inputs[a].end(), row.begin(), row.end());
            still_active.push_back(active[a]);
            still_inputs.push_back(std::move(inputs[a]));
        }
        active = std::move(still_active);
        inputs = std::move(still_inputs);
    }
}

}  // namespace

std::string to_string(Termination t) { return t == Termination::eos ? "EOS" : "T_max"; }

int greedy_token(std::span<const double> logits, const ValueVocabulary& vocab) {
    if (logits.size() != vocab.size()) {
        throw std::invalid_argument("greedy_token: logit row of " + std::to_string(logits.size()) +
                                    " for vocabulary of " + std::to_string(vocab.size()));
    }
    int best = kEosId;
    for (int id = kFirstValueId; id <= vocab.last_value_id(); ++id) {
        if (logits[static_cast<std::size_t>(id)] > logits[static_cast<std::size_t>(best)]) {
            best = id;
        }
    }
    return best;
}

std::vector<Prediction> predict_batch(const Tensor& features, const ParamStore& params, const ModelConfig& config,
                                      const ValueVocabulary& vocab, const PredictOptions& options) {
    if (config.head != HeadKind::gr) {
        throw std::invalid_argument("predict_batch: checkpoint head is " + to_string(config.head) +
                                    ", not the generative head");
    }
    if (vocab.size() != config.vocab_size) {
        throw std::invalid_argument("predict_batch: vocabulary size " + std::to_string(vocab.size()) +
                                    " does not match model vocab_size " + std::to_string(config.vocab_size));
    }
    if (features.cols() != config.feature_dim) {
        throw std::invalid_argument("predict_batch: expected " + std::to_string(config.feature_dim) +
                                    " features, got " + features.shape_string());
    }
    const std::size_t max_len = options.max_len == 0 ? config.max_len : std::min(options.max_len, config.max_len);
    const std::size_t chunk = std::max<std::size_t>(1, options.chunk_size);
    std::vector<Prediction> out(features.rows());
    for (std::size_t begin = 0; begin < features.rows(); begin += chunk) {
        decode_chunk(features, begin, std::min(features.rows(), begin + chunk), params, config, vocab, options,
                     max_len, out);
    }
    for (Prediction& pred : out) {
        pred.y_hat = decode(pred.token_ids, vocab);
        for (std::size_t t = 1; t < pred.token_ids.size(); ++t) {
            if (vocab.value_of(pred.token_ids[t]) > vocab.value_of(pred.token_ids[t - 1])) {
                pred.monotone = false;
            }
        }
    }
    return out;
}

Prediction predict(std::span<const double> x, const ParamStore& params, const ModelConfig& config,
                   const ValueVocabulary& vocab, const PredictOptions& options) {
    Tensor row(1, x.size(), std::vector<double>(x.begin(), x.end()));
    return predict_batch(row, params, config, vocab, options).front();
}

std::vector<double> predict_values(const Checkpoint& ckpt, const Tensor& raw_features,
                                   std::vector<Prediction>* details, const PredictOptions& options) {
    const Tensor x = ckpt.standardizer.empty() ? raw_features : ckpt.standardizer.apply(raw_features);
    switch (ckpt.config.head) {
        case HeadKind::gr: {
            const ValueVocabulary vocab(ckpt.vocab_values);
            auto preds = predict_batch(x, ckpt.params, ckpt.config, vocab, options);
            std::vector<double> values;
            values.reserve(preds.size());
            for (const auto& p : preds) {
                values.push_back(p.y_hat);
            }
            if (details) {
                *details = std::move(preds);
            }
            return values;
        }
        case HeadKind::vr:
            return vr_head(encode_features(x, ckpt.params, ckpt.config), ckpt.params);
        case HeadKind::ordinal:
            return ordinal_head(encode_features(x, ckpt.params, ckpt.config), ckpt.params, ckpt.buckets);
    }
    throw std::logic_error("predict_values: unknown head");
}

CheckpointEvaluation evaluate_checkpoint(const Checkpoint& ckpt, const Dataset& data, const PredictOptions& options) {
    if (!data.has_targets()) {
        throw std::invalid_argument("evaluate: dataset has no target column");
    }
    if (data.dim() != ckpt.config.feature_dim) {
        throw std::invalid_argument("evaluate: checkpoint expects " + std::to_string(ckpt.config.feature_dim) +
                                    " features, data has " + std::to_string(data.dim()));
    }
    CheckpointEvaluation out;
    out.predictions = predict_values(ckpt, data.features, &out.details, options);
    out.report = evaluate_predictions(out.predictions, data.targets);
    if (!out.details.empty()) {
        std::size_t violations = 0;
        std::size_t eos = 0;
        double total_len = 0.0;
        for (const auto& p : out.details) {
            violations += p.monotone ? 0 : 1;
            eos += p.terminated_by == Termination::eos ? 1 : 0;
            total_len += static_cast<double>(p.token_ids.size());
            out.report.max_seq_len = std::max(out.report.max_seq_len, p.token_ids.size());
        }
        const auto n = static_cast<double>(out.details.size());
        out.report.monotonicity_violation_rate = static_cast<double>(violations) / n;
        out.report.eos_terminated_rate = static_cast<double>(eos) / n;
        out.report.mean_seq_len = total_len / n;
    }
    return out;
}

}  // namespace genreg
