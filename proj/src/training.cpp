#include "genreg/training.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "genreg/inference.h"
#include "genreg/metrics.h"
#include "genreg/optim.h"

namespace genreg {

namespace {

double paper_sigmoid(double p0, double omega, double tau) { return p0 * omega / (omega + std::exp(tau / omega)); }

std::string fmt(double v) {
    std::ostringstream out;
    out.precision(17);
    out << v;
    return out.str();
}

double parse_double(const std::string& key, const std::string& value) {
    try {
        std::size_t used = 0;
        const double v = std::stod(value, &used);
        if (used != value.size()) {
            throw std::invalid_argument("trailing");
        }
        return v;
    } catch (const std::exception&) {
        throw std::invalid_argument("config: bad number for " + key + ": '" + value + "'");
    }
}

std::size_t parse_count(const std::string& key, const std::string& value) {
    const double v = parse_double(key, value);
    if (v < 0 || v != std::floor(v)) {
        throw std::invalid_argument("config: " + key + " must be a nonnegative integer, got '" + value + "'");
    }
    return static_cast<std::size_t>(v);
}

bool parse_bool(const std::string& key, const std::string& value) {
    if (value == "1" || value == "true" || value == "on") {
        return true;
    }
    if (value == "0" || value == "false" || value == "off") {
        return false;
    }
    throw std::invalid_argument("config: bad boolean for " + key + ": '" + value + "'");
}

std::string trim(const std::string& s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string::npos) {
        return "";
    }
    return s.substr(first, s.find_last_not_of(" \t\r") - first + 1);
}

// ids whose summed token values form each sample's soft prediction
Var soft_sequence_value(Var logits, const SeqBatch& batch, const ValueVocabulary& vocab) {
    Graph& g = *logits.graph();
    const std::vector<double> ids = vocab.id_values();
    Var values = g.constant(Tensor(ids.size(), 1, ids));
    Var expected = matmul(softmax_rows(logits), values);
    Tensor select(batch.batch, batch.batch * batch.len);
    for (std::size_t b = 0; b < batch.batch; ++b) {
        for (std::size_t t = 0; t < batch.len; ++t) {
            select(b, b * batch.len + t) = batch.mask[b * batch.len + t];
        }
    }
    return matmul(g.constant(std::move(select)), expected);
}

double hard_huber(const Tensor& logits, const SeqBatch& batch, const ValueVocabulary& vocab, double delta) {
    double total = 0.0;
    for (std::size_t b = 0; b < batch.batch; ++b) {
        double y_hat = 0.0;
        for (std::size_t t = 0; t < batch.len; ++t) {
            const std::size_t r = b * batch.len + t;
            if (batch.mask[r] != 0.0) {
                y_hat += vocab.value_of(greedy_token(logits.row_span(r), vocab));
            }
        }
        total += huber(batch.y[b], y_hat, delta);
    }
    return total / static_cast<double>(batch.batch);
}

Var encoder_memory(const BoundParams& p, const SeqBatch& batch, const ModelConfig& model) {
    return encode_features(p, p.vars().front().graph()->constant(batch.features), model);
}

StepResult finish_step(Graph& g, const BoundParams& p, Var loss, const LossBreakdown& parts) {
    g.backward(loss);
    StepResult result;
    result.loss = parts;
    result.grads = p.grads();
    return result;
}

}  // namespace

// ---- schedules -------------------------------------------------------------

std::string to_string(ScheduleKind kind) {
    switch (kind) {
        case ScheduleKind::paper_sigmoid:
            return "paper_sigmoid";
        case ScheduleKind::linear:
            return "linear";
        case ScheduleKind::exponential:
            return "exponential";
        case ScheduleKind::fixed:
            return "fixed";
    }
    return "fixed";
}

ScheduleKind parse_schedule(std::string_view text) {
    if (text == "paper_sigmoid") {
        return ScheduleKind::paper_sigmoid;
    }
    if (text == "linear") {
        return ScheduleKind::linear;
    }
    if (text == "exponential") {
        return ScheduleKind::exponential;
    }
    if (text == "fixed") {
        return ScheduleKind::fixed;
    }
    throw std::invalid_argument("unknown schedule '" + std::string(text) +
                                "' (expected paper_sigmoid|linear|exponential|fixed)");
}

double sampling_rate(const ScheduleConfig& s, double tau) {
    if (tau < 0.0) {
        throw std::invalid_argument("sampling_rate: tau must be >= 0");
    }
    double p = 0.0;
    switch (s.kind) {
        case ScheduleKind::paper_sigmoid:
            if (!(s.omega > 0.0)) {
                throw std::invalid_argument("sampling_rate: omega must be positive (resolve the schedule first)");
            }
            p = paper_sigmoid(s.p0, s.omega, tau);
            break;
        case ScheduleKind::linear:
            p = 1.0 - s.linear_slope * tau;
            break;
        case ScheduleKind::exponential:
            p = std::exp(-s.exp_rate * tau);
            break;
        case ScheduleKind::fixed:
            p = s.fixed_p;
            break;
    }
    return std::clamp(p, 0.0, 1.0);
}

double solve_omega(double p0, double target_p, double steps) {
    if (!(target_p > 0.0) || !(target_p < p0) || !(steps > 0.0)) {
        throw std::invalid_argument("solve_omega: need 0 < target_p < p0 and steps > 0");
    }
    // p(steps) grows with omega; bisect in log space
    double lo = std::log(1e-6);
    double hi = std::log(1e12);
    for (int i = 0; i < 200; ++i) {
        const double mid = 0.5 * (lo + hi);
        (paper_sigmoid(p0, std::exp(mid), steps) < target_p ? lo : hi) = mid;
    }
    return std::exp(0.5 * (lo + hi));
}

ScheduleConfig resolve_schedule(ScheduleConfig s, std::size_t steps) {
    const double last = static_cast<double>(std::max<std::size_t>(steps, 2) - 1);
    if (s.kind == ScheduleKind::paper_sigmoid && s.omega == 0.0) {
        s.omega = solve_omega(s.p0, s.final_p, last);
    }
    if (s.kind == ScheduleKind::linear && s.linear_slope == 0.0) {
        s.linear_slope = (1.0 - s.final_p) / last;
    }
    if (s.kind == ScheduleKind::exponential && s.exp_rate == 0.0) {
        s.exp_rate = -std::log(s.final_p) / last;
    }
    return s;
}

// ---- configuration ---------------------------------------------------------

void TrainConfig::validate() const {
    if (lambda < 0.0) {
        throw std::invalid_argument("train config: lambda must be >= 0");
    }
    if (!(delta > 0.0)) {
        throw std::invalid_argument("train config: delta must be > 0");
    }
    if (!(lr > 0.0)) {
        throw std::invalid_argument("train config: lr must be > 0");
    }
    if (batch_size == 0 || steps == 0 || eval_every == 0) {
        throw std::invalid_argument("train config: batch_size, steps and eval_every must be >= 1");
    }
    if (!(val_ratio > 0.0 && val_ratio < 1.0)) {
        throw std::invalid_argument("train config: val_ratio must lie in (0, 1)");
    }
    if (schedule.p0 < 0.0 || schedule.fixed_p < 0.0 || schedule.fixed_p > 1.0) {
        throw std::invalid_argument("train config: schedule probabilities out of range");
    }
}

std::map<std::string, std::string> TrainConfig::to_map() const {
    return {
        {"lambda", fmt(lambda)},
        {"delta", fmt(delta)},
        {"lr", fmt(lr)},
        {"batch_size", std::to_string(batch_size)},
        {"steps", std::to_string(steps)},
        {"eval_every", std::to_string(eval_every)},
        {"train_seed", std::to_string(seed)},
        {"clem", clem ? "1" : "0"},
        {"val_ratio", fmt(val_ratio)},
        {"schedule", to_string(schedule.kind)},
        {"p0", fmt(schedule.p0)},
        {"omega", fmt(schedule.omega)},
        {"linear_slope", fmt(schedule.linear_slope)},
        {"exp_rate", fmt(schedule.exp_rate)},
        {"fixed_p", fmt(schedule.fixed_p)},
        {"final_p", fmt(schedule.final_p)},
        {"require_roundtrip", require_roundtrip ? "1" : "0"},
    };
}

bool apply_config_key(RunConfig& c, const std::string& key, const std::string& value) {
    TrainConfig& t = c.train;
    ModelConfig& m = c.model;
    if (key == "lambda") {
        t.lambda = parse_double(key, value);
    } else if (key == "delta") {
        t.delta = parse_double(key, value);
    } else if (key == "lr") {
        t.lr = parse_double(key, value);
    } else if (key == "batch_size") {
        t.batch_size = parse_count(key, value);
    } else if (key == "steps") {
        t.steps = parse_count(key, value);
    } else if (key == "eval_every") {
        t.eval_every = parse_count(key, value);
    } else if (key == "seed" || key == "train_seed") {
        t.seed = parse_count(key, value);
        m.seed = t.seed;
    } else if (key == "clem") {
        t.clem = parse_bool(key, value);
    } else if (key == "val_ratio") {
        t.val_ratio = parse_double(key, value);
    } else if (key == "schedule") {
        t.schedule.kind = parse_schedule(value);
    } else if (key == "p0") {
        t.schedule.p0 = parse_double(key, value);
    } else if (key == "omega") {
        t.schedule.omega = parse_double(key, value);
    } else if (key == "linear_slope") {
        t.schedule.linear_slope = parse_double(key, value);
    } else if (key == "exp_rate") {
        t.schedule.exp_rate = parse_double(key, value);
    } else if (key == "fixed_p" || key == "p") {
        t.schedule.fixed_p = parse_double(key, value);
    } else if (key == "final_p") {
        t.schedule.final_p = parse_double(key, value);
    } else if (key == "require_roundtrip") {
        t.require_roundtrip = parse_bool(key, value);
    } else if (key == "head") {
        m.head = parse_head(value);
    } else if (key == "hidden_dim") {
        m.hidden_dim = parse_count(key, value);
    } else if (key == "encoder_layers") {
        m.encoder_layers = parse_count(key, value);
    } else if (key == "decoder_blocks") {
        m.decoder_blocks = parse_count(key, value);
    } else if (key == "attention_heads") {
        m.attention_heads = parse_count(key, value);
    } else if (key == "ffn_mult") {
        m.ffn_mult = parse_count(key, value);
    } else if (key == "max_len") {
        m.max_len = parse_count(key, value);
    } else if (key == "mixup_window" || key == "nw") {
        m.mixup_window = parse_count(key, value);
    } else if (key == "ordinal_buckets") {
        m.ordinal_buckets = parse_count(key, value);
    } else {
        return false;
    }
    return true;
}

RunConfig parse_run_config(std::istream& in, RunConfig config) {
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (const auto hash = line.find('#'); hash != std::string::npos) {
            line.erase(hash);
        }
        line = trim(line);
        if (line.empty()) {
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw std::invalid_argument("config line " + std::to_string(line_no) + ": expected key=value");
        }
        const std::string key = trim(line.substr(0, eq));
        if (!apply_config_key(config, key, trim(line.substr(eq + 1)))) {
            throw std::invalid_argument("config line " + std::to_string(line_no) + ": unknown key '" + key + "'");
        }
    }
    return config;
}

RunConfig load_run_config(const std::string& path, RunConfig defaults) {
    std::ifstream in(path);
    if (!in) {
        throw std::runtime_error("cannot open config " + path);
    }
    return parse_run_config(in, std::move(defaults));
}

// ---- loss pieces -----------------------------------------------------------

double huber(double y, double y_hat, double delta) {
    if (!(delta > 0.0)) {
        throw std::invalid_argument("huber: delta must be > 0");
    }
    const double a = std::abs(y - y_hat);
    return a <= delta ? 0.5 * a * a : delta * (a - 0.5 * delta);
}

Var sequence_ce(Var logits, std::span<const int> targets, std::span<const double> mask) {
    double count = 0.0;
    for (double m : mask) {
        count += m;
    }
    if (!(count > 0.0)) {
        throw std::invalid_argument("sequence_ce: no supervised positions");
    }
    return scale(masked_cross_entropy(logits, targets, mask), 1.0 / count);
}

Var composite_loss(Var ce, Var huber_value, double lambda) {
    if (lambda < 0.0) {
        throw std::invalid_argument("composite_loss: lambda must be >= 0");
    }
    return add(ce, scale(huber_value, lambda));
}

Var embedding_mixup(Var logits, Var table, std::span<const int> predicted_ids, std::size_t n_w,
                    std::size_t vocab_size) {
    return window_mixup(logits, table, predicted_ids, static_cast<int>(n_w / 2), kFirstValueId,
                        static_cast<int>(vocab_size) - 1);
}

Var soft_huber(Var logits, const SeqBatch& batch, const ValueVocabulary& vocab, double delta) {
    const std::vector<double> weights(batch.batch, 1.0 / static_cast<double>(batch.batch));
    return huber_sum(soft_sequence_value(logits, batch, vocab), batch.y, weights, delta);
}

// ---- batches ---------------------------------------------------------------

SeqBatch make_batch(const Tensor& features, std::span<const double> y, std::span<const TokenSeq> encoded,
                    std::span<const std::size_t> rows) {
    if (rows.empty()) {
        throw std::invalid_argument("make_batch: empty batch");
    }
    SeqBatch b;
    b.batch = rows.size();
    for (std::size_t r : rows) {
        b.len = std::max(b.len, encoded[r].ids.size() + 1);
    }
    b.features = Tensor(b.batch, features.cols());
    b.inputs.assign(b.batch * b.len, kPadId);
    b.targets.assign(b.batch * b.len, kPadId);
    b.mask.assign(b.batch * b.len, 0.0);
    for (std::size_t i = 0; i < b.batch; ++i) {
        const std::size_t r = rows[i];
        const auto src = features.row_span(r);
        std::copy(src.begin(), src.end(), b.features.row_span(i).begin());
        b.y.push_back(y[r]);
        const auto& ids = encoded[r].ids;
        const std::size_t base = i * b.len;
        b.inputs[base] = kSosId;
        for (std::size_t t = 0; t < ids.size(); ++t) {
            b.inputs[base + t + 1] = ids[t];
            b.targets[base + t] = ids[t];
            b.mask[base + t] = 1.0;
        }
        b.targets[base + ids.size()] = kEosId;
        b.mask[base + ids.size()] = 1.0;
    }
    return b;
}

SeqBatch make_batch(const Tensor& features, std::span<const double> y, std::span<const std::size_t> rows,
                    const ValueVocabulary& vocab, std::size_t max_len) {
    std::vector<TokenSeq> encoded(y.size());
    for (std::size_t r : rows) {
        encoded[r] = encode(y[r], vocab, {max_len, 0.001});
    }
    return make_batch(features, y, encoded, rows);
}

// ---- losses ----------------------------------------------------------------

Var teacher_forcing_loss(const BoundParams& p, const SeqBatch& batch, const ModelConfig& model,
                         const ValueVocabulary& vocab, const TrainConfig& config, LossBreakdown* parts) {
    Var h = encoder_memory(p, batch, model);
    Var logits = decoder_forward(p, batch.inputs, h, batch.batch, batch.len, model);
    Var ce = sequence_ce(logits, batch.targets, batch.mask);
    Var hub = soft_huber(logits, batch, vocab, config.delta);
    Var total = composite_loss(ce, hub, config.lambda);
    if (parts) {
        parts->total = total.value().item();
        parts->ce1 = ce.value().item();
        parts->ce2 = parts->ce1;
        parts->huber = hub.value().item();
        parts->hard_huber = hard_huber(logits.value(), batch, vocab, config.delta);
        parts->replaced = 0;
    }
    return total;
}

std::vector<bool> draw_truth_mask(const SeqBatch& batch, double p, SplitMix64& rng) {
    std::vector<bool> keep(batch.batch * batch.len, true);
    for (std::size_t b = 0; b < batch.batch; ++b) {
        for (std::size_t t = 1; t < batch.len; ++t) {
            const std::size_t r = b * batch.len + t;
            if (batch.inputs[r] != kPadId) {
                keep[r] = rng.bernoulli(p);
            }
        }
    }
    return keep;
}

Var clem_loss(const BoundParams& p, const SeqBatch& batch, const ModelConfig& model, const ValueVocabulary& vocab,
              const TrainConfig& config, const std::vector<bool>& keep_truth, LossBreakdown* parts) {
    if (keep_truth.size() != batch.batch * batch.len) {
        throw std::invalid_argument("clem_loss: truth mask does not match batch layout");
    }
    Var h = encoder_memory(p, batch, model);
    Var logits1 = decoder_forward(p, batch.inputs, h, batch.batch, batch.len, model);

    std::vector<bool> keep = keep_truth;
    std::size_t replaced = 0;
    for (std::size_t r = 0; r < keep.size(); ++r) {
        if (r % batch.len == 0 || batch.inputs[r] == kPadId) {
            keep[r] = true;
        }
        replaced += keep[r] ? 0 : 1;
    }

    Var logits2 = logits1;
    if (replaced > 0) {
        std::vector<int> predicted(keep.size());
        for (std::size_t r = 0; r < keep.size(); ++r) {
            predicted[r] = greedy_token(logits1.value().row_span(r), vocab);
        }
        Var z = embedding_mixup(logits1, p["emb.token"], predicted, model.mixup_window, model.vocab_size);
        // the prediction made at position t-1 is the input at position t
        std::vector<int> shifted(keep.size());
        for (std::size_t r = 0; r < keep.size(); ++r) {
            shifted[r] = static_cast<int>(r % batch.len == 0 ? r : r - 1);
        }
        Var inputs2 = select_rows(embed_tokens(p, batch.inputs, model), gather_rows(z, shifted), keep);
        logits2 = decoder_logits(p, inputs2, h, batch.batch, batch.len, model);
    }

    Var ce1 = sequence_ce(logits1, batch.targets, batch.mask);
    Var ce2 = replaced > 0 ? sequence_ce(logits2, batch.targets, batch.mask) : ce1;
    Var hub = soft_huber(logits2, batch, vocab, config.delta);
    Var total = composite_loss(scale(add(ce1, ce2), 0.5), hub, config.lambda);
    if (parts) {
        parts->total = total.value().item();
        parts->ce1 = ce1.value().item();
        parts->ce2 = ce2.value().item();
        parts->huber = hub.value().item();
        parts->hard_huber = hard_huber(logits2.value(), batch, vocab, config.delta);
        parts->replaced = replaced;
    }
    return total;
}

Var vr_loss(const BoundParams& p, const Tensor& features, std::span<const double> y, const ModelConfig& model,
            double delta) {
    Graph& g = *p.vars().front().graph();
    Var h = encode_features(p, g.constant(features), model);
    const std::vector<double> weights(y.size(), 1.0 / static_cast<double>(y.size()));
    return huber_sum(vr_output(p, h), y, weights, delta);
}

Var ordinal_loss(const BoundParams& p, const Tensor& features, std::span<const double> y, const ModelConfig& model,
                 const BucketScheme& scheme) {
    Graph& g = *p.vars().front().graph();
    Var h = encode_features(p, g.constant(features), model);
    return bce_with_logits(ordinal_logits(p, h), ordinal_labels(y, scheme), 1.0 / static_cast<double>(y.size()));
}

StepResult train_step_teacher_forcing(const SeqBatch& batch, const ParamStore& params, const ModelConfig& model,
                                      const ValueVocabulary& vocab, const TrainConfig& config) {
    Graph g;
    BoundParams p(g, params);
    LossBreakdown parts;
    Var loss = teacher_forcing_loss(p, batch, model, vocab, config, &parts);
    return finish_step(g, p, loss, parts);
}

StepResult train_step_clem(const SeqBatch& batch, const ParamStore& params, const ModelConfig& model,
                           const ValueVocabulary& vocab, const TrainConfig& config, double p_truth,
                           SplitMix64& rng) {
    const std::vector<bool> keep = draw_truth_mask(batch, p_truth, rng);
    Graph g;
    BoundParams p(g, params);
    LossBreakdown parts;
    Var loss = clem_loss(p, batch, model, vocab, config, keep, &parts);
    StepResult result = finish_step(g, p, loss, parts);
    result.p = p_truth;
    return result;
}

// ---- training loop ---------------------------------------------------------

std::string to_json_line(const LogRecord& r) {
    nlohmann::ordered_json j;
    j["step"] = r.step;
    j["ce1"] = r.ce1;
    j["ce2"] = r.ce2;
    j["huber"] = r.huber;
    j["p"] = r.p;
    j["val_mae"] = r.val_mae ? nlohmann::ordered_json(*r.val_mae) : nlohmann::ordered_json(nullptr);
    j["val_xauc"] = r.val_xauc ? nlohmann::ordered_json(*r.val_xauc) : nlohmann::ordered_json(nullptr);
    return j.dump();
}

TrainResult train(const Dataset& data, const ValueVocabulary* vocab, ModelConfig model, const TrainConfig& config,
                  std::ostream* log_out) {
    config.validate();
    if (!data.has_targets() || data.size() < 4) {
        throw std::invalid_argument("train: need at least 4 labelled rows");
    }
    const bool generative = model.head == HeadKind::gr;
    if (generative && vocab == nullptr) {
        throw std::invalid_argument("train: the generative head needs a vocabulary");
    }

    const auto [val_rows, fit_rows] = split_indices(data.size(), config.val_ratio, config.seed);
    if (val_rows.empty() || fit_rows.empty()) {
        throw std::invalid_argument("train: validation split leaves an empty partition");
    }
    const Dataset fit_raw = data.subset(fit_rows);
    const Dataset val_raw = data.subset(val_rows);
    const Standardizer standardizer = Standardizer::fit(fit_raw.features);
    const Tensor fit_x = standardizer.apply(fit_raw.features);
    const Tensor val_x = standardizer.apply(val_raw.features);
    const std::vector<double>& fit_y = fit_raw.targets;

    model.feature_dim = data.dim();
    BucketScheme buckets;
    std::vector<TokenSeq> encoded;
    if (generative) {
        model.vocab_size = vocab->size();
        if (config.require_roundtrip) {
            const RoundTripReport report = validate_roundtrip(fit_y, *vocab, {model.max_len, 0.001});
            if (report.out_of_tolerance > 0) {
                throw std::runtime_error("train: " + std::to_string(report.out_of_tolerance) +
                                         " training targets miss the round-trip tolerance (max rel err " +
                                         fmt(report.max_rel_err) + ")");
            }
        }
        for (double y : fit_y) {
            encoded.push_back(encode(y, *vocab, {model.max_len, 0.001}));
        }
    } else if (model.head == HeadKind::ordinal) {
        buckets = quantile_buckets(fit_y, model.ordinal_buckets == 0 ? 20 : model.ordinal_buckets);
        model.ordinal_buckets = buckets.size();
    }
    model.validate();

    ParamStore params = init_params(model);
    if (model.head == HeadKind::vr) {
        // start the regression output at the target median
        std::vector<double> sorted = fit_y;
        params.at("vr.b")(0, 0) = percentile(sorted, 50.0);
    }
    const ScheduleConfig schedule = resolve_schedule(config.schedule, config.steps);

    SplitMix64 batch_rng(config.seed * 0x9e3779b97f4a7c15ULL + 1);
    SplitMix64 mask_rng(config.seed * 0xbf58476d1ce4e5b9ULL + 2);
    AdamState adam;
    const AdamOptions adam_options{config.lr, 0.9, 0.999, 1e-8};
    const std::vector<Tensor*> param_ptrs = params.pointers();

    std::vector<std::size_t> order(fit_y.size());
    std::size_t cursor = order.size();
    auto next_rows = [&]() {
        std::vector<std::size_t> rows;
        while (rows.size() < std::min(config.batch_size, order.size())) {
            if (cursor == order.size()) {
                for (std::size_t i = 0; i < order.size(); ++i) {
                    order[i] = i;
                }
                batch_rng.shuffle(order);
                cursor = 0;
            }
            rows.push_back(order[cursor++]);
        }
        return rows;
    };

    TrainResult result;
    result.best_val_mae = INFINITY;
    ParamStore best = params;
    LogRecord acc;
    std::size_t acc_steps = 0;
    const ValueVocabulary empty_vocab;
    const ValueVocabulary& vocab_ref = vocab ? *vocab : empty_vocab;

    for (std::size_t step = 1; step <= config.steps; ++step) {
        const std::vector<std::size_t> rows = next_rows();
        const double p_truth = sampling_rate(schedule, static_cast<double>(step - 1));
        StepResult sr;
        if (generative) {
            const SeqBatch batch = make_batch(fit_x, fit_y, encoded, rows);
            sr = config.clem ? train_step_clem(batch, params, model, vocab_ref, config, p_truth, mask_rng)
                             : train_step_teacher_forcing(batch, params, model, vocab_ref, config);
            sr.p = config.clem ? p_truth : 1.0;
        } else {
            Tensor x(rows.size(), fit_x.cols());
            std::vector<double> y;
            for (std::size_t i = 0; i < rows.size(); ++i) {
                const auto src = fit_x.row_span(rows[i]);
                std::copy(src.begin(), src.end(), x.row_span(i).begin());
                y.push_back(fit_y[rows[i]]);
            }
            Graph g;
            BoundParams p(g, params);
            Var loss = model.head == HeadKind::vr ? vr_loss(p, x, y, model, config.delta)
                                                  : ordinal_loss(p, x, y, model, buckets);
            g.backward(loss);
            sr.loss.total = loss.value().item();
            if (model.head == HeadKind::vr) {
                sr.loss.huber = sr.loss.total;
            } else {
                sr.loss.ce1 = sr.loss.total;
                sr.loss.ce2 = sr.loss.total;
            }
            sr.grads = p.grads();
            sr.p = 1.0;
        }
        if (!std::isfinite(sr.loss.total)) {
            throw std::runtime_error("train: non-finite loss at step " + std::to_string(step) + " (ce1=" +
                                     fmt(sr.loss.ce1) + ", ce2=" + fmt(sr.loss.ce2) + ", huber=" +
                                     fmt(sr.loss.huber) + ")");
        }
        adam_step(param_ptrs, sr.grads, adam, adam_options);

        acc.ce1 += sr.loss.ce1;
        acc.ce2 += sr.loss.ce2;
        acc.huber += sr.loss.huber;
        acc.p = sr.p;
        ++acc_steps;

        if (step % config.eval_every == 0 || step == config.steps) {
            LogRecord rec;
            rec.step = step;
            rec.ce1 = acc.ce1 / static_cast<double>(acc_steps);
            rec.ce2 = acc.ce2 / static_cast<double>(acc_steps);
            rec.huber = acc.huber / static_cast<double>(acc_steps);
            rec.p = acc.p;
            acc = LogRecord{};
            acc_steps = 0;

            Checkpoint probe;
            probe.config = model;
            probe.params = params;
            probe.buckets = buckets;
            if (vocab) {
                probe.vocab_values = vocab->values();
            }
            const std::vector<double> preds = predict_values(probe, val_x);
            rec.val_mae = mae(preds, val_raw.targets);
            try {
                rec.val_xauc = xauc(preds, val_raw.targets);
            } catch (const std::invalid_argument&) {
                rec.val_xauc.reset();
            }
            if (*rec.val_mae < result.best_val_mae) {
                result.best_val_mae = *rec.val_mae;
                result.best_step = step;
                best = params;
            }
            if (log_out) {
                *log_out << to_json_line(rec) << '\n';
                log_out->flush();
            }
            result.log.push_back(rec);
        }
    }

    Checkpoint& ckpt = result.checkpoint;
    ckpt.config = model;
    ckpt.params = std::move(best);
    if (vocab) {
        ckpt.vocab_values = vocab->values();
    }
    ckpt.standardizer = standardizer;
    ckpt.buckets = buckets;
    ckpt.settings = config.to_map();
    ckpt.settings["best_step"] = std::to_string(result.best_step);
    return result;
}

}  // namespace genreg
