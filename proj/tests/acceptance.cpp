// Acceptance suite: one PASS/FAIL line per criterion.
// Usage: acceptance [criterion numbers...]   (no arguments runs all)

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "genreg/checkpoint.h"
#include "genreg/codec.h"
#include "genreg/data.h"
#include "genreg/gradcheck.h"
#include "genreg/inference.h"
#include "genreg/metrics.h"
#include "genreg/optim.h"
#include "genreg/training.h"
#include "genreg/vocab.h"

using namespace genreg;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
    return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string fmt(const char* pattern, double a) {
    char buf[128];
    std::snprintf(buf, sizeof buf, pattern, a);
    return buf;
}

Tensor random_tensor(std::size_t rows, std::size_t cols, std::uint64_t seed, double scale = 1.0) {
    SplitMix64 rng(seed);
    Tensor t(rows, cols);
    for (double& v : t.values()) {
        v = scale * rng.uniform(-1.0, 1.0);
    }
    return t;
}

// Same construction set for criteria 1 and 2.
Dataset construction_set() { return synth_longtail(10000, 8, 2024); }

// ---- 1 ----------------------------------------------------------------------

Outcome roundtrip_fidelity() {
    const Dataset data = construction_set();
    const auto start = Clock::now();
    const ValueVocabulary vocab = build_dynamic(data.targets);
    const RoundTripReport r = validate_roundtrip(data.targets, vocab);
    const double secs = seconds_since(start);
    std::ostringstream d;
    d << "V=" << vocab.value_count() << " within=" << r.pct_within_tolerance << "% max_rel_err=" << r.max_rel_err
      << " time=" << secs << "s";
    return {r.out_of_tolerance == 0 && r.max_rel_err <= 0.001 && secs < 10.0, d.str()};
}

// ---- 2 ----------------------------------------------------------------------

Outcome termination_and_balance() {
    const Dataset data = construction_set();
    const DynamicVocabOptions options;
    const ValueVocabulary dynamic = build_dynamic(data.targets, options);
    double y_max = 0.0;
    for (double y : data.targets) {
        y_max = std::max(y_max, y);
    }
    // binary tokens on the same grid the targets are recorded at
    const ValueVocabulary binary = build_binary(y_max, 0.01);
    const double dyn_ratio = token_frequency(data.targets, dynamic).max_median_ratio();
    const double bin_ratio = token_frequency(data.targets, binary).max_median_ratio();
    const bool terminated = dynamic.meta().iterations <= 128 && dynamic.meta().final_error <= options.eps;
    std::ostringstream d;
    d << "iterations=" << dynamic.meta().iterations << " err=" << dynamic.meta().final_error
      << " max/median dynamic=" << dyn_ratio << " binary=" << bin_ratio;
    return {terminated && dyn_ratio < bin_ratio, d.str()};
}

// ---- 3 ----------------------------------------------------------------------

struct TinyProblem {
    ValueVocabulary vocab = build_manual({32, 16, 8, 4, 2, 1});
    ModelConfig model;
    SeqBatch batch;
    ParamStore params;
    TrainConfig train;

    TinyProblem() {
        model.feature_dim = 4;
        model.hidden_dim = 8;
        model.encoder_layers = 2;
        model.decoder_blocks = 1;
        model.attention_heads = 2;
        model.ffn_mult = 2;
        model.vocab_size = vocab.size();
        model.max_len = 8;
        model.mixup_window = 2;
        model.seed = 17;
        params = init_params(model);
        const Tensor x = random_tensor(4, 4, 3);
        const std::vector<double> y{37, 5, 0, 21};
        const std::vector<std::size_t> rows{0, 1, 2, 3};
        batch = make_batch(x, y, rows, vocab, model.max_len);
    }
};

Outcome gradient_correctness() {
    const auto start = Clock::now();
    const TinyProblem t;
    GradCheckOptions all;  // every coordinate
    auto logits_of = [&](const std::vector<Var>& vars) {
        const BoundParams p(t.params, vars);
        Graph& g = *vars.front().graph();
        Var h = encode_features(p, g.constant(t.batch.features), t.model);
        return decoder_forward(p, t.batch.inputs, h, t.batch.batch, t.batch.len, t.model);
    };
    const double ce = grad_check(
        [&](Graph&, const std::vector<Var>& v) { return sequence_ce(logits_of(v), t.batch.targets, t.batch.mask); },
        t.params.tensors(), all);
    const double hub = grad_check(
        [&](Graph&, const std::vector<Var>& v) { return soft_huber(logits_of(v), t.batch, t.vocab, 1.0); },
        t.params.tensors(), all);
    std::vector<bool> replace_all(t.batch.batch * t.batch.len, false);
    TrainConfig cfg = t.train;
    cfg.lambda = 0.5;
    const double clem = grad_check(
        [&](Graph&, const std::vector<Var>& v) {
            LossBreakdown parts;
            Var loss = clem_loss(BoundParams(t.params, v), t.batch, t.model, t.vocab, cfg, replace_all, &parts);
            if (parts.replaced == 0) {
                throw std::logic_error("pass 2 replaced nothing");
            }
            return loss;
        },
        t.params.tensors(), all);
    const double secs = seconds_since(start);
    std::ostringstream d;
    d << "params=" << t.params.scalar_count() << " rel_err ce=" << ce << " huber=" << hub << " clem=" << clem
      << " time=" << secs << "s";
    return {ce <= 1e-4 && hub <= 1e-4 && clem <= 1e-4 && secs < 60.0, d.str()};
}

// ---- 4 ----------------------------------------------------------------------

Outcome causality() {
    const TinyProblem t;
    const std::size_t batch = 2;
    const std::size_t len = 6;
    std::size_t nonzero_future = 0;
    std::size_t dead_present = 0;
    for (std::size_t b = 0; b < batch; ++b) {
        for (std::size_t pos = 0; pos < len; ++pos) {
            Graph g;
            BoundParams p(g, t.params);
            Var inputs = g.variable(random_tensor(batch * len, t.model.hidden_dim, 5));
            Var logits = decoder_logits(p, inputs, g.constant(random_tensor(batch, t.model.hidden_dim, 6)), batch,
                                        len, t.model);
            Tensor pick(batch * len, t.model.vocab_size, 0.0);
            const Tensor w = random_tensor(1, t.model.vocab_size, 7 + pos);
            for (std::size_t k = 0; k < t.model.vocab_size; ++k) {
                pick(b * len + pos, k) = w(0, k);
            }
            g.backward(sum(mul(logits, g.constant(pick))));
            for (std::size_t r = 0; r < batch * len; ++r) {
                const bool same_sample = r / len == b;
                const bool later = r % len > pos;
                double mag = 0.0;
                for (double v : inputs.grad().row_span(r)) {
                    mag += std::abs(v);
                }
                if ((!same_sample || later) && mag != 0.0) {
                    ++nonzero_future;
                }
                if (same_sample && r % len == pos && mag == 0.0) {
                    ++dead_present;
                }
            }
        }
    }
    std::ostringstream d;
    d << "checked " << batch * len << " logit positions, nonzero future/cross-sample gradients=" << nonzero_future;
    return {nonzero_future == 0 && dead_present == 0, d.str()};
}

// ---- 5 ----------------------------------------------------------------------

Outcome clem_degeneracy() {
    TinyProblem t;
    t.model.mixup_window = 0;
    t.params = init_params(t.model);
    ParamStore tf_params = t.params;
    ParamStore cl_params = t.params;
    AdamState tf_adam;
    AdamState cl_adam;
    const auto tf_ptrs = tf_params.pointers();
    const auto cl_ptrs = cl_params.pointers();
    SplitMix64 rng(t.train.seed * 0xbf58476d1ce4e5b9ULL + 2);
    std::size_t mismatched = 0;
    const int steps = 50;
    for (int step = 0; step < steps; ++step) {
        const StepResult a = train_step_teacher_forcing(t.batch, tf_params, t.model, t.vocab, t.train);
        const StepResult b = train_step_clem(t.batch, cl_params, t.model, t.vocab, t.train, 1.0, rng);
        if (a.loss.total != b.loss.total || a.loss.ce1 != b.loss.ce1 || a.loss.huber != b.loss.huber ||
            a.grads != b.grads) {
            ++mismatched;
        }
        adam_step(tf_ptrs, a.grads, tf_adam, {1e-2});
        adam_step(cl_ptrs, b.grads, cl_adam, {1e-2});
    }
    const bool params_equal = tf_params == cl_params;

    // full training loop: clem at p = 1 against plain teacher forcing
    const Dataset data = synth_longtail(300, 4, 8);
    const ValueVocabulary vocab = build_dynamic(data.targets);
    ModelConfig m = t.model;
    m.mixup_window = 0;
    TrainConfig on;
    on.steps = 30;
    on.eval_every = 10;
    on.batch_size = 16;
    on.schedule.kind = ScheduleKind::fixed;
    on.schedule.fixed_p = 1.0;
    TrainConfig off = on;
    off.clem = false;
    const TrainResult r_on = train(data, &vocab, m, on);
    const TrainResult r_off = train(data, &vocab, m, off);
    bool loop_equal = r_on.checkpoint.params == r_off.checkpoint.params && r_on.log.size() == r_off.log.size();
    for (std::size_t i = 0; loop_equal && i < r_on.log.size(); ++i) {
        loop_equal = r_on.log[i].ce1 == r_off.log[i].ce1 && r_on.log[i].ce2 == r_off.log[i].ce1 &&
                     r_on.log[i].huber == r_off.log[i].huber && r_on.log[i].val_mae == r_off.log[i].val_mae;
    }

    // schedule: strictly decreasing, p(0) = p0 * omega / (omega + 1)
    bool decreasing = true;
    bool start_exact = true;
    for (double p0 : {1.0, 0.8}) {
        ScheduleConfig s;
        s.p0 = p0;
        s = resolve_schedule(s, 5000);
        start_exact = start_exact && sampling_rate(s, 0.0) == p0 * s.omega / (s.omega + 1.0);
        double prev = sampling_rate(s, 0.0);
        for (int tau = 1; tau < 5000; ++tau) {
            const double p = sampling_rate(s, tau);
            decreasing = decreasing && p < prev;
            prev = p;
        }
    }
    std::ostringstream d;
    d << steps << " paired steps, mismatched=" << mismatched << " params_equal=" << params_equal
      << " train_loop_equal=" << loop_equal << " schedule_decreasing=" << decreasing
      << " p(0)_exact=" << start_exact;
    return {mismatched == 0 && params_equal && loop_equal && decreasing && start_exact, d.str()};
}

// ---- 6 ----------------------------------------------------------------------

// Synthetic split the way the CLI does it: test share first, split seed = data seed + 1.
std::pair<Dataset, Dataset> train_test(std::size_t n, std::uint64_t seed, const SynthParams& params) {
    const Dataset all = synth_longtail(n, 8, seed, params);
    auto [test, train_part] = split(all, 0.2, seed + 1);
    return {train_part, test};
}

TrainConfig experiment_config(std::uint64_t seed, std::size_t steps) {
    TrainConfig c;
    c.lr = 2e-3;
    c.batch_size = 64;
    c.steps = steps;
    c.eval_every = 500;
    c.seed = seed;
    return c;
}

Outcome learnability() {
    const auto start = Clock::now();
    SynthParams noise_free;
    noise_free.noise = 0.0;
    const auto [train_set, test_set] = train_test(2000, 2026, noise_free);
    const ValueVocabulary vocab = build_dynamic(train_set.targets);
    const TrainResult r = train(train_set, &vocab, ModelConfig{}, experiment_config(1, 5000));
    const CheckpointEvaluation e = evaluate_checkpoint(r.checkpoint, test_set);
    const double mean = e.report.stats.label_mean;
    const double secs = seconds_since(start);
    std::ostringstream d;
    d << "steps=5000 test XAUC=" << e.report.xauc << " MAE=" << e.report.mae << " (" << 100.0 * e.report.mae / mean
      << "% of mean " << mean << ") time=" << secs << "s";
    return {e.report.xauc >= 0.95 && e.report.mae <= 0.1 * mean && secs <= 600.0, d.str()};
}

// ---- 7 and 8 ----------------------------------------------------------------

struct HeadRun {
    double xauc = 0.0;
    double mae = 0.0;
    double zero_mean = 0.0;
};

struct Comparison {
    HeadRun gr;
    HeadRun vr;
    HeadRun ordinal;
    std::size_t zero_count = 0;
    bool done = false;
};

HeadRun run_head(HeadKind head, const Dataset& train_set, const Dataset& test_set, const ValueVocabulary* vocab,
                 std::uint64_t seed) {
    ModelConfig m;
    m.head = head;
    m.seed = seed;
    const TrainResult r = train(train_set, vocab, m, experiment_config(seed, 3000));
    const CheckpointEvaluation e = evaluate_checkpoint(r.checkpoint, test_set);
    HeadRun out;
    out.xauc = e.report.xauc;
    out.mae = e.report.mae;
    std::size_t zeros = 0;
    for (std::size_t i = 0; i < test_set.size(); ++i) {
        if (test_set.targets[i] == 0.0) {
            out.zero_mean += e.predictions[i];
            ++zeros;
        }
    }
    out.zero_mean /= static_cast<double>(zeros);
    return out;
}

Comparison& comparison() {
    static Comparison c;
    if (c.done) {
        return c;
    }
    const auto [train_set, test_set] = train_test(10000, 31, SynthParams{});
    for (double y : test_set.targets) {
        c.zero_count += y == 0.0 ? 1 : 0;
    }
    if (c.zero_count == 0) {
        throw std::runtime_error("test split has no zero targets");
    }
    const ValueVocabulary vocab = build_dynamic(train_set.targets);
    const std::vector<std::uint64_t> seeds{1, 2, 3};
    for (std::uint64_t seed : seeds) {
        const HeadRun gr = run_head(HeadKind::gr, train_set, test_set, &vocab, seed);
        const HeadRun vr = run_head(HeadKind::vr, train_set, test_set, nullptr, seed);
        const HeadRun ord = run_head(HeadKind::ordinal, train_set, test_set, nullptr, seed);
        std::cout << "  seed " << seed << ": GR xauc=" << gr.xauc << " mae=" << gr.mae << " zero_mean=" << gr.zero_mean
                  << " | VR xauc=" << vr.xauc << " mae=" << vr.mae << " | ordinal xauc=" << ord.xauc
                  << " mae=" << ord.mae << " zero_mean=" << ord.zero_mean << std::endl;
        for (auto [acc, run] : {std::pair{&c.gr, gr}, std::pair{&c.vr, vr}, std::pair{&c.ordinal, ord}}) {
            acc->xauc += run.xauc / 3.0;
            acc->mae += run.mae / 3.0;
            acc->zero_mean += run.zero_mean / 3.0;
        }
    }
    c.done = true;
    return c;
}

Outcome directional_superiority() {
    const Comparison& c = comparison();
    std::ostringstream d;
    d << "3-seed mean XAUC GR=" << c.gr.xauc << " VR=" << c.vr.xauc << "; MAE GR=" << c.gr.mae
      << " ordinal=" << c.ordinal.mae << " (VR " << c.vr.mae << ")";
    return {c.gr.xauc >= c.vr.xauc && c.gr.mae <= c.ordinal.mae, d.str()};
}

Outcome near_zero() {
    const Comparison& c = comparison();
    std::ostringstream d;
    d << c.zero_count << " zero-target test rows, mean prediction GR=" << c.gr.zero_mean
      << " ordinal=" << c.ordinal.zero_mean;
    return {c.gr.zero_mean <= c.ordinal.zero_mean, d.str()};
}

// ---- 9 ----------------------------------------------------------------------

double brute_xauc(const std::vector<double>& p, const std::vector<double>& l) {
    double hits = 0.0;
    double pairs = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        for (std::size_t j = i + 1; j < p.size(); ++j) {
            if (l[i] == l[j]) {
                continue;
            }
            pairs += 1.0;
            const double agree = (p[i] - p[j]) * (l[i] - l[j]);
            hits += agree > 0.0 ? 1.0 : (agree == 0.0 ? 0.5 : 0.0);
        }
    }
    return hits / pairs;
}

Outcome metric_oracles() {
    double worst_xauc = 0.0;
    double worst_interval = 0.0;
    SplitMix64 rng(99);
    for (std::size_t n : {2u, 17u, 500u, 2000u}) {
        std::vector<double> labels(n);
        std::vector<double> preds(n);
        for (std::size_t i = 0; i < n; ++i) {
            labels[i] = std::round(20.0 * std::pow(rng.uniform(), 3.0) * 10.0) / 10.0;
            preds[i] = std::round((labels[i] + 3.0 * rng.normal()) * 2.0) / 2.0;
        }
        labels[0] = 0.0;
        labels[1] = 1.0;
        worst_xauc = std::max(worst_xauc, std::abs(xauc(preds, labels) - brute_xauc(preds, labels)));
        double weighted = 0.0;
        for (const IntervalRow& row : interval_mae(preds, labels)) {
            if (row.mae) {
                weighted += *row.mae * static_cast<double>(row.count);
            }
        }
        worst_interval =
            std::max(worst_interval, std::abs(weighted / static_cast<double>(n) - mae(preds, labels)));
    }
    std::ostringstream d;
    d << "max |xauc - brute|=" << worst_xauc << " max interval recombination gap=" << worst_interval;
    return {worst_xauc <= 1e-12 && worst_interval <= 1e-9, d.str()};
}

// ---- 10 ---------------------------------------------------------------------

struct RunArtifacts {
    std::string log;
    std::string checkpoint;
    std::string report;
};

RunArtifacts full_run() {
    const auto [train_set, test_set] = train_test(800, 21, SynthParams{});
    const ValueVocabulary vocab = build_dynamic(train_set.targets);
    TrainConfig c = experiment_config(5, 200);
    c.eval_every = 50;
    ModelConfig m;
    m.seed = 5;
    std::ostringstream log;
    const TrainResult r = train(train_set, &vocab, m, c, &log);
    const std::string bytes = serialize_checkpoint(r.checkpoint);
    // evaluate what was written, as the CLI does
    const CheckpointEvaluation e = evaluate_checkpoint(deserialize_checkpoint(bytes), test_set);
    return {log.str(), bytes, report_to_json(e.report)};
}

Outcome determinism() {
    const RunArtifacts a = full_run();
    const RunArtifacts b = full_run();
    std::ostringstream d;
    d << "log " << a.log.size() << " bytes, checkpoint " << a.checkpoint.size() << " bytes; log_equal="
      << (a.log == b.log) << " checkpoint_equal=" << (a.checkpoint == b.checkpoint)
      << " report_equal=" << (a.report == b.report);
    return {a.log == b.log && a.checkpoint == b.checkpoint && a.report == b.report && !a.log.empty(), d.str()};
}

}  // namespace

int main(int argc, char** argv) {
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
        {"round-trip fidelity", roundtrip_fidelity},
        {"vocabulary termination and balance", termination_and_balance},
        {"gradient correctness", gradient_correctness},
        {"decoder causality", causality},
        {"CLEM degeneracy and schedule", clem_degeneracy},
        {"end-to-end learnability", learnability},
        {"directional superiority", directional_superiority},
        {"near-zero targets", near_zero},
        {"metric oracles", metric_oracles},
        {"determinism", determinism},
    };
    std::set<std::size_t> selected;
    for (int i = 1; i < argc; ++i) {
        selected.insert(static_cast<std::size_t>(std::atoi(argv[i])));
    }
    int failures = 0;
    for (std::size_t k = 0; k < criteria.size(); ++k) {
        if (!selected.empty() && !selected.count(k + 1)) {
            continue;
        }
        const auto start = Clock::now();
        Outcome o;
        try {
            o = criteria[k].second();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        failures += o.pass ? 0 : 1;
        std::cout << (o.pass ? "PASS" : "FAIL") << " [" << k + 1 << "] " << criteria[k].first << ": " << o.detail
                  << fmt(" (%.1fs)", seconds_since(start)) << std::endl;
    }
    return failures == 0 ? 0 : 1;
}
