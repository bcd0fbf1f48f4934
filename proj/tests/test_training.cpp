#include <doctest.h>

#include <stdexcept>

#include <cmath>
#include <sstream>
#include <vector>

#include "genreg/gradcheck.h"
#include "genreg/optim.h"
#include "genreg/training.h"
#include "test_util.h"

using namespace genreg;
using genreg::testing::random_tensor;

namespace {

struct Fixture {
    ValueVocabulary vocab = build_manual({8, 4, 2, 1});
    ModelConfig model;
    TrainConfig train;
    Tensor x = random_tensor(6, 3, 41);
    std::vector<double> y{7, 3, 0, 12, 5, 1};
    std::vector<std::size_t> rows{0, 1, 2, 3, 4, 5};
    SeqBatch batch;
    ParamStore params;

    Fixture() {
        model.feature_dim = 3;
        model.hidden_dim = 8;
        model.encoder_layers = 2;
        model.decoder_blocks = 1;
        model.attention_heads = 2;
        model.ffn_mult = 2;
        model.vocab_size = vocab.size();
        model.max_len = 8;
        model.seed = 5;
        params = init_params(model);
        batch = make_batch(x, y, rows, vocab, model.max_len);
    }
};

double max_abs_diff(const std::vector<Tensor>& a, const std::vector<Tensor>& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        for (std::size_t k = 0; k < a[i].size(); ++k) {
            m = std::max(m, std::abs(a[i].values()[k] - b[i].values()[k]));
        }
    }
    return m;
}

}  // namespace

TEST_CASE("huber values and smoothness") {
    CHECK(huber(0.0, 0.5, 1.0) == 0.125);
    CHECK(huber(0.0, 3.0, 1.0) == 2.5);
    CHECK(huber(2.0, -1.0, 2.0) == 4.0);
    CHECK(huber(1.0, 1.0, 1.0) == 0.0);
    CHECK_THROWS_AS(huber(0.0, 1.0, 0.0), std::invalid_argument);
    const double delta = 1.5;
    const double h = 1e-8;
    for (double a : {delta - 1e-6, delta + 1e-6}) {
        const double slope = (huber(0.0, a + h, delta) - huber(0.0, a - h, delta)) / (2.0 * h);
        CHECK(slope == doctest::Approx(delta).epsilon(1e-5));
    }
    CHECK(huber(0.0, delta - 1e-9, delta) == doctest::Approx(huber(0.0, delta + 1e-9, delta)).epsilon(1e-8));
}

TEST_CASE("sequence cross-entropy") {
    Graph g;
    const std::vector<int> t{0, 2, 1};
    const std::vector<double> full{1, 1, 1};
    Tensor perfect(3, 4, -1000.0);
    for (std::size_t r = 0; r < 3; ++r) {
        perfect(r, static_cast<std::size_t>(t[r])) = 1000.0;
    }
    CHECK(sequence_ce(g.constant(perfect), t, full).value().item() == doctest::Approx(0.0));
    CHECK(sequence_ce(g.constant(Tensor(3, 4, 0.7)), t, full).value().item() == doctest::Approx(std::log(4.0)));

    const Tensor logits = random_tensor(3, 4, 3, 2.0);
    const std::vector<double> half{1, 0, 1};
    double oracle = 0.0;
    for (std::size_t r : {0u, 2u}) {
        double lse = 0.0;
        for (std::size_t c = 0; c < 4; ++c) {
            lse += std::exp(logits(r, c));
        }
        oracle += std::log(lse) - logits(r, static_cast<std::size_t>(t[r]));
    }
    CHECK(sequence_ce(g.constant(logits), t, half).value().item() == doctest::Approx(oracle / 2.0).epsilon(1e-12));
    CHECK_THROWS_AS(sequence_ce(g.constant(logits), t, std::vector<double>{0, 0, 0}), std::invalid_argument);
}

TEST_CASE("composite loss") {
    Graph g;
    CHECK(composite_loss(g.constant(Tensor::scalar(2.0)), g.constant(Tensor::scalar(3.0)), 0.5).value().item() ==
          3.5);
    CHECK(composite_loss(g.constant(Tensor::scalar(2.0)), g.constant(Tensor::scalar(3.0)), 0.0).value().item() ==
          2.0);
    CHECK_THROWS_AS(composite_loss(g.constant(Tensor::scalar(1.0)), g.constant(Tensor::scalar(1.0)), -1.0),
                    std::invalid_argument);
}

TEST_CASE("lambda zero gives the pure cross-entropy gradient") {
    Fixture f;
    f.train.lambda = 0.0;
    const StepResult tf = train_step_teacher_forcing(f.batch, f.params, f.model, f.vocab, f.train);
    Graph g;
    BoundParams p(g, f.params);
    Var h = encode_features(p, g.constant(f.batch.features), f.model);
    Var logits = decoder_forward(p, f.batch.inputs, h, f.batch.batch, f.batch.len, f.model);
    g.backward(sequence_ce(logits, f.batch.targets, f.batch.mask));
    CHECK(max_abs_diff(tf.grads, p.grads()) < 1e-12);
}

TEST_CASE("schedules") {
    ScheduleConfig s;
    s.omega = 1.0;
    CHECK(sampling_rate(s, 0.0) == doctest::Approx(0.5));
    CHECK_THROWS_AS(sampling_rate(ScheduleConfig{}, 0.0), std::invalid_argument);
    CHECK_THROWS_AS(sampling_rate(s, -1.0), std::invalid_argument);

    for (ScheduleKind kind : {ScheduleKind::paper_sigmoid, ScheduleKind::linear, ScheduleKind::exponential}) {
        ScheduleConfig c;
        c.kind = kind;
        c = resolve_schedule(c, 1000);
        double prev = sampling_rate(c, 0.0);
        CHECK(prev <= 1.0);
        for (int tau = 1; tau < 1000; ++tau) {
            const double p = sampling_rate(c, tau);
            CHECK(p < prev);
            CHECK(p >= 0.0);
            prev = p;
        }
        CHECK(prev == doctest::Approx(0.05).epsilon(1e-6));
    }
    ScheduleConfig fixed;
    fixed.kind = ScheduleKind::fixed;
    fixed.fixed_p = 0.3;
    CHECK(sampling_rate(fixed, 0.0) == 0.3);
    CHECK(sampling_rate(fixed, 5000.0) == 0.3);
    ScheduleConfig steep;
    steep.kind = ScheduleKind::linear;
    steep.linear_slope = 0.1;
    CHECK(sampling_rate(steep, 50.0) == 0.0);

    const double omega = solve_omega(1.0, 0.05, 999.0);
    CHECK(omega / (omega + std::exp(999.0 / omega)) == doctest::Approx(0.05).epsilon(1e-9));
    CHECK_THROWS_AS(solve_omega(1.0, 1.5, 10.0), std::invalid_argument);

    CHECK(parse_schedule("linear") == ScheduleKind::linear);
    CHECK(parse_schedule(to_string(ScheduleKind::paper_sigmoid)) == ScheduleKind::paper_sigmoid);
    CHECK_THROWS_AS(parse_schedule("cosine"), std::invalid_argument);
}

TEST_CASE("embedding mixup") {
    Graph g;
    const Tensor table = random_tensor(7, 4, 8);
    Var t = g.constant(table);
    const std::vector<int> ids{4, 1, 3, 6};
    Var raw = embedding_mixup(g.constant(random_tensor(4, 7, 2, 3.0)), t, ids, 0, 7);
    for (std::size_t r = 0; r < 4; ++r) {
        for (std::size_t c = 0; c < 4; ++c) {
            CHECK(raw.value()(r, c) == table(static_cast<std::size_t>(ids[r]), c));
        }
    }
    // equal logits average the three neighbours of an interior id
    Var mixed = embedding_mixup(g.constant(Tensor(4, 7, 0.0)), t, ids, 2, 7);
    for (std::size_t c = 0; c < 4; ++c) {
        CHECK(mixed.value()(0, c) == doctest::Approx((table(3, c) + table(4, c) + table(5, c)) / 3.0));
        CHECK(mixed.value()(1, c) == table(1, c));
        // window clipped at both value-id edges
        CHECK(mixed.value()(2, c) == doctest::Approx((table(3, c) + table(4, c)) / 2.0));
        CHECK(mixed.value()(3, c) == doctest::Approx((table(5, c) + table(6, c)) / 2.0));
    }
}

TEST_CASE("make_batch layout") {
    Fixture f;
    CHECK(f.batch.batch == 6);
    CHECK(f.batch.len == 4);  // 7 = 4 + 2 + 1 plus EOS
    const std::vector<int> row0_in{kSosId, 4, 5, 6};
    const std::vector<int> row0_out{4, 5, 6, kEosId};
    for (std::size_t t = 0; t < 4; ++t) {
        CHECK(f.batch.inputs[t] == row0_in[t]);
        CHECK(f.batch.targets[t] == row0_out[t]);
    }
    // y = 0 is a lone EOS
    CHECK(f.batch.inputs[2 * 4] == kSosId);
    CHECK(f.batch.targets[2 * 4] == kEosId);
    CHECK(f.batch.mask[2 * 4] == 1.0);
    CHECK(f.batch.mask[2 * 4 + 1] == 0.0);
    CHECK(f.batch.inputs[2 * 4 + 1] == kPadId);
    CHECK_THROWS_AS(make_batch(f.x, f.y, std::vector<std::size_t>{}, f.vocab), std::invalid_argument);
}

TEST_CASE("clem with full truth matches teacher forcing bit for bit") {
    Fixture f;
    SplitMix64 rng(3);
    const StepResult tf = train_step_teacher_forcing(f.batch, f.params, f.model, f.vocab, f.train);
    const StepResult cl = train_step_clem(f.batch, f.params, f.model, f.vocab, f.train, 1.0, rng);
    CHECK(cl.loss.replaced == 0);
    CHECK(cl.loss.total == tf.loss.total);
    CHECK(cl.loss.ce1 == cl.loss.ce2);
    REQUIRE(cl.grads.size() == tf.grads.size());
    for (std::size_t i = 0; i < tf.grads.size(); ++i) {
        CHECK(cl.grads[i] == tf.grads[i]);
    }
}

TEST_CASE("truth mask") {
    Fixture f;
    SplitMix64 rng(1);
    const auto none = draw_truth_mask(f.batch, 0.0, rng);
    for (std::size_t r = 0; r < none.size(); ++r) {
        const bool forced = r % f.batch.len == 0 || f.batch.inputs[r] == kPadId;
        CHECK(none[r] == forced);
    }
    const auto all = draw_truth_mask(f.batch, 1.0, rng);
    for (bool k : all) {
        CHECK(k);
    }
    SplitMix64 a(9);
    SplitMix64 b(9);
    CHECK(draw_truth_mask(f.batch, 0.5, a) == draw_truth_mask(f.batch, 0.5, b));
}

TEST_CASE("clem with zero truth replaces every non-initial input") {
    Fixture f;
    SplitMix64 rng(2);
    const StepResult cl = train_step_clem(f.batch, f.params, f.model, f.vocab, f.train, 0.0, rng);
    std::size_t expected = 0;
    for (std::size_t r = 0; r < f.batch.inputs.size(); ++r) {
        expected += (r % f.batch.len != 0 && f.batch.inputs[r] != kPadId) ? 1 : 0;
    }
    CHECK(cl.loss.replaced == expected);
    CHECK(cl.loss.ce1 != cl.loss.ce2);
    CHECK(std::isfinite(cl.loss.total));
    CHECK(cl.loss.total == doctest::Approx(0.5 * (cl.loss.ce1 + cl.loss.ce2) + f.train.lambda * cl.loss.huber));
}

TEST_CASE("clem steps are deterministic") {
    Fixture f;
    SplitMix64 a(4);
    SplitMix64 b(4);
    const StepResult r1 = train_step_clem(f.batch, f.params, f.model, f.vocab, f.train, 0.5, a);
    const StepResult r2 = train_step_clem(f.batch, f.params, f.model, f.vocab, f.train, 0.5, b);
    CHECK(r1.loss.total == r2.loss.total);
    for (std::size_t i = 0; i < r1.grads.size(); ++i) {
        CHECK(r1.grads[i] == r2.grads[i]);
    }
}

TEST_CASE("grad check: teacher forcing and clem losses") {
    Fixture f;
    f.train.lambda = 0.3;
    const ParamStore& layout = f.params;
    GradCheckOptions opts;
    opts.max_coordinates = 200;
    const double tf_err = grad_check(
        [&](Graph&, const std::vector<Var>& vars) {
            return teacher_forcing_loss(BoundParams(layout, vars), f.batch, f.model, f.vocab, f.train);
        },
        f.params.tensors(), opts);
    CHECK(tf_err < 1e-4);

    SplitMix64 rng(6);
    const std::vector<bool> keep = draw_truth_mask(f.batch, 0.5, rng);
    const double clem_err = grad_check(
        [&](Graph&, const std::vector<Var>& vars) {
            return clem_loss(BoundParams(layout, vars), f.batch, f.model, f.vocab, f.train, keep);
        },
        f.params.tensors(), opts);
    CHECK(clem_err < 1e-4);
}

TEST_CASE("padding positions carry no gradient") {
    Fixture f;
    // rows 2 and 5 are short; changing their padded inputs must not move the loss
    SeqBatch altered = f.batch;
    for (std::size_t t = 0; t < altered.len; ++t) {
        if (altered.mask[2 * altered.len + t] == 0.0) {
            altered.inputs[2 * altered.len + t] = 5;
            altered.targets[2 * altered.len + t] = 6;
        }
    }
    f.train.lambda = 0.2;
    const StepResult a = train_step_teacher_forcing(f.batch, f.params, f.model, f.vocab, f.train);
    const StepResult b = train_step_teacher_forcing(altered, f.params, f.model, f.vocab, f.train);
    CHECK(a.loss.total == doctest::Approx(b.loss.total).epsilon(1e-13));
    CHECK(max_abs_diff(a.grads, b.grads) < 1e-12);
}

TEST_CASE("teacher forcing overfits sixteen sequences") {
    Fixture f;
    const Dataset d = synth_longtail(16, 3, 12, {5.0, 1.0, 0.0, 300.0, 0.0, 1.0});
    f.vocab = build_manual({32, 16, 8, 4, 2, 1});
    f.model.vocab_size = f.vocab.size();
    f.model.max_len = 12;
    f.model.hidden_dim = 16;
    f.params = init_params(f.model);
    std::vector<std::size_t> all(16);
    for (std::size_t i = 0; i < 16; ++i) {
        all[i] = i;
    }
    const Tensor x = Standardizer::fit(d.features).apply(d.features);
    const SeqBatch batch = make_batch(x, d.targets, all, f.vocab, f.model.max_len);
    f.train.lambda = 0.0;
    AdamState adam;
    const auto ptrs = f.params.pointers();
    double last = 0.0;
    for (int step = 0; step < 600; ++step) {
        const StepResult r = train_step_teacher_forcing(batch, f.params, f.model, f.vocab, f.train);
        last = r.loss.ce1;
        adam_step(ptrs, r.grads, adam, {0.01});
    }
    CHECK(last < 0.05);
}

TEST_CASE("run config parsing") {
    std::istringstream in("# comment\nlambda = 0.5\nsteps=10 # trailing\nschedule=linear\nhead=vr\nnw=4\nseed=9\n");
    const RunConfig c = parse_run_config(in);
    CHECK(c.train.lambda == 0.5);
    CHECK(c.train.steps == 10);
    CHECK(c.train.schedule.kind == ScheduleKind::linear);
    CHECK(c.model.head == HeadKind::vr);
    CHECK(c.model.mixup_window == 4);
    CHECK(c.train.seed == 9);
    CHECK(c.model.seed == 9);
    std::istringstream bad("lamda=1\n");
    CHECK_THROWS_WITH_AS(parse_run_config(bad), doctest::Contains("unknown key"), std::invalid_argument);
    std::istringstream junk("steps=ten\n");
    CHECK_THROWS_AS(parse_run_config(junk), std::invalid_argument);
    std::istringstream noeq("steps\n");
    CHECK_THROWS_WITH_AS(parse_run_config(noeq), doctest::Contains("line 1"), std::invalid_argument);

    TrainConfig t;
    t.val_ratio = 1.0;
    CHECK_THROWS_AS(t.validate(), std::invalid_argument);
    t = TrainConfig{};
    t.lr = 0.0;
    CHECK_THROWS_AS(t.validate(), std::invalid_argument);
}

TEST_CASE("log lines") {
    LogRecord r;
    r.step = 3;
    r.ce1 = 1.5;
    const std::string line = to_json_line(r);
    CHECK(line.find("\"step\":3") != std::string::npos);
    CHECK(line.find("\"val_mae\":null") != std::string::npos);
    CHECK(line.find('\n') == std::string::npos);
}

TEST_CASE("train loop rejects bad inputs and is reproducible") {
    const Dataset d = synth_longtail(60, 3, 4, {5.0, 1.0, 0.2, 300.0, 0.1, 0.01});
    const ValueVocabulary vocab = build_dynamic(d.targets);
    ModelConfig m;
    m.hidden_dim = 8;
    m.encoder_layers = 2;
    m.decoder_blocks = 1;
    m.ffn_mult = 2;
    TrainConfig t;
    t.steps = 6;
    t.eval_every = 3;
    t.batch_size = 8;
    CHECK_THROWS_AS(train(d, nullptr, m, t), std::invalid_argument);
    std::ostringstream log1;
    std::ostringstream log2;
    const TrainResult a = train(d, &vocab, m, t, &log1);
    const TrainResult b = train(d, &vocab, m, t, &log2);
    CHECK(log1.str() == log2.str());
    CHECK(a.log.size() == 2);
    CHECK(a.log.back().step == 6);
    CHECK(a.checkpoint.params == b.checkpoint.params);
    CHECK(a.checkpoint.config.feature_dim == 3);
    CHECK(a.checkpoint.settings.at("best_step") == std::to_string(a.best_step));

    m.head = HeadKind::vr;
    const TrainResult vr = train(d, nullptr, m, t);
    CHECK(vr.log.size() == 2);
}
