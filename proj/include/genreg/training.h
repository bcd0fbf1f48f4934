#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "genreg/autograd.h"
#include "genreg/baselines.h"
#include "genreg/checkpoint.h"
#include "genreg/codec.h"
#include "genreg/data.h"
#include "genreg/model.h"
#include "genreg/random.h"
#include "genreg/vocab.h"

namespace genreg {

// ---- sampling-rate schedules ----------------------------------------------

enum class ScheduleKind { paper_sigmoid, linear, exponential, fixed };

std::string to_string(ScheduleKind kind);
ScheduleKind parse_schedule(std::string_view text);

struct ScheduleConfig {
    ScheduleKind kind = ScheduleKind::paper_sigmoid;
    double p0 = 1.0;
    /// 0 = solve so that p reaches final_p at the last step.
    double omega = 0.0;
    /// p = 1 - linear_slope * tau; 0 = reach final_p at the last step.
    double linear_slope = 0.0;
    /// p = exp(-exp_rate * tau); 0 = reach final_p at the last step.
    double exp_rate = 0.0;
    double fixed_p = 0.5;
    double final_p = 0.05;
};

/// Probability of feeding the ground-truth token at iteration tau, clamped to [0, 1].
double sampling_rate(const ScheduleConfig& schedule, double tau);

/// omega with p0 * omega / (omega + exp(steps / omega)) == target_p, by bisection.
double solve_omega(double p0, double target_p, double steps);

/// Fills the automatic (zero) schedule constants for a run of `steps` iterations.
ScheduleConfig resolve_schedule(ScheduleConfig schedule, std::size_t steps);

// ---- configuration --------------------------------------------------------

struct TrainConfig {
    double lambda = 0.1;
    double delta = 1.0;
    double lr = 1e-3;
    std::size_t batch_size = 32;
    std::size_t steps = 3000;
    std::size_t eval_every = 250;
    std::uint64_t seed = 1;
    bool clem = true;
    double val_ratio = 0.1;
    ScheduleConfig schedule;
    /// Refuse to train when encoded targets miss the round-trip tolerance.
    bool require_roundtrip = true;

    void validate() const;
    std::map<std::string, std::string> to_map() const;
};

struct RunConfig {
    ModelConfig model;
    TrainConfig train;
};

/// key=value lines; '#' starts a comment. Unknown keys throw.
RunConfig parse_run_config(std::istream& in, RunConfig defaults = {});
RunConfig load_run_config(const std::string& path, RunConfig defaults = {});
/// Applies one key to a run config; returns false when the key is unknown.
bool apply_config_key(RunConfig& config, const std::string& key, const std::string& value);

// ---- loss pieces ----------------------------------------------------------

double huber(double y, double y_hat, double delta);

/// Mean over positions with nonzero mask of the per-step cross-entropy.
Var sequence_ce(Var logits, std::span<const int> targets, std::span<const double> mask);

/// ce + lambda * huber_value.
Var composite_loss(Var ce, Var huber_value, double lambda);

/// Window-softmax fusion of value-token embeddings around each predicted id
/// (half-width n_w / 2, clamped to the value ids). Special ids keep their
/// raw embedding.
Var embedding_mixup(Var logits, Var table, std::span<const int> predicted_ids, std::size_t n_w,
                    std::size_t vocab_size);

// ---- batches and steps ----------------------------------------------------

/// SOS-framed decoder inputs and EOS-terminated targets, PAD-aligned, row-major [batch x len].
struct SeqBatch {
    std::size_t batch = 0;
    std::size_t len = 0;
    Tensor features;
    std::vector<double> y;
    std::vector<int> inputs;
    std::vector<int> targets;
    /// 1 where the target is not PAD.
    std::vector<double> mask;
};

SeqBatch make_batch(const Tensor& features, std::span<const double> y, std::span<const TokenSeq> encoded,
                    std::span<const std::size_t> rows);

/// Convenience overload that encodes the targets itself.
SeqBatch make_batch(const Tensor& features, std::span<const double> y, std::span<const std::size_t> rows,
                    const ValueVocabulary& vocab, std::size_t max_len = 32);

/// Batch-mean Huber of the expected sequence value: per sample, the sum over
/// supervised positions of softmax(logits) . g against y.
Var soft_huber(Var logits, const SeqBatch& batch, const ValueVocabulary& vocab, double delta);

struct LossBreakdown {
    double total = 0.0;
    double ce1 = 0.0;
    double ce2 = 0.0;
    /// Soft-expectation Huber term that carries gradient.
    double huber = 0.0;
    /// Huber of the argmax-decoded sequence values (diagnostic only).
    double hard_huber = 0.0;
    std::size_t replaced = 0;
};

/// Teacher-forcing loss: sequence CE + lambda * Huber(soft expectation).
Var teacher_forcing_loss(const BoundParams& p, const SeqBatch& batch, const ModelConfig& model,
                         const ValueVocabulary& vocab, const TrainConfig& config, LossBreakdown* parts = nullptr);

/// Per-position choice for the second pass: true keeps the ground-truth input.
/// Position 0 (SOS) and PAD inputs always keep it; other positions draw Bernoulli(p).
std::vector<bool> draw_truth_mask(const SeqBatch& batch, double p, SplitMix64& rng);

/// Two-pass loss: 0.5 * (ce1 + ce2) + lambda * Huber(soft expectation of pass 2).
/// Replaced pass-2 inputs take the mixup embedding of pass-1 predictions.
Var clem_loss(const BoundParams& p, const SeqBatch& batch, const ModelConfig& model, const ValueVocabulary& vocab,
              const TrainConfig& config, const std::vector<bool>& keep_truth, LossBreakdown* parts = nullptr);

/// Huber loss of the linear head on raw targets.
Var vr_loss(const BoundParams& p, const Tensor& features, std::span<const double> y, const ModelConfig& model,
            double delta);
/// Mean over the batch of summed per-bucket BCE.
Var ordinal_loss(const BoundParams& p, const Tensor& features, std::span<const double> y, const ModelConfig& model,
                 const BucketScheme& scheme);

struct StepResult {
    LossBreakdown loss;
    double p = 1.0;
    std::vector<Tensor> grads;
};

StepResult train_step_teacher_forcing(const SeqBatch& batch, const ParamStore& params, const ModelConfig& model,
                                      const ValueVocabulary& vocab, const TrainConfig& config);
StepResult train_step_clem(const SeqBatch& batch, const ParamStore& params, const ModelConfig& model,
                           const ValueVocabulary& vocab, const TrainConfig& config, double p, SplitMix64& rng);

// ---- orchestration --------------------------------------------------------

struct LogRecord {
    std::size_t step = 0;
    double ce1 = 0.0;
    double ce2 = 0.0;
    double huber = 0.0;
    double p = 1.0;
    std::optional<double> val_mae;
    std::optional<double> val_xauc;
};

std::string to_json_line(const LogRecord& record);

struct TrainResult {
    /// Parameters from the evaluation with the lowest validation MAE.
    Checkpoint checkpoint;
    std::vector<LogRecord> log;
    std::size_t best_step = 0;
    double best_val_mae = 0.0;
};

/// Seeded training loop with a held-out validation split. `vocab` is needed
/// only by the generative head. Log records are also streamed to `log_out`.
/// A non-finite loss aborts with std::runtime_error.
TrainResult train(const Dataset& data, const ValueVocabulary* vocab, ModelConfig model, const TrainConfig& config,
                  std::ostream* log_out = nullptr);

}  // namespace genreg
