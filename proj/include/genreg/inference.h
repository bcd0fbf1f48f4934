#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "genreg/checkpoint.h"
#include "genreg/data.h"
#include "genreg/metrics.h"
#include "genreg/model.h"
#include "genreg/vocab.h"

namespace genreg {

enum class Termination { eos, max_len };

std::string to_string(Termination t);

struct Prediction {
    double y_hat = 0.0;
    /// Generated value tokens, without SOS and EOS.
    std::vector<int> token_ids;
    Termination terminated_by = Termination::eos;
    /// Token values never increase along the sequence.
    bool monotone = true;
};

struct PredictOptions {
    bool apply_mixup = true;
    /// 0 means the config's max_len.
    std::size_t max_len = 0;
    /// Samples decoded together; results do not depend on it.
    std::size_t chunk_size = 256;
};

/// Greedy decoding of standardized feature rows. Each step takes the argmax
/// over EOS and the value tokens and feeds back the window-mixup embedding
/// of the chosen token (or its raw embedding when mixup is off).
std::vector<Prediction> predict_batch(const Tensor& features, const ParamStore& params, const ModelConfig& config,
                                      const ValueVocabulary& vocab, const PredictOptions& options = {});

Prediction predict(std::span<const double> x, const ParamStore& params, const ModelConfig& config,
                   const ValueVocabulary& vocab, const PredictOptions& options = {});

/// Argmax over EOS and the value ids of one logit row; lowest id wins ties.
int greedy_token(std::span<const double> logits, const ValueVocabulary& vocab);

/// Point predictions for raw (unstandardized) features with any head.
/// For the generative head `details` receives the decoded sequences.
std::vector<double> predict_values(const Checkpoint& ckpt, const Tensor& raw_features,
                                   std::vector<Prediction>* details = nullptr,
                                   const PredictOptions& options = {});

struct CheckpointEvaluation {
    EvalReport report;
    std::vector<double> predictions;
    /// Generative head only.
    std::vector<Prediction> details;
};

/// Predicts every row of a labelled dataset and summarizes the errors.
/// Throws when the feature count disagrees with the checkpoint.
CheckpointEvaluation evaluate_checkpoint(const Checkpoint& ckpt, const Dataset& data,
                                         const PredictOptions& options = {});

}  // namespace genreg
