#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "genreg/tensor.h"

namespace genreg {

struct AdamOptions {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// Per-parameter first/second moments. Moments start at zero; step counts
/// completed updates.
struct AdamState {
    std::vector<Tensor> first_moment;
    std::vector<Tensor> second_moment;
    std::uint64_t step = 0;
};

/// One bias-corrected Adam update, in place. `params` and `grads` must align
/// element by element; the state is sized lazily on the first call.
void adam_step(std::span<Tensor* const> params, std::span<const Tensor> grads, AdamState& state,
               const AdamOptions& options);

}  // namespace genreg
