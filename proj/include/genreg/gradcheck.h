#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "genreg/autograd.h"

namespace genreg {

/// Builds a scalar loss on `graph` from leaves bound to `params` (in order).
using LossBuilder = std::function<Var(Graph& graph, const std::vector<Var>& params)>;

struct GradCheckOptions {
    double step = 1e-5;
    /// Coordinates sampled across all parameters; 0 checks every coordinate.
    std::size_t max_coordinates = 0;
    std::uint64_t seed = 1;
};

/// max over checked coordinates of |analytic - central difference| / max(1, |analytic|).
double grad_check(const LossBuilder& build, std::vector<Tensor> params, const GradCheckOptions& options = {});

}  // namespace genreg
