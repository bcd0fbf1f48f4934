#include "genreg/gradcheck.h"

#include "genreg/random.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <utility>

namespace genreg {

namespace {

double evaluate(const LossBuilder& build, const std::vector<Tensor>& params) {
    Graph g;
    std::vector<Var> vars;
    vars.reserve(params.size());
    for (const Tensor& p : params) {
        vars.push_back(g.parameter(p));
    }
    return build(g, vars).value().item();
}

}  // namespace

double grad_check(const LossBuilder& build, std::vector<Tensor> params, const GradCheckOptions& options) {
    std::vector<Tensor> analytic;
    {
        Graph g;
        std::vector<Var> vars;
        for (const Tensor& p : params) {
            vars.push_back(g.parameter(p));
        }
        Var loss = build(g, vars);
        g.backward(loss);
        for (Var v : vars) {
            analytic.push_back(g.grad(v));
        }
    }

    std::vector<std::pair<std::size_t, std::size_t>> coords;
    for (std::size_t i = 0; i < params.size(); ++i) {
        for (std::size_t j = 0; j < params[i].size(); ++j) {
            coords.emplace_back(i, j);
        }
    }
    if (options.max_coordinates != 0 && coords.size() > options.max_coordinates) {
        SplitMix64 rng(options.seed);
        rng.shuffle(coords);
        coords.resize(options.max_coordinates);
    }

    double worst = 0.0;
    for (const auto& [i, j] : coords) {
        const double original = params[i][j];
        params[i][j] = original + options.step;
        const double plus = evaluate(build, params);
        params[i][j] = original - options.step;
        const double minus = evaluate(build, params);
        params[i][j] = original;
        const double numeric = (plus - minus) / (2.0 * options.step);
        const double exact = analytic[i][j];
        worst = std::max(worst, std::abs(exact - numeric) / std::max(1.0, std::abs(exact)));
    }
    return worst;
}

}  // namespace genreg
