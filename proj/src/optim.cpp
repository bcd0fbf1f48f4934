#include "genreg/optim.h"

#include <cmath>
#include <stdexcept>

namespace genreg {

void adam_step(std::span<Tensor* const> params, std::span<const Tensor> grads, AdamState& state,
               const AdamOptions& options) {
    if (params.size() != grads.size()) {
        throw std::invalid_argument("adam: " + std::to_string(params.size()) + " parameters but " +
                                    std::to_string(grads.size()) + " gradients");
    }
    if (state.first_moment.empty()) {
        for (const Tensor* p : params) {
            state.first_moment.emplace_back(p->rows(), p->cols());
            state.second_moment.emplace_back(p->rows(), p->cols());
        }
    }
    if (state.first_moment.size() != params.size()) {
        throw std::invalid_argument("adam: optimizer state was built for a different parameter list");
    }
    ++state.step;
    const double t = static_cast<double>(state.step);
    const double correction1 = 1.0 - std::pow(options.beta1, t);
    const double correction2 = 1.0 - std::pow(options.beta2, t);
    for (std::size_t i = 0; i < params.size(); ++i) {
        Tensor& p = *params[i];
        const Tensor& g = grads[i];
        Tensor& m = state.first_moment[i];
        Tensor& v = state.second_moment[i];
        if (!p.same_shape(g) || !p.same_shape(m)) {
            throw std::invalid_argument("adam: shape mismatch for parameter " + std::to_string(i) + ": " +
                                        p.shape_string() + " vs gradient " + g.shape_string());
        }
        for (std::size_t j = 0; j < p.size(); ++j) {
            m[j] = options.beta1 * m[j] + (1.0 - options.beta1) * g[j];
            v[j] = options.beta2 * v[j] + (1.0 - options.beta2) * g[j] * g[j];
            const double m_hat = m[j] / correction1;
            const double v_hat = v[j] / correction2;
            p[j] -= options.lr * m_hat / (std::sqrt(v_hat) + options.eps);
        }
    }
}

}  // namespace genreg
