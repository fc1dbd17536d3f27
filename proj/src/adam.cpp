#include "sdcn/adam.hpp"

#include <cmath>

namespace sdcn {

void AdamConfig::validate() const {
    if (!(learning_rate > 0.0)) {
        throw ConfigError("adam: learning rate must be positive");
    }
    if (!(beta1 > 0.0 && beta1 < 1.0 && beta2 > 0.0 && beta2 < 1.0)) {
        throw ConfigError("adam: betas must lie in (0, 1)");
    }
    if (!(epsilon > 0.0)) {
        throw ConfigError("adam: epsilon must be positive");
    }
}

void adam_step(std::span<const std::span<float>> params, std::span<const std::span<const float>> grads,
               AdamState& state, const AdamConfig& cfg) {
    cfg.validate();
    if (params.size() != grads.size()) {
        throw ShapeError("adam: parameter and gradient tensor counts differ");
    }
    if (state.m.empty()) {
        for (const auto& p : params) {
            state.m.emplace_back(p.size(), 0.0f);
            state.v.emplace_back(p.size(), 0.0f);
        }
    }
    if (state.m.size() != params.size()) {
        throw ShapeError("adam: state was built for a different parameter set");
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (params[i].size() != grads[i].size() || state.m[i].size() != params[i].size()) {
            throw ShapeError("adam: tensor " + std::to_string(i) + " size mismatch");
        }
    }

    ++state.t;
    const double t = static_cast<double>(state.t);
    const auto b1 = static_cast<float>(cfg.beta1);
    const auto b2 = static_cast<float>(cfg.beta2);
    const auto m_corr = static_cast<float>(1.0 / (1.0 - std::pow(cfg.beta1, t)));
    const auto v_corr = static_cast<float>(1.0 / (1.0 - std::pow(cfg.beta2, t)));
    const auto lr = static_cast<float>(cfg.learning_rate);
    const auto eps = static_cast<float>(cfg.epsilon);

    for (std::size_t i = 0; i < params.size(); ++i) {
        float* theta = params[i].data();
        const float* g = grads[i].data();
        float* m = state.m[i].data();
        float* v = state.v[i].data();
        const auto n = static_cast<std::ptrdiff_t>(params[i].size());
#pragma omp parallel for schedule(static)
        for (std::ptrdiff_t j = 0; j < n; ++j) {
            m[j] = b1 * m[j] + (1.0f - b1) * g[j];
            v[j] = b2 * v[j] + (1.0f - b2) * g[j] * g[j];
            const float m_hat = m[j] * m_corr;
            const float v_hat = v[j] * v_corr;
            theta[j] -= lr * m_hat / (std::sqrt(v_hat) + eps);
        }
    }
}

void adam_step(SdcnModel& model, const SdcnParams& grads, AdamState& state, const AdamConfig& cfg) {
    std::vector<std::span<float>> p;
    std::vector<std::span<const float>> g;
    model.mutable_params().visit([&p](const std::string&, const Shape4&, std::span<float> s) { p.push_back(s); });
    grads.visit([&g](const std::string&, const Shape4&, std::span<const float> s) { g.push_back(s); });
    adam_step(p, g, state, cfg);
}

}  // namespace sdcn
