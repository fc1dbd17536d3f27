#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "sdcn/model.hpp"

namespace sdcn {

struct AdamConfig {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;

    void validate() const;
};

struct AdamState {
    std::vector<std::vector<float>> m;
    std::vector<std::vector<float>> v;
    std::uint64_t t = 0;
};

/// One bias-corrected Adam update. Moments are allocated on the first call.
void adam_step(std::span<const std::span<float>> params, std::span<const std::span<const float>> grads,
               AdamState& state, const AdamConfig& cfg);

/// Applies adam_step across every tensor of a model, in declaration order.
void adam_step(SdcnModel& model, const SdcnParams& grads, AdamState& state, const AdamConfig& cfg);

}  // namespace sdcn
