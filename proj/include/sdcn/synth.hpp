#pragma once

#include <cstdint>
#include <vector>

#include <json.hpp>

#include "sdcn/wavelet.hpp"

namespace sdcn {

/// Synthetic EEG-like clips. Interictal: white Gaussian noise. Preictal: the same kind of
/// noise with its 0..band_hz component amplified by `gain` (extra power in the low band).
struct SynthConfig {
    std::size_t n_clips_per_class = 8;
    double clip_seconds = 600.0;
    double sample_rate_hz = 400.0;
    std::size_t n_channels = 4;
    double gain = 2.0;
    double noise_level = 1.0;
    double band_hz = 50.0;
    std::uint64_t seed = 7;

    void validate() const;
};

void to_json(nlohmann::json& j, const SynthConfig& c);
void from_json(const nlohmann::json& j, SynthConfig& c);

/// Balanced dataset ordered interictal_000, preictal_000, interictal_001, ...
/// Deterministic in cfg (each clip has its own seed derived from cfg.seed and its index).
std::vector<RawClip> gen_synthetic_dataset(const SynthConfig& cfg);

}  // namespace sdcn
