#include "sdcn/synth.hpp"

#include <fftw3.h>

#include <cmath>
#include <complex>
#include <cstdio>
#include <mutex>
#include <random>

#include "fftw_lock.hpp"
#include "sdcn/error.hpp"

namespace sdcn {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

// Keeps only the spectral content at or below cutoff_hz.
std::vector<double> lowpass(const std::vector<double>& x, double fs, double cutoff_hz) {
    const std::size_t n = x.size();
    std::vector<double> in(x);
    std::vector<std::complex<double>> spec(n / 2 + 1);
    std::vector<double> out(n);
    fftw_plan fwd;
    fftw_plan inv;
    {
        std::lock_guard lock(detail::fftw_planner_mutex());
        fwd = fftw_plan_dft_r2c_1d(static_cast<int>(n), in.data(),
                                   reinterpret_cast<fftw_complex*>(spec.data()), FFTW_ESTIMATE);
        inv = fftw_plan_dft_c2r_1d(static_cast<int>(n), reinterpret_cast<fftw_complex*>(spec.data()),
                                   out.data(), FFTW_ESTIMATE);
    }
    fftw_execute(fwd);
    for (std::size_t k = 0; k < spec.size(); ++k) {
        const double f = static_cast<double>(k) * fs / static_cast<double>(n);
        spec[k] = f <= cutoff_hz ? spec[k] / static_cast<double>(n) : std::complex<double>{};
    }
    fftw_execute(inv);
    {
        std::lock_guard lock(detail::fftw_planner_mutex());
        fftw_destroy_plan(fwd);
        fftw_destroy_plan(inv);
    }
    return out;
}

}  // namespace

void SynthConfig::validate() const {
    if (n_clips_per_class == 0) {
        throw ConfigError("synth: need at least one clip per class");
    }
    if (!(clip_seconds > 0.0 && sample_rate_hz > 0.0)) {
        throw ConfigError("synth: durations and sample rate must be positive");
    }
    if (n_channels == 0) {
        throw ConfigError("synth: need at least one channel");
    }
    if (!(gain >= 1.0)) {
        throw ConfigError("synth: gain must be >= 1");
    }
    if (!(noise_level > 0.0)) {
        throw ConfigError("synth: noise level must be positive");
    }
    if (!(band_hz > 0.0 && band_hz < sample_rate_hz / 2.0)) {
        throw ConfigError("synth: band edge must lie in (0, sample_rate/2)");
    }
}

void to_json(nlohmann::json& j, const SynthConfig& c) {
    j = nlohmann::json{{"n_clips_per_class", c.n_clips_per_class},
                       {"clip_seconds", c.clip_seconds},
                       {"sample_rate_hz", c.sample_rate_hz},
                       {"n_channels", c.n_channels},
                       {"gain", c.gain},
                       {"noise_level", c.noise_level},
                       {"band_hz", c.band_hz},
                       {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, SynthConfig& c) {
    c.n_clips_per_class = j.value("n_clips_per_class", c.n_clips_per_class);
    c.clip_seconds = j.value("clip_seconds", c.clip_seconds);
    c.sample_rate_hz = j.value("sample_rate_hz", c.sample_rate_hz);
    c.n_channels = j.value("n_channels", c.n_channels);
    c.gain = j.value("gain", c.gain);
    c.noise_level = j.value("noise_level", c.noise_level);
    c.band_hz = j.value("band_hz", c.band_hz);
    c.seed = j.value("seed", c.seed);
}

std::vector<RawClip> gen_synthetic_dataset(const SynthConfig& cfg) {
    cfg.validate();
    const auto n = static_cast<std::size_t>(std::llround(cfg.clip_seconds * cfg.sample_rate_hz));
    std::vector<RawClip> clips(2 * cfg.n_clips_per_class);

    const auto total = static_cast<std::ptrdiff_t>(clips.size());
#pragma omp parallel for schedule(dynamic)
    for (std::ptrdiff_t idx = 0; idx < total; ++idx) {
        const auto i = static_cast<std::size_t>(idx);
        const bool preictal = i % 2 == 1;
        RawClip& clip = clips[i];
        char id[64];
        std::snprintf(id, sizeof id, "synth_%s_%03zu", preictal ? "preictal" : "interictal", i / 2);
        clip.clip_id = id;
        clip.label = preictal ? ClipLabel::preictal : ClipLabel::interictal;
        clip.sample_rate_hz = cfg.sample_rate_hz;

        std::mt19937_64 rng(splitmix64(cfg.seed ^ splitmix64(i)));
        std::normal_distribution<double> normal(0.0, cfg.noise_level);
        clip.channels.resize(cfg.n_channels);
        for (auto& ch : clip.channels) {
            std::vector<double> x(n);
            for (double& v : x) {
                v = normal(rng);
            }
            if (preictal && cfg.gain != 1.0) {
                const std::vector<double> low = lowpass(x, cfg.sample_rate_hz, cfg.band_hz);
                for (std::size_t t = 0; t < n; ++t) {
                    x[t] += (cfg.gain - 1.0) * low[t];
                }
            }
            ch.assign(x.begin(), x.end());
        }
    }
    return clips;
}

}  // namespace sdcn
