#pragma once

#include <complex>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "sdcn/tensor.hpp"

namespace sdcn {

enum class ClipLabel : std::uint8_t { interictal = 0, preictal = 1 };

/// Labeled multichannel recording; all channels share one length.
struct RawClip {
    std::string clip_id;
    ClipLabel label = ClipLabel::interictal;
    double sample_rate_hz = 400.0;
    std::vector<std::vector<float>> channels;

    std::size_t n_channels() const { return channels.size(); }
    std::size_t n_samples() const { return channels.empty() ? 0 : channels.front().size(); }
    void validate() const;
};

struct CwtConfig {
    std::size_t n_freqs = 100;
    double f_min_hz = 0.5;
    double f_max_hz = 50.0;
    double morlet_omega0 = 6.0;
    std::size_t time_decimation = 2;

    void validate(double sample_rate_hz) const;

    bool operator==(const CwtConfig&) const = default;
};

void to_json(nlohmann::json& j, const CwtConfig& c);
void from_json(const nlohmann::json& j, CwtConfig& c);

/// Preprocessed segment: values are (1, N_ch, H, W'), rows ordered as freqs_hz.
struct ScalogramTensor {
    Tensor4 values;
    std::vector<double> freqs_hz;
    std::size_t segment_index = 0;
    std::string clip_id;
    ClipLabel label = ClipLabel::interictal;
};

struct Segmentation {
    std::vector<RawClip> segments;
    std::size_t dropped_samples = 0;  // trailing remainder that did not fill a segment
};

/// Non-overlapping consecutive windows of segment_seconds. Throws ShapeError when the
/// clip is shorter than one segment.
Segmentation segment_clip(const RawClip& clip, double segment_seconds);

/// n_freqs log-spaced frequencies from f_max down to f_min, endpoints inclusive.
std::vector<double> frequency_grid(const CwtConfig& cfg);

/// Morlet scalogram engine for a fixed signal length. Wavelet spectra and FFT plans are
/// built once; magnitude() is safe to call concurrently.
class MorletCwt {
public:
    MorletCwt(const CwtConfig& cfg, double sample_rate_hz, std::size_t n_samples);
    ~MorletCwt();
    MorletCwt(const MorletCwt&) = delete;
    MorletCwt& operator=(const MorletCwt&) = delete;

    /// |CWT| sampled every time_decimation steps: H x ceil(n / decimation).
    BasicTensor2<float> magnitude(std::span<const float> signal) const;

    const std::vector<double>& freqs() const { return freqs_; }
    std::size_t output_width() const;
    /// Length in samples of the widest (lowest-frequency) truncated wavelet.
    std::size_t longest_support() const { return 2 * max_half_support_ + 1; }

private:
    struct Plans;

    CwtConfig cfg_;
    double fs_;
    std::size_t n_;
    std::size_t nfft_;
    std::size_t nfold_;
    std::size_t max_half_support_;
    std::vector<double> freqs_;
    std::vector<std::vector<std::complex<double>>> spectra_;  // per row, length nfft
    std::unique_ptr<Plans> plans_;
};

/// One-shot convenience wrapper around MorletCwt.
BasicTensor2<float> morlet_cwt_magnitude(std::span<const float> signal, const CwtConfig& cfg,
                                         double sample_rate_hz);

/// Per-channel CWT magnitudes stacked along channels, before normalization.
ScalogramTensor scalogram_magnitude(const RawClip& segment, const CwtConfig& cfg);

/// In place: x -> log(1 + x), then zero mean / unit variance per channel.
void normalize_scalogram(Tensor4& values);

/// scalogram_magnitude followed by normalize_scalogram.
ScalogramTensor build_scalogram(const RawClip& segment, const CwtConfig& cfg,
                                std::size_t segment_index = 0);

// ".clip" files: "CLP1", u32 n_channels, u32 n_samples, f32 sample_rate, u8 label,
// then channel-major f32 samples. All little-endian. clip_id is not stored.
void save_clip(const std::string& path, const RawClip& clip);
RawClip load_clip(const std::string& path, const std::string& clip_id);

}  // namespace sdcn
