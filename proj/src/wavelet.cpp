#include "sdcn/wavelet.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <mutex>
#include <numbers>
#include <string>

#include "fftw_lock.hpp"

namespace sdcn {

std::mutex& detail::fftw_planner_mutex() {
    static std::mutex m;
    return m;
}

namespace {

// Gaussian envelope truncated at this many standard deviations.
constexpr double kSupportSigmas = 5.0;

// Smallest 2^a 3^b 5^c >= n.
std::size_t fast_fft_size(std::size_t n) {
    for (std::size_t m = std::max<std::size_t>(n, 1);; ++m) {
        std::size_t r = m;
        for (std::size_t f : {2, 3, 5}) {
            while (r % f == 0) {
                r /= f;
            }
        }
        if (r == 1) {
            return m;
        }
    }
}

double scale_for(double freq_hz, double omega0) {
    return omega0 / (2.0 * std::numbers::pi * freq_hz);
}

}  // namespace

void RawClip::validate() const {
    if (!(sample_rate_hz > 0.0)) {
        throw ConfigError("clip " + clip_id + ": sample rate must be positive");
    }
    if (channels.empty()) {
        throw ShapeError("clip " + clip_id + ": no channels");
    }
    for (const auto& ch : channels) {
        if (ch.size() != channels.front().size()) {
            throw ShapeError("clip " + clip_id + ": channels differ in length");
        }
    }
}

void CwtConfig::validate(double sample_rate_hz) const {
    if (n_freqs < 2) {
        throw ConfigError("cwt: need at least 2 frequency bins");
    }
    if (!(f_min_hz > 0.0 && f_min_hz < f_max_hz && f_max_hz < sample_rate_hz / 2.0)) {
        throw ConfigError("cwt: require 0 < f_min < f_max < sample_rate/2");
    }
    if (time_decimation == 0) {
        throw ConfigError("cwt: time_decimation must be >= 1");
    }
    if (!(morlet_omega0 > 0.0)) {
        throw ConfigError("cwt: omega0 must be positive");
    }
}

void to_json(nlohmann::json& j, const CwtConfig& c) {
    j = nlohmann::json{{"n_freqs", c.n_freqs},
                       {"f_min_hz", c.f_min_hz},
                       {"f_max_hz", c.f_max_hz},
                       {"morlet_omega0", c.morlet_omega0},
                       {"time_decimation", c.time_decimation}};
}

void from_json(const nlohmann::json& j, CwtConfig& c) {
    c.n_freqs = j.value("n_freqs", c.n_freqs);
    c.f_min_hz = j.value("f_min_hz", c.f_min_hz);
    c.f_max_hz = j.value("f_max_hz", c.f_max_hz);
    c.morlet_omega0 = j.value("morlet_omega0", c.morlet_omega0);
    c.time_decimation = j.value("time_decimation", c.time_decimation);
}

Segmentation segment_clip(const RawClip& clip, double segment_seconds) {
    clip.validate();
    if (!(segment_seconds > 0.0)) {
        throw ConfigError("segment length must be positive");
    }
    const auto seg_len = static_cast<std::size_t>(std::llround(segment_seconds * clip.sample_rate_hz));
    const std::size_t n = clip.n_samples();
    if (seg_len == 0 || seg_len > n) {
        throw ShapeError("clip " + clip.clip_id + ": segment of " + std::to_string(seg_len) +
                         " samples is longer than the clip (" + std::to_string(n) + ")");
    }
    Segmentation out;
    const std::size_t count = n / seg_len;
    out.dropped_samples = n - count * seg_len;
    out.segments.reserve(count);
    for (std::size_t s = 0; s < count; ++s) {
        RawClip seg;
        seg.clip_id = clip.clip_id;
        seg.label = clip.label;
        seg.sample_rate_hz = clip.sample_rate_hz;
        seg.channels.reserve(clip.n_channels());
        for (const auto& ch : clip.channels) {
            const auto first = ch.begin() + static_cast<std::ptrdiff_t>(s * seg_len);
            seg.channels.emplace_back(first, first + static_cast<std::ptrdiff_t>(seg_len));
        }
        out.segments.push_back(std::move(seg));
    }
    return out;
}

std::vector<double> frequency_grid(const CwtConfig& cfg) {
    if (cfg.n_freqs < 2 || !(cfg.f_min_hz > 0.0 && cfg.f_min_hz < cfg.f_max_hz)) {
        throw ConfigError("frequency_grid: invalid range or bin count");
    }
    std::vector<double> freqs(cfg.n_freqs);
    const double lo = std::log(cfg.f_min_hz);
    const double hi = std::log(cfg.f_max_hz);
    const double last = static_cast<double>(cfg.n_freqs - 1);
    for (std::size_t i = 0; i < cfg.n_freqs; ++i) {
        freqs[i] = std::exp(hi + (lo - hi) * static_cast<double>(i) / last);
    }
    freqs.front() = cfg.f_max_hz;
    freqs.back() = cfg.f_min_hz;
    return freqs;
}

struct MorletCwt::Plans {
    fftw_plan forward = nullptr;   // size nfft
    fftw_plan inverse = nullptr;   // size nfold

    ~Plans() {
        std::lock_guard lock(detail::fftw_planner_mutex());
        if (forward) fftw_destroy_plan(forward);
        if (inverse) fftw_destroy_plan(inverse);
    }
};

MorletCwt::MorletCwt(const CwtConfig& cfg, double sample_rate_hz, std::size_t n_samples)
    : cfg_(cfg), fs_(sample_rate_hz), n_(n_samples) {
    cfg_.validate(fs_);
    freqs_ = frequency_grid(cfg_);

    max_half_support_ = 0;
    std::vector<std::size_t> half(freqs_.size());
    for (std::size_t row = 0; row < freqs_.size(); ++row) {
        const double s = scale_for(freqs_[row], cfg_.morlet_omega0);
        half[row] = static_cast<std::size_t>(std::ceil(kSupportSigmas * s * fs_));
        max_half_support_ = std::max(max_half_support_, half[row]);
    }
    if (n_ < longest_support()) {
        throw ShapeError("cwt: signal of " + std::to_string(n_) +
                         " samples is shorter than the longest wavelet (" +
                         std::to_string(longest_support()) + " samples)");
    }

    // Linear (not circular) convolution needs nfft >= n + half support. nfft is a multiple
    // of the decimation so decimated outputs come from a folded spectrum of size nfold.
    const std::size_t dec = cfg_.time_decimation;
    nfold_ = fast_fft_size((n_ + 2 * max_half_support_ + dec - 1) / dec);
    nfft_ = nfold_ * dec;

    std::vector<std::complex<double>> buf(nfft_);
    {
        std::lock_guard lock(detail::fftw_planner_mutex());
        plans_ = std::make_unique<Plans>();
        auto* data = reinterpret_cast<fftw_complex*>(buf.data());
        plans_->forward = fftw_plan_dft_1d(static_cast<int>(nfft_), data, data, FFTW_FORWARD, FFTW_ESTIMATE);
        plans_->inverse = fftw_plan_dft_1d(static_cast<int>(nfold_), data, data, FFTW_BACKWARD, FFTW_ESTIMATE);
    }

    // Wavelet spectra from the truncated, discretely L2-normalized time-domain wavelet
    // centered at index 0 (negative taps wrapped to the end).
    spectra_.resize(freqs_.size());
    for (std::size_t row = 0; row < freqs_.size(); ++row) {
        const double s = scale_for(freqs_[row], cfg_.morlet_omega0);
        std::fill(buf.begin(), buf.end(), std::complex<double>{});
        const auto m = static_cast<std::ptrdiff_t>(half[row]);
        double energy = 0.0;
        for (std::ptrdiff_t t = -m; t <= m; ++t) {
            const double u = static_cast<double>(t) / (fs_ * s);
            const double env = std::exp(-0.5 * u * u);
            energy += env * env;
        }
        const double norm = 1.0 / std::sqrt(energy);
        for (std::ptrdiff_t t = -m; t <= m; ++t) {
            const double u = static_cast<double>(t) / (fs_ * s);
            const double env = norm * std::exp(-0.5 * u * u);
            const std::size_t idx = t >= 0 ? static_cast<std::size_t>(t) : nfft_ - static_cast<std::size_t>(-t);
            buf[idx] = std::polar(env, cfg_.morlet_omega0 * u);
        }
        auto* data = reinterpret_cast<fftw_complex*>(buf.data());
        fftw_execute_dft(plans_->forward, data, data);
        spectra_[row] = buf;
    }
}

MorletCwt::~MorletCwt() = default;

std::size_t MorletCwt::output_width() const {
    return (n_ + cfg_.time_decimation - 1) / cfg_.time_decimation;
}

BasicTensor2<float> MorletCwt::magnitude(std::span<const float> signal) const {
    if (signal.size() != n_) {
        throw ShapeError("cwt: engine built for " + std::to_string(n_) + " samples, got " +
                         std::to_string(signal.size()));
    }
    const std::size_t width = output_width();
    const std::size_t dec = cfg_.time_decimation;
    BasicTensor2<float> out(freqs_.size(), width);

    std::vector<std::complex<double>> spectrum(nfft_);
    for (std::size_t i = 0; i < n_; ++i) {
        spectrum[i] = signal[i];
    }
    auto* sdata = reinterpret_cast<fftw_complex*>(spectrum.data());
    fftw_execute_dft(plans_->forward, sdata, sdata);

    std::vector<std::complex<double>> folded(nfold_);
    auto* fdata = reinterpret_cast<fftw_complex*>(folded.data());
    const double inv_n = 1.0 / static_cast<double>(nfft_);
    for (std::size_t row = 0; row < freqs_.size(); ++row) {
        // y[dec*m] = IDFT_nfold(sum_q Y[k + q*nfold])[m] / nfft
        const auto& psi = spectra_[row];
        std::fill(folded.begin(), folded.end(), std::complex<double>{});
        for (std::size_t q = 0; q < dec; ++q) {
            const std::size_t base = q * nfold_;
            for (std::size_t kk = 0; kk < nfold_; ++kk) {
                folded[kk] += spectrum[base + kk] * psi[base + kk];
            }
        }
        fftw_execute_dft(plans_->inverse, fdata, fdata);
        auto dst = out.row(row);
        for (std::size_t m = 0; m < width; ++m) {
            dst[m] = static_cast<float>(std::abs(folded[m]) * inv_n);
        }
    }
    return out;
}

BasicTensor2<float> morlet_cwt_magnitude(std::span<const float> signal, const CwtConfig& cfg,
                                         double sample_rate_hz) {
    return MorletCwt(cfg, sample_rate_hz, signal.size()).magnitude(signal);
}

ScalogramTensor scalogram_magnitude(const RawClip& segment, const CwtConfig& cfg) {
    segment.validate();
    const MorletCwt cwt(cfg, segment.sample_rate_hz, segment.n_samples());
    const std::size_t h = cwt.freqs().size();
    const std::size_t w = cwt.output_width();
    ScalogramTensor out;
    out.values = Tensor4(1, segment.n_channels(), h, w);
    out.freqs_hz = cwt.freqs();
    out.clip_id = segment.clip_id;
    out.label = segment.label;

    const auto channels = static_cast<std::ptrdiff_t>(segment.n_channels());
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t c = 0; c < channels; ++c) {
        const auto ch = static_cast<std::size_t>(c);
        const auto mag = cwt.magnitude(segment.channels[ch]);
        std::copy(mag.span().begin(), mag.span().end(), out.values.plane(0, ch).begin());
    }
    return out;
}

void normalize_scalogram(Tensor4& values) {
    const Shape4 s = values.shape();
    for (std::size_t b = 0; b < s.b; ++b) {
        for (std::size_t c = 0; c < s.c; ++c) {
            auto plane = values.plane(b, c);
            double sum = 0.0;
            for (float& v : plane) {
                v = static_cast<float>(std::log1p(static_cast<double>(v)));
                sum += v;
            }
            const double mean = sum / static_cast<double>(plane.size());
            double var = 0.0;
            for (float v : plane) {
                const double d = v - mean;
                var += d * d;
            }
            var /= static_cast<double>(plane.size());
            // A constant channel (e.g. a flat-lined electrode) is centered but not scaled.
            const double inv_std = var > 0.0 ? 1.0 / std::sqrt(var) : 1.0;
            for (float& v : plane) {
                v = static_cast<float>((v - mean) * inv_std);
            }
        }
    }
}

ScalogramTensor build_scalogram(const RawClip& segment, const CwtConfig& cfg,
                                std::size_t segment_index) {
    ScalogramTensor out = scalogram_magnitude(segment, cfg);
    normalize_scalogram(out.values);
    out.segment_index = segment_index;
    return out;
}

}  // namespace sdcn
