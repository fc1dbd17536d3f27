// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <functional>
#include <iostream>
#include <numbers>
#include <numeric>
#include <set>
#include <sstream>
#include <string>

#include "helpers.hpp"
#include "model_oracle.hpp"
#include "oracles.hpp"
#include "sdcn/metrics.hpp"
#include "sdcn/model.hpp"
#include "sdcn/sdconv.hpp"
#include "sdcn/synth.hpp"
#include "sdcn/train.hpp"
#include "sdcn/wavelet.hpp"

using namespace sdcn;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* f, double a, double b = 0.0, double c = 0.0, double d = 0.0) {
    char buf[256];
    std::snprintf(buf, sizeof buf, f, a, b, c, d);
    return buf;
}

std::size_t pick(std::mt19937_64& rng, std::size_t lo, std::size_t hi) {
    return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

template <typename T>
BasicConvParams<T> random_params(const ConvSpec& spec, std::mt19937_64& rng) {
    auto p = make_conv_params<T>(spec);
    const auto w = oracle::normals(p.weights.size(), rng);
    std::copy(w.begin(), w.end(), p.weights.span().begin());
    const auto b = oracle::normals(p.bias.size(), rng);
    std::copy(b.begin(), b.end(), p.bias.begin());
    return p;
}

template <typename T>
std::vector<double> oracle_forward(const BasicTensor4<T>& x, const ConvSpec& spec, const BasicConvParams<T>& p) {
    oracle::Dims out;
    return oracle::conv(testing::as_double(x), testing::dims(x.shape()), testing::as_double(p.weights),
                        spec.out_channels, spec.k, spec.k, spec.dilation.h, spec.dilation.w, spec.pad_h(),
                        spec.pad_w(), testing::as_double<T>(std::span<const T>(p.bias)), out);
}

ConvSpec random_spec(std::mt19937_64& rng, bool any_padding) {
    static const std::size_t dws[] = {1, 2, 4, 8, 16};
    ConvSpec s;
    s.k = pick(rng, 0, 1) ? 5 : 3;
    s.dilation = {pick(rng, 1, 2), dws[pick(rng, 0, 4)]};
    s.in_channels = pick(rng, 1, 3);
    s.out_channels = pick(rng, 1, 3);
    s.padding = any_padding && pick(rng, 0, 3) == 0 ? Padding::valid : Padding::same;
    return s;
}

Shape4 random_input(const ConvSpec& s, std::mt19937_64& rng) {
    const auto rf = receptive_field(s.k, s.dilation);
    return {pick(rng, 1, 2), s.in_channels, rf.h + pick(rng, 0, 6), rf.w + pick(rng, 0, 10)};
}

// ---------------------------------------------------------------------------

Outcome receptive_field_criterion() {
    if (!(receptive_field(5, {2, 16}) == ReceptiveField{9, 65})) {
        return {false, "receptive_field(5, [2,16]) != 9x65"};
    }
    // One valid-padded output's input gradient is nonzero exactly on its k^2 taps, whose
    // bounding box is the receptive field.
    std::mt19937_64 rng(101);
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t k = 2 * pick(rng, 1, 3) + 1;
        const DilationVector d{pick(rng, 1, 4), pick(rng, 1, 16)};
        const auto rf = receptive_field(k, d);
        if (rf.h != (k - 1) * d.h + 1 || rf.w != (k - 1) * d.w + 1) {
            return {false, "formula mismatch"};
        }
        ConvSpec spec{k, d, 1, 1, Padding::valid};
        const auto p = random_params<double>(spec, rng);
        const Tensor4d x(1, 1, rf.h + 3, rf.w + 5, 0.0);
        Tensor4d g(spec.output_shape(x.shape()), 0.0);
        const std::size_t oy = pick(rng, 0, 3), ox = pick(rng, 0, 5);
        g(0, 0, oy, ox) = 1.0;
        const auto gx = sdconv_backward(x, spec, p, g).grad_x;
        std::size_t y0 = SIZE_MAX, y1 = 0, x0 = SIZE_MAX, x1 = 0, nonzero = 0;
        for (std::size_t yy = 0; yy < gx.shape().h; ++yy)
            for (std::size_t xx = 0; xx < gx.shape().w; ++xx)
                if (gx(0, 0, yy, xx) != 0.0) {
                    ++nonzero;
                    y0 = std::min(y0, yy);
                    y1 = std::max(y1, yy);
                    x0 = std::min(x0, xx);
                    x1 = std::max(x1, xx);
                }
        if (nonzero != k * k || y0 != oy || x0 != ox || y1 - y0 + 1 != rf.h || x1 - x0 + 1 != rf.w) {
            return {false, "probe " + std::to_string(trial) + ": support " + std::to_string(y1 - y0 + 1) + "x" +
                               std::to_string(x1 - x0 + 1) + ", expected " + std::to_string(rf.h) + "x" +
                               std::to_string(rf.w)};
        }
    }
    return {true, "5,[2,16] -> 9x65; 20/20 gradient-support probes match"};
}

Outcome oracle_equivalence_criterion() {
    std::mt19937_64 rng(102);
    double worst = 0.0;
    for (int trial = 0; trial < 50; ++trial) {
        const ConvSpec spec = random_spec(rng, false);
        const auto x = testing::random_tensor<float>(random_input(spec, rng), rng);
        const auto p = random_params<float>(spec, rng);
        // Zero-expanded kernel built here, independently of the library's expand_kernel.
        const auto rf = receptive_field(spec.k, spec.dilation);
        std::vector<double> big(spec.out_channels * spec.in_channels * rf.h * rf.w, 0.0);
        for (std::size_t o = 0; o < spec.out_channels; ++o)
            for (std::size_t c = 0; c < spec.in_channels; ++c)
                for (std::size_t i = 0; i < spec.k; ++i)
                    for (std::size_t j = 0; j < spec.k; ++j)
                        big[((o * spec.in_channels + c) * rf.h + i * spec.dilation.h) * rf.w + j * spec.dilation.w] =
                            p.weights(o, c, i, j);
        oracle::Dims out;
        const auto want = oracle::conv(testing::as_double(x), testing::dims(x.shape()), big, spec.out_channels,
                                       rf.h, rf.w, 1, 1, (rf.h - 1) / 2, (rf.w - 1) / 2,
                                       testing::as_double<float>(std::span<const float>(p.bias)), out);
        worst = std::max(worst, testing::max_abs_diff(sdconv_forward(x, spec, p).span(), want));
    }
    return {worst <= 1e-5, fmt("50 cases, max |diff| %.2e (limit 1e-5)", worst)};
}

// Largest relative error of sdconv_backward<T> against central differences of the double
// oracle, over sampled input, weight and bias entries of 20 random configurations.
template <typename T>
double conv_gradient_error(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    double worst = 0.0;
    for (int trial = 0; trial < 20; ++trial) {
        const ConvSpec spec = random_spec(rng, true);
        auto x = testing::random_tensor<T>(random_input(spec, rng), rng);
        auto p = random_params<T>(spec, rng);
        const auto r = testing::random_tensor<T>(spec.output_shape(x.shape()), rng);
        const auto g = sdconv_backward(x, spec, p, r);

        auto xd = testing::as_double(x);
        auto wd = testing::as_double(p.weights);
        auto bd = testing::as_double<T>(std::span<const T>(p.bias));
        const auto rd = testing::as_double(r);
        const auto loss = [&] {
            oracle::Dims out;
            const auto y = oracle::conv(xd, testing::dims(x.shape()), wd, spec.out_channels, spec.k, spec.k,
                                        spec.dilation.h, spec.dilation.w, spec.pad_h(), spec.pad_w(), bd, out);
            double s = 0.0;
            for (std::size_t i = 0; i < y.size(); ++i) s += y[i] * rd[i];
            return s;
        };
        const auto fd = [&](double& v) {
            const double saved = v;
            v = saved + 1e-3;
            const double up = loss();
            v = saved - 1e-3;
            const double down = loss();
            v = saved;
            return (up - down) / 2e-3;
        };
        for (int s = 0; s < 12; ++s) {
            const std::size_t i = pick(rng, 0, xd.size() - 1);
            worst = std::max(worst, oracle::rel_err(g.grad_x[i], fd(xd[i]), 1e-6));
            const std::size_t j = pick(rng, 0, wd.size() - 1);
            worst = std::max(worst, oracle::rel_err(g.grad_w[j], fd(wd[j]), 1e-6));
        }
        for (std::size_t i = 0; i < bd.size(); ++i) {
            worst = std::max(worst, oracle::rel_err(g.grad_b[i], fd(bd[i]), 1e-6));
        }
    }
    return worst;
}

// Tiny two-path model with small nonzero biases so ReLU inputs do not sit exactly at 0.
SdcnModel jittered_tiny(std::uint64_t seed) {
    SdcnModel m = init_model(SdcnConfig::tiny(), seed);
    std::mt19937_64 rng(seed + 100);
    std::normal_distribution<float> d(0.0f, 0.1f);
    m.mutable_params().visit([&](const std::string& name, const Shape4&, std::span<float> v) {
        if (name.ends_with(".bias"))
            for (float& b : v) b = d(rng);
    });
    return m;
}

double model_gradient_error(std::uint64_t seed) {
    const auto m = jittered_tiny(seed);
    std::mt19937_64 rng(seed + 1);
    const auto x = testing::random_tensor<float>({3, 2, 16, 16}, rng);
    const auto u = oracle::normals(3, rng);
    ForwardCache cache;
    model_forward(x, m, &cache);
    const auto grads = oracle::flatten(model_backward(m, cache, u));
    auto flat = oracle::flatten(m.params());
    const auto xd = testing::as_double(x);
    const auto objective = [&] {
        const auto p = oracle::model_probs(m.config(), flat, xd, 3);
        return u[0] * p[0] + u[1] * p[1] + u[2] * p[2];
    };
    double worst = 0.0;
    std::size_t checked = 0, kinked = 0;
    while (checked < 50 && kinked < 100) {
        const std::size_t t = pick(rng, 0, flat.size() - 1);
        const std::size_t i = pick(rng, 0, flat[t].size() - 1);
        const double saved = flat[t][i];
        const auto diff = [&](double h) {
            flat[t][i] = saved + h;
            const double up = objective();
            flat[t][i] = saved - h;
            const double down = objective();
            flat[t][i] = saved;
            return (up - down) / (2 * h);
        };
        const double a = diff(1e-5), b = diff(5e-6);
        if (oracle::rel_err(a, b, 1e-8) > 1e-4) {  // ReLU or pool kink inside the stencil
            ++kinked;
            continue;
        }
        worst = std::max(worst, oracle::rel_err(grads[t][i], b, 1e-6));
        ++checked;
    }
    return checked == 50 ? worst : 1.0;
}

Outcome gradient_criterion() {
    const double f32 = conv_gradient_error<float>(103);
    const double f64 = conv_gradient_error<double>(104);
    const double model = model_gradient_error(105);
    const bool ok = f32 <= 1e-3 && f64 <= 1e-6 && model <= 1e-2;
    return {ok, fmt("sdconv f32 worst rel %.2e (<=1e-3), f64 %.2e (<=1e-6); tiny model worst rel %.2e (<=1e-2)",
                    f32, f64, model)};
}

Outcome degeneracy_criterion() {
    std::mt19937_64 rng(106);
    double worst[2] = {0.0, 0.0};
    for (int trial = 0; trial < 20; ++trial) {
        for (std::size_t dd : {1, 2}) {
            ConvSpec spec{pick(rng, 0, 1) ? 5u : 3u, {dd, dd}, pick(rng, 1, 3), pick(rng, 1, 3), Padding::same};
            const auto x = testing::random_tensor<float>({1, spec.in_channels, 9 + pick(rng, 0, 8), 9 + pick(rng, 0, 8)}, rng);
            const auto p = random_params<float>(spec, rng);
            // Standard (dd = 1) or symmetric dilated (dd = 2) convolution in the oracle.
            const auto want = oracle_forward(x, spec, p);
            worst[dd - 1] = std::max(worst[dd - 1], testing::max_abs_diff(sdconv_forward(x, spec, p).span(), want));
        }
    }
    const bool ok = worst[0] <= 1e-5 && worst[1] <= 1e-5;
    return {ok, fmt("d=[1,1] max |diff| %.2e, d=[2,2] max |diff| %.2e (limit 1e-5)", worst[0], worst[1])};
}

const CwtConfig kDeskCwt{64, 0.5, 150.0, 6.0, 47};

double low_band_energy(const RawClip& segment) {
    const auto sc = scalogram_magnitude(segment, kDeskCwt);
    const Shape4 s = sc.values.shape();
    double sum = 0.0;
    std::size_t n = 0;
    for (std::size_t c = 0; c < s.c; ++c)
        for (std::size_t r = 0; r < s.h; ++r) {
            if (sc.freqs_hz[r] > 50.0) continue;
            for (std::size_t t = 0; t < s.w; ++t) {
                const double v = sc.values(0, c, r, t);
                sum += v * v;
                ++n;
            }
        }
    return sum / static_cast<double>(n);
}

Outcome preprocessing_criterion() {
    SynthConfig one;
    one.n_clips_per_class = 1;
    one.clip_seconds = 600.0;
    one.n_channels = 1;
    const auto clip = gen_synthetic_dataset(one).front();
    const auto seg = segment_clip(clip, 30.0);
    if (seg.segments.size() != 20 || seg.dropped_samples != 0) {
        return {false, "600 s clip gave " + std::to_string(seg.segments.size()) + " segments"};
    }

    // Ridge: row of maximal time-averaged magnitude for a 10 Hz sinusoid.
    RawClip sine;
    sine.clip_id = "sine";
    sine.sample_rate_hz = 400.0;
    sine.channels.assign(1, std::vector<float>(12000));
    for (std::size_t t = 0; t < 12000; ++t)
        sine.channels[0][t] = static_cast<float>(std::sin(2.0 * std::numbers::pi * 10.0 * static_cast<double>(t) / 400.0));
    const auto sc = scalogram_magnitude(sine, kDeskCwt);
    const auto& f = sc.freqs_hz;
    std::size_t ridge = 0, nearest = 0;
    double best = -1.0;
    for (std::size_t r = 0; r < f.size(); ++r) {
        double m = 0.0;
        for (std::size_t t = 0; t < sc.values.shape().w; ++t) m += sc.values(0, 0, r, t);
        if (m > best) {
            best = m;
            ridge = r;
        }
        if (std::abs(std::log(f[r] / 10.0)) < std::abs(std::log(f[nearest] / 10.0))) nearest = r;
    }
    const auto bins_off = static_cast<long>(ridge) - static_cast<long>(nearest);

    // Low-band energy, preictal vs interictal, for 8 clip pairs at gain 2.
    SynthConfig sc8;
    sc8.n_clips_per_class = 8;
    sc8.clip_seconds = 30.0;
    sc8.gain = 2.0;
    sc8.seed = 21;
    double pre = 0.0, inter = 0.0, max_inter = 0.0, min_pre = 1e300;
    for (const auto& c : gen_synthetic_dataset(sc8)) {
        const double e = low_band_energy(c);
        if (c.label == ClipLabel::preictal) {
            pre += e;
            min_pre = std::min(min_pre, e);
        } else {
            inter += e;
            max_inter = std::max(max_inter, e);
        }
    }
    const bool ok = std::abs(bins_off) <= 1 && pre > inter && min_pre > max_inter;
    return {ok, "600 s -> 20 segments; 10 Hz ridge at " + fmt("%.2f Hz", f[ridge]) + " (" +
                    std::to_string(bins_off) + " bins from nearest); 0-50 Hz energy preictal/interictal " +
                    fmt("%.3f (every preictal clip above every interictal: ", pre / inter) +
                    (min_pre > max_inter ? "yes)" : "no)")};
}

// Synthesizes, segments and transforms clips into dir; returns manifest records.
std::vector<SegmentRecord> preprocess(const fs::path& dir, const SynthConfig& sc, const CwtConfig& cwt) {
    const auto clips = gen_synthetic_dataset(sc);
    std::vector<std::vector<SegmentRecord>> per_clip(clips.size());
    for (std::size_t i = 0; i < clips.size(); ++i) {
        const auto seg = segment_clip(clips[i], 30.0);
        for (std::size_t s = 0; s < seg.segments.size(); ++s) {
            const auto sgt = build_scalogram(seg.segments[s], cwt, s);
            const std::string name = clips[i].clip_id + "_s" + std::to_string(s) + ".sgt";
            save_sgt((dir / name).string(), sgt.values);
            per_clip[i].push_back({clips[i].clip_id, s, static_cast<int>(clips[i].label), name, {}});
        }
    }
    std::vector<SegmentRecord> records;
    for (auto& v : per_clip) records.insert(records.end(), v.begin(), v.end());
    return records;
}

struct EndToEnd {
    TrainResult result;
    SegmentDataset val;
};

EndToEnd run_desk(const fs::path& dir, double gain) {
    SynthConfig sc;
    sc.n_clips_per_class = 32;
    sc.clip_seconds = 120.0;
    sc.gain = gain;
    sc.seed = 7;
    const auto records = preprocess(dir, sc, kDeskCwt);
    const auto split = split_by_clip(records, 0.8, 1);
    const SdcnConfig model = SdcnConfig::desk();
    TrainConfig tc;
    tc.epochs = 20;
    tc.patience = 3;
    EndToEnd e;
    e.val = load_segments(split.validation, dir, model);
    std::ostringstream log;
    e.result = train_loop(load_segments(split.train, dir, model), e.val, model, tc, &log);
    std::istringstream lines(log.str());
    for (std::string line; std::getline(lines, line);) std::cout << "    gain " << gain << ": " << line << '\n';
    return e;
}

// Kept for criterion 8.
SdcnModel g_trained;
SegmentDataset g_val;

Outcome end_to_end_criterion() {
    testing::TempDir a("accept_gain2");
    const auto sep = run_desk(a.path, 2.0);
    const auto& best = sep.result.history.at(sep.result.best_epoch - 1);
    g_trained = sep.result.best;
    g_val = sep.val;

    // Null control. 13 validation clips give an AUC standard deviation near 0.17 under the
    // null, so the selected model is scored on 128 fresh clips from an unrelated seed.
    testing::TempDir b("accept_gain1");
    const auto null = run_desk(b.path, 1.0);
    const auto& null_best = null.result.history.at(null.result.best_epoch - 1);
    testing::TempDir c("accept_null_test");
    SynthConfig held;
    held.n_clips_per_class = 64;
    held.clip_seconds = 120.0;
    held.gain = 1.0;
    held.seed = 1007;
    const auto test = load_segments(preprocess(c.path, held, kDeskCwt), c.path, SdcnConfig::desk());
    const auto null_eval = evaluate(null.result.best, test, 0.5);

    const bool ok = best.clip_auc >= 0.95 && best.sens >= 0.9 && sep.result.best_epoch <= 20 &&
                    std::abs(null_eval.clip_auc - 0.5) <= 0.1;
    return {ok, fmt("gain 2: clip AUC %.3f, sens %.3f", best.clip_auc, best.sens) + " at epoch " +
                    std::to_string(sep.result.best_epoch) + "/" + std::to_string(sep.result.history.size()) +
                    fmt("; gain 1: held-out clip AUC %.3f over 128 clips (validation %.3f)", null_eval.clip_auc,
                        null_best.clip_auc)};
}

Outcome metrics_criterion() {
    std::mt19937_64 rng(108);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<double> p(pick(rng, 1, 25));
        for (double& v : p) v = u(rng);
        double m = p[0];
        for (double v : p) m = v > m ? v : m;
        if (aggregate_clip(p) != m) return {false, "aggregate_clip is not the maximum"};
        std::shuffle(p.begin(), p.end(), rng);
        if (aggregate_clip(p) != m) return {false, "aggregate_clip depends on order"};
    }
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t n = pick(rng, 2, 30);
        std::vector<double> s(n);
        std::vector<int> y(n);
        for (std::size_t i = 0; i < n; ++i) {
            s[i] = static_cast<double>(pick(rng, 1, 8)) / 8.0;  // coarse grid forces ties
            y[i] = static_cast<int>(pick(rng, 0, 1));
        }
        y[0] = 0;
        y[1] = 1;
        const double a = auc(s, y);
        if (a != oracle::auc_pairs(s, y).value()) return {false, "AUC differs from pair counting"};
        std::vector<double> cubed(s), expd(s);
        for (double& v : cubed) v = v * v * v;
        for (double& v : expd) v = std::exp(3.0 * v);
        if (auc(cubed, y) != a || auc(expd, y) != a) return {false, "AUC changed under an increasing transform"};
    }
    return {true, "max aggregation exact on 100 sets; AUC == pair count on 100 sets; x^3 and exp invariant"};
}

Outcome reproducibility_criterion() {
    testing::TempDir dir("accept_ckpt");
    const auto path = (dir.path / "best.sdcn").string();
    save_checkpoint(g_trained, path);
    const auto loaded = load_checkpoint(path);
    std::vector<std::size_t> idx(std::min<std::size_t>(g_val.size(), 16));
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    const auto x = g_val.batch(idx);
    const auto a = model_forward(x, g_trained);
    const auto b = model_forward(x, loaded);
    const bool same_outputs = std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;

    SynthConfig sc;
    sc.n_clips_per_class = 4;
    sc.clip_seconds = 60.0;
    sc.n_channels = 2;
    sc.gain = 3.0;
    sc.seed = 31;
    const auto records = preprocess(dir.path, sc, {16, 2.0, 150.0, 6.0, 750});
    const auto split = split_by_clip(records, 0.75, 1);
    const auto train = load_segments(split.train, dir.path, SdcnConfig::tiny());
    const auto val = load_segments(split.validation, dir.path, SdcnConfig::tiny());
    TrainConfig tc;
    tc.epochs = 4;
    tc.batch_size = 4;
    std::ostringstream l1, l2;
    train_loop(train, val, SdcnConfig::tiny(), tc, &l1);
    train_loop(train, val, SdcnConfig::tiny(), tc, &l2);
    const bool same_logs = l1.str() == l2.str() && !l1.str().empty();
    return {same_outputs && same_logs,
            std::string("checkpoint reload forward bitwise equal on ") + std::to_string(a.size()) +
                " desk segments: " + (same_outputs ? "yes" : "no") + "; two seeded runs give identical logs: " +
                (same_logs ? "yes" : "no")};
}

}  // namespace

// Optional arguments select criteria by number; none runs all of them.
int main(int argc, char** argv) {
    struct Criterion {
        int id;
        const char* name;
        double limit_s;
        std::function<Outcome()> run;
    };
    const Criterion criteria[] = {
        {1, "receptive field", 10, receptive_field_criterion},
        {2, "oracle equivalence", 60, oracle_equivalence_criterion},
        {3, "gradient checks", 120, gradient_criterion},
        {4, "degeneracy", 60, degeneracy_criterion},
        {5, "preprocessing", 60, preprocessing_criterion},
        {6, "end-to-end", 900, end_to_end_criterion},
        {7, "aggregation and metrics", 60, metrics_criterion},
        {8, "reproducibility", 120, reproducibility_criterion},
    };
    bool all = true;
    std::set<int> only;
    for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));
    for (const auto& c : criteria) {
        if (!only.empty() && !only.count(c.id)) continue;
        const auto start = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = c.run();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        const bool pass = o.pass && secs <= c.limit_s;
        all = all && pass;
        std::cout << (pass ? "PASS" : "FAIL") << " criterion " << c.id << " (" << c.name << "): " << o.detail
                  << fmt(" [%.1f s, limit %.0f s]", secs, c.limit_s) << '\n'
                  << std::flush;
    }
    return all ? 0 : 1;
}
