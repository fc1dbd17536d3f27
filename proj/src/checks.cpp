#include "sdcn/checks.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <random>

#include "sdcn/model.hpp"
#include "sdcn/sdconv.hpp"

namespace sdcn {

namespace {

template <typename T>
void fill_normal(std::span<T> data, std::mt19937_64& rng) {
    std::normal_distribution<double> normal(0.0, 1.0);
    for (T& v : data) {
        v = static_cast<T>(normal(rng));
    }
}

std::size_t pick(std::mt19937_64& rng, std::size_t lo, std::size_t hi) {
    return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

struct RandomConv {
    ConvSpec spec;
    Shape4 input;
};

RandomConv random_conv(std::mt19937_64& rng, Padding padding) {
    static constexpr std::size_t kWidths[] = {1, 2, 4, 8, 16};
    RandomConv r;
    r.spec.k = pick(rng, 0, 1) == 0 ? 3 : 5;
    r.spec.dilation = {pick(rng, 1, 2), kWidths[pick(rng, 0, 4)]};
    r.spec.in_channels = pick(rng, 1, 3);
    r.spec.out_channels = pick(rng, 1, 3);
    r.spec.padding = padding;
    const ReceptiveField rf = receptive_field(r.spec.k, r.spec.dilation);
    r.input = {pick(rng, 1, 2), r.spec.in_channels, rf.h + pick(rng, 0, 5), rf.w + pick(rng, 0, 7)};
    return r;
}

std::string format(const char* fmt, double a, double b) {
    char buf[128];
    std::snprintf(buf, sizeof buf, fmt, a, b);
    return buf;
}

double rel_err(double analytic, double numeric, double floor) {
    return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

template <typename T>
double weighted_sum(const BasicTensor4<T>& out, const BasicTensor4<T>& weights) {
    double s = 0.0;
    for (std::size_t i = 0; i < out.size(); ++i) {
        s += static_cast<double>(out[i]) * static_cast<double>(weights[i]);
    }
    return s;
}

template <typename T>
std::vector<double> widen(std::span<const T> v) {
    return std::vector<double>(v.begin(), v.end());
}

// Central differences of L = <forward(x, params), r> at up to `samples` entries of each of
// x, weights and bias, against sdconv_backward in precision T. The differences are taken on
// a double evaluation of the serial convolution so that rounding in T does not enter them.
template <typename T>
double conv_gradient_error(std::mt19937_64& rng, std::size_t samples) {
    const RandomConv rc = random_conv(rng, pick(rng, 0, 3) == 0 ? Padding::valid : Padding::same);
    BasicTensor4<T> x(rc.input);
    fill_normal(x.span(), rng);
    auto params = make_conv_params<T>(rc.spec);
    fill_normal(params.weights.span(), rng);
    fill_normal(std::span<T>(params.bias), rng);
    BasicTensor4<T> r(rc.spec.output_shape(rc.input));
    fill_normal(r.span(), rng);
    const auto grads = sdconv_backward(x, rc.spec, params, r);

    Tensor4d xd(x.shape(), widen<T>(x.span()));
    BasicConvParams<double> pd{Tensor4d(params.weights.shape(), widen<T>(params.weights.span())),
                               widen<T>(params.bias)};
    const Tensor4d rd(r.shape(), widen<T>(r.span()));
    const auto loss = [&] { return weighted_sum(reference::sdconv_forward(xd, rc.spec, pd), rd); };

    // The map is linear in each argument, so the quotient has no truncation error.
    constexpr double kStep = 0.5;
    double worst = 0.0;
    const auto probe = [&](std::span<double> values, std::span<const T> analytic) {
        for (std::size_t s = 0; s < std::min(samples, values.size()); ++s) {
            const std::size_t i = pick(rng, 0, values.size() - 1);
            const double saved = values[i];
            values[i] = saved + kStep;
            const double up = loss();
            values[i] = saved - kStep;
            const double down = loss();
            values[i] = saved;
            worst = std::max(worst, rel_err(analytic[i], (up - down) / (2 * kStep), 1e-6));
        }
    };
    probe(xd.span(), grads.grad_x.span());
    probe(pd.weights.span(), grads.grad_w.span());
    probe(std::span<double>(pd.bias), std::span<const T>(grads.grad_b));
    return worst;
}

template <typename T>
CheckReport conv_gradient_suite(const char* name, std::uint64_t seed, std::size_t cases,
                                double tolerance) {
    std::mt19937_64 rng(seed);
    CheckReport rep{name, true, cases, 0.0, tolerance, {}};
    for (std::size_t c = 0; c < cases; ++c) {
        rep.worst = std::max(rep.worst, conv_gradient_error<T>(rng, 12));
    }
    rep.passed = rep.worst <= tolerance;
    rep.detail = format("worst relative error %.3g (limit %.3g)", rep.worst, tolerance);
    return rep;
}

// The network evaluated in double. `flat` holds every parameter tensor in declaration order.
std::vector<double> forward_f64(const SdcnConfig& cfg, const std::vector<std::vector<double>>& flat,
                                const Tensor4d& x) {
    std::size_t next_tensor = 0;
    const auto take = [&] { return flat.at(next_tensor++); };
    const std::size_t batch = x.shape().b;
    std::vector<std::vector<double>> features(batch);
    for (std::size_t p = 0; p < 2; ++p) {
        Tensor4d y = x;
        for (std::size_t b = 0; b < 3; ++b) {
            const SdcBlockSpec spec = cfg.block_spec(p, b);
            std::vector<Tensor4d> outs;
            for (std::size_t r = 0; r < spec.branch_dilations.size(); ++r) {
                const ConvSpec cs = spec.branch_spec(r);
                auto cp = make_conv_params<double>(cs);
                cp.weights = Tensor4d(cp.weights.shape(), take());
                cp.bias = take();
                Tensor4d o = reference::sdconv_forward(y, cs, cp);
                for (double& v : o.span()) {
                    v = std::max(v, 0.0);
                }
                outs.push_back(std::move(o));
            }
            PoolIndices idx;
            y = maxpool2x2(concat_channels<double>(outs), idx);
        }
        const std::size_t per = y.size() / batch;
        for (std::size_t n = 0; n < batch; ++n) {
            features[n].insert(features[n].end(), y.span().begin() + n * per, y.span().begin() + (n + 1) * per);
        }
    }
    const std::size_t first_dense = next_tensor;
    std::vector<double> probs;
    for (auto& h : features) {
        next_tensor = first_dense;
        for (std::size_t layer = 0; layer < 3; ++layer) {
            const std::vector<double>& w = flat.at(next_tensor++);
            const std::vector<double>& bias = flat.at(next_tensor++);
            std::vector<double> out(bias.size());
            for (std::size_t o = 0; o < out.size(); ++o) {
                double acc = bias[o];
                for (std::size_t i = 0; i < h.size(); ++i) {
                    acc += w[o * h.size() + i] * h[i];
                }
                out[o] = layer == 2 ? acc : std::max(acc, 0.0);
            }
            h = std::move(out);
        }
        probs.push_back(1.0 / (1.0 + std::exp(-h[0])));
    }
    return probs;
}

}  // namespace

CheckReport check_receptive_field(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    CheckReport rep{"receptive_field", true, 21, 0.0, 0.0, {}};
    const ReceptiveField example = receptive_field(5, {2, 16});
    if (example != ReceptiveField{9, 65}) {
        rep.passed = false;
        rep.detail = "receptive_field(5, [2,16]) = " + std::to_string(example.h) + "x" +
                     std::to_string(example.w);
        return rep;
    }
    for (std::size_t c = 0; c < 20; ++c) {
        ConvSpec spec;
        spec.k = 2 * pick(rng, 0, 3) + 1;
        spec.dilation = {pick(rng, 1, 4), pick(rng, 1, 20)};
        const ReceptiveField rf = receptive_field(spec.k, spec.dilation);
        const Shape4 in{1, 1, rf.h + 6, rf.w + 6};
        auto params = make_conv_params<double>(spec);
        params.weights.fill(1.0);
        Tensor4d x(in, 0.0);
        Tensor4d g(spec.output_shape(in), 0.0);
        g(0, 0, in.h / 2, in.w / 2) = 1.0;
        const auto grads = sdconv_backward(x, spec, params, g);

        std::size_t y0 = in.h, y1 = 0, x0 = in.w, x1 = 0;
        for (std::size_t y = 0; y < in.h; ++y) {
            for (std::size_t xx = 0; xx < in.w; ++xx) {
                if (grads.grad_x(0, 0, y, xx) != 0.0) {
                    y0 = std::min(y0, y);
                    y1 = std::max(y1, y);
                    x0 = std::min(x0, xx);
                    x1 = std::max(x1, xx);
                }
            }
        }
        const ReceptiveField probed{y1 - y0 + 1, x1 - x0 + 1};
        if (y0 > y1 || probed != rf) {
            rep.passed = false;
            rep.worst += 1;
            rep.detail = "k=" + std::to_string(spec.k) + " d=[" + std::to_string(spec.dilation.h) +
                         "," + std::to_string(spec.dilation.w) + "] formula " +
                         std::to_string(rf.h) + "x" + std::to_string(rf.w) + ", probe " +
                         std::to_string(probed.h) + "x" + std::to_string(probed.w);
        }
    }
    if (rep.passed) {
        rep.detail = "formula matches gradient support on all cases";
    }
    return rep;
}

CheckReport check_expanded_kernel(std::uint64_t seed, std::size_t cases) {
    std::mt19937_64 rng(seed);
    CheckReport rep{"expanded_kernel_equivalence", true, cases, 0.0, 1e-5, {}};
    for (std::size_t c = 0; c < cases; ++c) {
        const RandomConv rc = random_conv(rng, pick(rng, 0, 3) == 0 ? Padding::valid : Padding::same);
        Tensor4 x(rc.input);
        fill_normal(x.span(), rng);
        auto params = make_conv_params<float>(rc.spec);
        fill_normal(params.weights.span(), rng);
        fill_normal(std::span<float>(params.bias), rng);
        const Tensor4 fast = sdconv_forward(x, rc.spec, params);
        const Tensor4 dense =
            reference::dense_conv2d(x, expand_kernel(params, rc.spec.dilation), rc.spec.padding);
        for (std::size_t i = 0; i < fast.size(); ++i) {
            rep.worst = std::max(rep.worst, static_cast<double>(std::abs(fast[i] - dense[i])));
        }
    }
    rep.passed = rep.worst <= rep.tolerance;
    rep.detail = format("max |diff| %.3g (limit %.3g)", rep.worst, rep.tolerance);
    return rep;
}

CheckReport check_degenerate_dilations(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    CheckReport rep{"degenerate_dilations", true, 0, 0.0, 1e-5, {}};
    for (const DilationVector d : {DilationVector{1, 1}, DilationVector{2, 2}}) {
        for (std::size_t k : {3, 5}) {
            ConvSpec spec{k, d, 2, 3, Padding::same};
            Tensor4 x(2, 2, 17, 23);
            fill_normal(x.span(), rng);
            auto params = make_conv_params<float>(spec);
            fill_normal(params.weights.span(), rng);
            fill_normal(std::span<float>(params.bias), rng);
            const Tensor4 fast = sdconv_forward(x, spec, params);
            const Tensor4 slow = reference::sdconv_forward(x, spec, params);
            for (std::size_t i = 0; i < fast.size(); ++i) {
                rep.worst = std::max(rep.worst, static_cast<double>(std::abs(fast[i] - slow[i])));
            }
            ++rep.cases;
        }
    }
    rep.passed = rep.worst <= rep.tolerance;
    rep.detail = format("max |diff| %.3g (limit %.3g)", rep.worst, rep.tolerance);
    return rep;
}

CheckReport check_conv_gradients_float(std::uint64_t seed, std::size_t cases) {
    return conv_gradient_suite<float>("conv_gradients_f32", seed, cases, 1e-3);
}

CheckReport check_conv_gradients_double(std::uint64_t seed, std::size_t cases) {
    return conv_gradient_suite<double>("conv_gradients_f64", seed, cases, 1e-6);
}

CheckReport check_model_gradients(std::uint64_t seed, std::size_t samples) {
    std::mt19937_64 rng(seed);
    const SdcnConfig cfg = SdcnConfig::tiny();
    SdcnModel model = init_model(cfg, seed);
    // Zero biases on sparse post-ReLU inputs put pre-activations exactly on the ReLU kink,
    // where a central difference sees the mean of both one-sided slopes.
    std::normal_distribution<float> jitter(0.0f, 0.1f);
    model.mutable_params().visit([&](const std::string& name, const Shape4&, std::span<float> v) {
        if (name.ends_with(".bias")) {
            for (float& b : v) {
                b = jitter(rng);
            }
        }
    });
    Tensor4 x(3, cfg.input_channels, cfg.input_h, cfg.input_w);
    fill_normal(x.span(), rng);
    std::vector<double> upstream(x.shape().b);
    fill_normal(std::span<double>(upstream), rng);

    ForwardCache cache;
    model_forward(x, model, &cache);
    const SdcnParams grads = model_backward(model, cache, upstream);

    // Differences are taken on a double-precision evaluation of the same network so that
    // only the float backward pass is under test, not float rounding in the forward pass.
    std::vector<std::vector<double>> flat;
    std::vector<std::span<const float>> analytic;
    model.params().visit([&](const std::string&, const Shape4&, std::span<const float> v) {
        flat.emplace_back(v.begin(), v.end());
    });
    grads.visit([&](const std::string&, const Shape4&, std::span<const float> g) { analytic.push_back(g); });
    const Tensor4d xd(x.shape(), std::vector<double>(x.span().begin(), x.span().end()));
    const auto objective = [&] {
        const auto p = forward_f64(cfg, flat, xd);
        double s = 0.0;
        for (std::size_t i = 0; i < p.size(); ++i) {
            s += upstream[i] * p[i];
        }
        return s;
    };

    // A sample whose estimates at h and h/2 disagree has a ReLU or pooling kink inside the
    // stencil and is replaced by another draw.
    constexpr double kStep = 1e-5;
    CheckReport rep{"model_gradients_tiny", true, 0, 0.0, 1e-2, {}};
    std::size_t skipped = 0;
    while (rep.cases < samples && skipped < 10 * samples) {
        const std::size_t t = pick(rng, 0, flat.size() - 1);
        const std::size_t i = pick(rng, 0, flat[t].size() - 1);
        double& v = flat[t][i];
        const double saved = v;
        const auto central = [&](double h) {
            v = saved + h;
            const double up = objective();
            v = saved - h;
            const double down = objective();
            v = saved;
            return (up - down) / (2.0 * h);
        };
        const double coarse = central(kStep);
        const double fine = central(kStep / 2);
        if (rel_err(coarse, fine, 1e-8) > 1e-4) {
            ++skipped;
            continue;
        }
        rep.worst = std::max(rep.worst, rel_err(analytic[t][i], fine, 1e-6));
        ++rep.cases;
    }
    rep.passed = rep.cases == samples && rep.worst <= rep.tolerance;
    char buf[160];
    std::snprintf(buf, sizeof buf, "worst relative error %.3g (limit %.3g), %zu kinked samples skipped",
                  rep.worst, rep.tolerance, skipped);
    rep.detail = buf;
    return rep;
}

std::vector<CheckReport> run_all_checks(std::uint64_t seed) {
    return {check_receptive_field(seed),       check_expanded_kernel(seed + 1),
            check_degenerate_dilations(seed + 2), check_conv_gradients_float(seed + 3),
            check_conv_gradients_double(seed + 4), check_model_gradients(seed + 5)};
}

}  // namespace sdcn
