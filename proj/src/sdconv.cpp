#include "sdcn/sdconv.hpp"

#include <algorithm>
#include <string>

#include "gemm_kernel.hpp"

namespace sdcn {

void ConvSpec::validate() const {
    if (k == 0 || k % 2 == 0) {
        throw ConfigError("conv: kernel size must be odd and >= 1, got " + std::to_string(k));
    }
    if (dilation.h == 0 || dilation.w == 0) {
        throw ConfigError("conv: dilation rates must be >= 1");
    }
    if (in_channels == 0 || out_channels == 0) {
        throw ConfigError("conv: channel counts must be >= 1");
    }
}

std::size_t ConvSpec::pad_h() const {
    return padding == Padding::same ? (k - 1) * dilation.h / 2 : 0;
}

std::size_t ConvSpec::pad_w() const {
    return padding == Padding::same ? (k - 1) * dilation.w / 2 : 0;
}

Shape4 ConvSpec::output_shape(const Shape4& input) const {
    if (input.c != in_channels) {
        throw ShapeError("conv: input has " + std::to_string(input.c) + " channels, expected " +
                         std::to_string(in_channels));
    }
    if (padding == Padding::same) {
        return Shape4{input.b, out_channels, input.h, input.w};
    }
    const ReceptiveField rf = receptive_field(k, dilation);
    if (input.h < rf.h || input.w < rf.w) {
        throw ShapeError("conv: input " + input.str() + " smaller than receptive field " +
                         std::to_string(rf.h) + "x" + std::to_string(rf.w));
    }
    return Shape4{input.b, out_channels, input.h - rf.h + 1, input.w - rf.w + 1};
}

std::size_t ConvSpec::parameter_count() const {
    return out_channels * in_channels * k * k + out_channels;
}

ReceptiveField receptive_field(std::size_t k, DilationVector d) {
    return ReceptiveField{(k - 1) * d.h + 1, (k - 1) * d.w + 1};
}

std::vector<TapOffset> effective_tap_offsets(const ConvSpec& spec, bool centered) {
    spec.validate();
    const auto half = static_cast<std::ptrdiff_t>((spec.k - 1) / 2);
    const auto dh = static_cast<std::ptrdiff_t>(spec.dilation.h);
    const auto dw = static_cast<std::ptrdiff_t>(spec.dilation.w);
    std::vector<TapOffset> taps;
    taps.reserve(spec.k * spec.k);
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(spec.k); ++i) {
        for (std::ptrdiff_t j = 0; j < static_cast<std::ptrdiff_t>(spec.k); ++j) {
            if (centered) {
                taps.push_back({(i - half) * dh, (j - half) * dw});
            } else {
                taps.push_back({i * dh, j * dw});
            }
        }
    }
    return taps;
}

template <typename T>
BasicConvParams<T> make_conv_params(const ConvSpec& spec) {
    spec.validate();
    return {BasicTensor4<T>(spec.out_channels, spec.in_channels, spec.k, spec.k),
            std::vector<T>(spec.out_channels, T{0})};
}

namespace {

template <typename T>
void check_params(const ConvSpec& spec, const BasicConvParams<T>& params) {
    spec.validate();
    const Shape4 expected{spec.out_channels, spec.in_channels, spec.k, spec.k};
    if (params.weights.shape() != expected || params.bias.size() != spec.out_channels) {
        throw ShapeError("conv: parameter dims " + params.weights.shape().str() +
                         " do not match spec " + expected.str());
    }
}

// Geometry shared by im2col and col2im for one batch item.
struct ColGeometry {
    std::size_t channels, k, dh, dw, pad_h, pad_w;
    std::size_t in_h, in_w, out_h, out_w;

    std::size_t rows() const { return channels * k * k; }
    std::size_t cols() const { return out_h * out_w; }

    // Output columns x whose source column x + j*dw - pad_w lies inside [0, in_w).
    std::pair<std::size_t, std::size_t> valid_x(std::size_t j) const {
        const std::ptrdiff_t shift = static_cast<std::ptrdiff_t>(j * dw) - static_cast<std::ptrdiff_t>(pad_w);
        const std::ptrdiff_t lo = std::max<std::ptrdiff_t>(0, -shift);
        const std::ptrdiff_t hi =
            std::min<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(out_w), static_cast<std::ptrdiff_t>(in_w) - shift);
        if (hi <= lo) {
            return {0, 0};
        }
        return {static_cast<std::size_t>(lo), static_cast<std::size_t>(hi)};
    }
};

ColGeometry geometry(const ConvSpec& spec, const Shape4& in, const Shape4& out) {
    return {in.c, spec.k, spec.dilation.h, spec.dilation.w, spec.pad_h(), spec.pad_w(),
            in.h, in.w, out.h, out.w};
}

// Row r = (c*k + i)*k + j of the im2col matrix restricted to output pixels
// [p0, p0 + count): col(r, p) = x_pad[c, y + i*dh, x + j*dw] with p = y*out_w + x.
template <typename T>
void fill_col(const T* image, const ColGeometry& g, std::size_t r, std::size_t p0,
              std::size_t count, T* dst) {
    const std::size_t c = r / (g.k * g.k);
    const std::size_t i = (r / g.k) % g.k;
    const std::size_t j = r % g.k;
    const auto [x_lo, x_hi] = g.valid_x(j);
    const std::ptrdiff_t x_shift = static_cast<std::ptrdiff_t>(j * g.dw) - static_cast<std::ptrdiff_t>(g.pad_w);
    std::size_t p = p0;
    const std::size_t p_end = p0 + count;
    while (p < p_end) {
        const std::size_t y = p / g.out_w;
        const std::size_t x0 = p % g.out_w;
        const std::size_t x1 = std::min(g.out_w, x0 + (p_end - p));
        T* out = dst + (p - p0) - x0;  // out[x] for x in [x0, x1)
        const std::ptrdiff_t sy = static_cast<std::ptrdiff_t>(y + i * g.dh) - static_cast<std::ptrdiff_t>(g.pad_h);
        const std::size_t lo = std::clamp(x_lo, x0, x1);
        const std::size_t hi = std::clamp(x_hi, lo, x1);
        if (sy < 0 || sy >= static_cast<std::ptrdiff_t>(g.in_h) || lo == hi) {
            std::fill(out + x0, out + x1, T{0});
        } else {
            const T* src = image + (c * g.in_h + static_cast<std::size_t>(sy)) * g.in_w;
            std::fill(out + x0, out + lo, T{0});
            std::copy(src + static_cast<std::ptrdiff_t>(lo) + x_shift,
                      src + static_cast<std::ptrdiff_t>(hi) + x_shift, out + lo);
            std::fill(out + hi, out + x1, T{0});
        }
        p += x1 - x0;
    }
}

// out[m, p] = sum_r w[m, r] * col(r, p) for one batch item, with col generated tile by tile.
template <typename T>
void conv_implicit_gemm(const T* image, const ColGeometry& g, const T* w, std::size_t m, T* out) {
    constexpr std::size_t W = detail::panel_width<T>();
    detail::gemm_panels<T>(
        m, g.cols(), g.rows(), w, g.rows(), std::size_t{1},
        [&](std::size_t p0, std::size_t width, T* panel) {
            alignas(64) T row[W];
            for (std::size_t r = 0; r < g.rows(); ++r) {
                fill_col(image, g, r, p0, width, row);
                std::fill(row + width, row + W, T{0});
                std::copy_n(row, W, panel + r * W);
            }
        },
        out, false);
}

}  // namespace

template <typename T>
BasicTensor4<T> sdconv_forward(const BasicTensor4<T>& x, const ConvSpec& spec,
                               const BasicConvParams<T>& params) {
    check_params(spec, params);
    const Shape4 in = x.shape();
    const Shape4 out_shape = spec.output_shape(in);
    const ColGeometry g = geometry(spec, in, out_shape);
    BasicTensor4<T> out(out_shape);
    for (std::size_t b = 0; b < in.b; ++b) {
        T* dst = out.plane(b, 0).data();
        conv_implicit_gemm(x.plane(b, 0).data(), g, params.weights.span().data(), spec.out_channels, dst);
        for (std::size_t o = 0; o < spec.out_channels; ++o) {
            const T bias = params.bias[o];
            T* plane = dst + o * g.cols();
            for (std::size_t p = 0; p < g.cols(); ++p) {
                plane[p] += bias;
            }
        }
    }
    return out;
}

template <typename T>
BasicConvGrads<T> sdconv_backward(const BasicTensor4<T>& x, const ConvSpec& spec,
                                  const BasicConvParams<T>& params,
                                  const BasicTensor4<T>& grad_out, bool input_grad) {
    check_params(spec, params);
    const Shape4 in = x.shape();
    const Shape4 out_shape = spec.output_shape(in);
    if (grad_out.shape() != out_shape) {
        throw ShapeError("sdconv_backward: grad_out " + grad_out.shape().str() +
                         " != forward output " + out_shape.str());
    }
    const ColGeometry g = geometry(spec, in, out_shape);
    BasicConvGrads<T> grads{input_grad ? BasicTensor4<T>(in) : BasicTensor4<T>(),
                            BasicTensor4<T>(params.weights.shape()),
                            std::vector<T>(spec.out_channels, T{0})};

    // The input gradient is a convolution of grad_out with the spatially flipped,
    // channel-transposed kernel, padded by (k-1)*d - pad on each side.
    ColGeometry gt{spec.out_channels, spec.k, spec.dilation.h, spec.dilation.w,
                   (spec.k - 1) * spec.dilation.h - g.pad_h, (spec.k - 1) * spec.dilation.w - g.pad_w,
                   out_shape.h, out_shape.w, in.h, in.w};
    std::vector<T> flipped;
    if (input_grad) {
        flipped.resize(params.weights.size());
        const std::size_t k = spec.k;
        for (std::size_t o = 0; o < spec.out_channels; ++o) {
            for (std::size_t c = 0; c < spec.in_channels; ++c) {
                for (std::size_t i = 0; i < k; ++i) {
                    for (std::size_t j = 0; j < k; ++j) {
                        flipped[((c * spec.out_channels + o) * k + i) * k + j] =
                            params.weights(o, c, k - 1 - i, k - 1 - j);
                    }
                }
            }
        }
    }

    for (std::size_t b = 0; b < in.b; ++b) {
        const T* gout = grad_out.plane(b, 0).data();
        for (std::size_t o = 0; o < spec.out_channels; ++o) {
            const T* plane = gout + o * g.cols();
            T sum{0};
            for (std::size_t p = 0; p < g.cols(); ++p) {
                sum += plane[p];
            }
            grads.grad_b[o] += sum;
        }
        // dW += G_b * col_b^T, generating col rows on demand
        const T* image = x.plane(b, 0).data();
        detail::gemm_bt_rows<T>(
            spec.out_channels, g.rows(), g.cols(), gout,
            [&](std::size_t r0, std::size_t count, T* buf) {
                for (std::size_t q = 0; q < count; ++q) {
                    fill_col(image, g, r0 + q, 0, g.cols(), buf + q * g.cols());
                }
                return static_cast<const T*>(buf);
            },
            grads.grad_w.span().data(), b > 0);
        if (input_grad) {
            conv_implicit_gemm(gout, gt, flipped.data(), spec.in_channels,
                               grads.grad_x.plane(b, 0).data());
        }
    }
    return grads;
}

template <typename T>
BasicConvParams<T> expand_kernel(const BasicConvParams<T>& params, DilationVector d) {
    if (d.h == 0 || d.w == 0) {
        throw ConfigError("expand_kernel: dilation rates must be >= 1");
    }
    const Shape4 s = params.weights.shape();
    if (s.h != s.w) {
        throw ShapeError("expand_kernel: expected square taps, got " + s.str());
    }
    const ReceptiveField rf = receptive_field(s.h, d);
    BasicConvParams<T> out{BasicTensor4<T>(s.b, s.c, rf.h, rf.w), params.bias};
    for (std::size_t o = 0; o < s.b; ++o) {
        for (std::size_t c = 0; c < s.c; ++c) {
            for (std::size_t i = 0; i < s.h; ++i) {
                for (std::size_t j = 0; j < s.w; ++j) {
                    out.weights(o, c, i * d.h, j * d.w) = params.weights(o, c, i, j);
                }
            }
        }
    }
    return out;
}

#define SDCN_INSTANTIATE_SDCONV(T)                                                              \
    template BasicConvParams<T> make_conv_params<T>(const ConvSpec&);                           \
    template BasicTensor4<T> sdconv_forward<T>(const BasicTensor4<T>&, const ConvSpec&,         \
                                               const BasicConvParams<T>&);                      \
    template BasicConvGrads<T> sdconv_backward<T>(const BasicTensor4<T>&, const ConvSpec&,      \
                                                  const BasicConvParams<T>&,                    \
                                                  const BasicTensor4<T>&, bool);                \
    template BasicConvParams<T> expand_kernel<T>(const BasicConvParams<T>&, DilationVector);

SDCN_INSTANTIATE_SDCONV(float)
SDCN_INSTANTIATE_SDCONV(double)

}  // namespace sdcn
