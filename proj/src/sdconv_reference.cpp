#include "sdcn/sdconv.hpp"

namespace sdcn::reference {

namespace {

template <typename T>
bool fetch(const BasicTensor4<T>& x, std::size_t b, std::size_t c, std::ptrdiff_t y,
           std::ptrdiff_t xx, T& value) {
    const Shape4 s = x.shape();
    if (y < 0 || xx < 0 || y >= static_cast<std::ptrdiff_t>(s.h) ||
        xx >= static_cast<std::ptrdiff_t>(s.w)) {
        return false;
    }
    value = x(b, c, static_cast<std::size_t>(y), static_cast<std::size_t>(xx));
    return true;
}

}  // namespace

template <typename T>
BasicTensor4<T> sdconv_forward(const BasicTensor4<T>& x, const ConvSpec& spec,
                               const BasicConvParams<T>& params) {
    spec.validate();
    const Shape4 in = x.shape();
    const Shape4 os = spec.output_shape(in);
    const auto ph = static_cast<std::ptrdiff_t>(spec.pad_h());
    const auto pw = static_cast<std::ptrdiff_t>(spec.pad_w());
    BasicTensor4<T> out(os);
    for (std::size_t b = 0; b < os.b; ++b) {
        for (std::size_t o = 0; o < os.c; ++o) {
            for (std::size_t y = 0; y < os.h; ++y) {
                for (std::size_t xo = 0; xo < os.w; ++xo) {
                    T sum{0};
                    for (std::size_t c = 0; c < in.c; ++c) {
                        for (std::size_t i = 0; i < spec.k; ++i) {
                            for (std::size_t j = 0; j < spec.k; ++j) {
                                T v;
                                const auto sy = static_cast<std::ptrdiff_t>(y + i * spec.dilation.h) - ph;
                                const auto sx = static_cast<std::ptrdiff_t>(xo + j * spec.dilation.w) - pw;
                                if (fetch(x, b, c, sy, sx, v)) {
                                    sum += params.weights(o, c, i, j) * v;
                                }
                            }
                        }
                    }
                    out(b, o, y, xo) = params.bias[o] + sum;
                }
            }
        }
    }
    return out;
}

template <typename T>
BasicConvGrads<T> sdconv_backward(const BasicTensor4<T>& x, const ConvSpec& spec,
                                  const BasicConvParams<T>& params,
                                  const BasicTensor4<T>& grad_out) {
    spec.validate();
    const Shape4 in = x.shape();
    const Shape4 os = spec.output_shape(in);
    if (grad_out.shape() != os) {
        throw ShapeError("reference::sdconv_backward: grad_out dims mismatch");
    }
    const auto ph = static_cast<std::ptrdiff_t>(spec.pad_h());
    const auto pw = static_cast<std::ptrdiff_t>(spec.pad_w());
    BasicConvGrads<T> g{BasicTensor4<T>(in), BasicTensor4<T>(params.weights.shape()),
                        std::vector<T>(spec.out_channels, T{0})};
    for (std::size_t b = 0; b < os.b; ++b) {
        for (std::size_t o = 0; o < os.c; ++o) {
            for (std::size_t y = 0; y < os.h; ++y) {
                for (std::size_t xo = 0; xo < os.w; ++xo) {
                    const T go = grad_out(b, o, y, xo);
                    g.grad_b[o] += go;
                    for (std::size_t c = 0; c < in.c; ++c) {
                        for (std::size_t i = 0; i < spec.k; ++i) {
                            for (std::size_t j = 0; j < spec.k; ++j) {
                                const auto sy = static_cast<std::ptrdiff_t>(y + i * spec.dilation.h) - ph;
                                const auto sx = static_cast<std::ptrdiff_t>(xo + j * spec.dilation.w) - pw;
                                T v;
                                if (!fetch(x, b, c, sy, sx, v)) {
                                    continue;
                                }
                                g.grad_w(o, c, i, j) += go * v;
                                g.grad_x(b, c, static_cast<std::size_t>(sy), static_cast<std::size_t>(sx)) +=
                                    go * params.weights(o, c, i, j);
                            }
                        }
                    }
                }
            }
        }
    }
    return g;
}

template <typename T>
BasicTensor4<T> dense_conv2d(const BasicTensor4<T>& x, const BasicConvParams<T>& params,
                             Padding padding) {
    const Shape4 in = x.shape();
    const Shape4 ws = params.weights.shape();
    if (ws.c != in.c || ws.h % 2 == 0 || ws.w % 2 == 0 || params.bias.size() != ws.b) {
        throw ShapeError("dense_conv2d: kernel " + ws.str() + " incompatible with input " + in.str());
    }
    const std::size_t ph = padding == Padding::same ? (ws.h - 1) / 2 : 0;
    const std::size_t pw = padding == Padding::same ? (ws.w - 1) / 2 : 0;
    if (padding == Padding::valid && (in.h < ws.h || in.w < ws.w)) {
        throw ShapeError("dense_conv2d: input smaller than kernel");
    }
    const Shape4 os{in.b, ws.b, in.h + 2 * ph - ws.h + 1, in.w + 2 * pw - ws.w + 1};
    BasicTensor4<T> out(os);
    for (std::size_t b = 0; b < os.b; ++b) {
        for (std::size_t o = 0; o < os.c; ++o) {
            for (std::size_t y = 0; y < os.h; ++y) {
                for (std::size_t xo = 0; xo < os.w; ++xo) {
                    T sum{0};
                    for (std::size_t c = 0; c < in.c; ++c) {
                        for (std::size_t i = 0; i < ws.h; ++i) {
                            for (std::size_t j = 0; j < ws.w; ++j) {
                                T v;
                                const auto sy = static_cast<std::ptrdiff_t>(y + i) - static_cast<std::ptrdiff_t>(ph);
                                const auto sx = static_cast<std::ptrdiff_t>(xo + j) - static_cast<std::ptrdiff_t>(pw);
                                if (fetch(x, b, c, sy, sx, v)) {
                                    sum += params.weights(o, c, i, j) * v;
                                }
                            }
                        }
                    }
                    out(b, o, y, xo) = params.bias[o] + sum;
                }
            }
        }
    }
    return out;
}

#define SDCN_INSTANTIATE_REFERENCE(T)                                                           \
    template BasicTensor4<T> sdconv_forward<T>(const BasicTensor4<T>&, const ConvSpec&,         \
                                               const BasicConvParams<T>&);                      \
    template BasicConvGrads<T> sdconv_backward<T>(const BasicTensor4<T>&, const ConvSpec&,      \
                                                  const BasicConvParams<T>&,                    \
                                                  const BasicTensor4<T>&);                      \
    template BasicTensor4<T> dense_conv2d<T>(const BasicTensor4<T>&, const BasicConvParams<T>&, \
                                             Padding);

SDCN_INSTANTIATE_REFERENCE(float)
SDCN_INSTANTIATE_REFERENCE(double)

}  // namespace sdcn::reference
