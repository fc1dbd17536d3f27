#include "sdcn/tensor.hpp"

#include "gemm_kernel.hpp"

#include <algorithm>
#include <cstring>
#include <limits>
#include <sstream>

namespace sdcn {

std::string Shape4::str() const {
    std::ostringstream os;
    os << '(' << b << ',' << c << ',' << h << ',' << w << ')';
    return os.str();
}

template <typename T>
BasicTensor4<T>::BasicTensor4(Shape4 shape, std::vector<T> data)
    : shape_(shape), data_(std::move(data)) {
    if (data_.size() != shape_.count()) {
        throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                         " does not match dims " + shape_.str());
    }
}

template <typename T>
BasicTensor2<T>::BasicTensor2(std::size_t rows, std::size_t cols, std::vector<T> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows_ * cols_) {
        throw ShapeError("matrix data length does not match rows*cols");
    }
}

template <typename T>
void gemm(std::size_t m, std::size_t n, std::size_t k, const T* a, std::size_t a_row,
          std::size_t a_col, const T* b, T* c, bool accumulate) {
    constexpr std::size_t W = detail::panel_width<T>();
    detail::gemm_panels<T>(m, n, k, a, a_row, a_col,
                           [&](std::size_t j0, std::size_t width, T* panel) {
                               for (std::size_t p = 0; p < k; ++p) {
                                   T* dst = panel + p * W;
                                   std::copy_n(b + p * n + j0, width, dst);
                                   std::fill(dst + width, dst + W, T{0});
                               }
                           },
                           c, accumulate);
}

template <typename T>
void gemm_bt(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c,
             bool accumulate) {
    detail::gemm_bt_rows<T>(m, n, k, a,
                            [&](std::size_t j0, std::size_t, T*) { return b + j0 * k; },
                            c, accumulate);
}

template <typename T>
BasicTensor2<T> matmul(const BasicTensor2<T>& a, const BasicTensor2<T>& b) {
    if (a.cols() != b.rows()) {
        throw ShapeError("matmul: a.cols (" + std::to_string(a.cols()) + ") != b.rows (" +
                         std::to_string(b.rows()) + ")");
    }
    BasicTensor2<T> c(a.rows(), b.cols());
    gemm(a.rows(), b.cols(), a.cols(), a.span().data(), a.cols(), std::size_t{1}, b.span().data(),
         c.span().data(), false);
    return c;
}

template <typename T>
BasicTensor2<T> matmul_bt(const BasicTensor2<T>& a, const BasicTensor2<T>& b) {
    if (a.cols() != b.cols()) {
        throw ShapeError("matmul_bt: inner dimensions differ");
    }
    BasicTensor2<T> c(a.rows(), b.rows());
    gemm_bt(a.rows(), b.rows(), a.cols(), a.span().data(), b.span().data(), c.span().data(), false);
    return c;
}

template <typename T>
BasicTensor2<T> matmul_at(const BasicTensor2<T>& a, const BasicTensor2<T>& b) {
    if (a.rows() != b.rows()) {
        throw ShapeError("matmul_at: inner dimensions differ");
    }
    BasicTensor2<T> c(a.cols(), b.cols());
    gemm(a.cols(), b.cols(), a.rows(), a.span().data(), std::size_t{1}, a.cols(), b.span().data(),
         c.span().data(), false);
    return c;
}

template <typename T>
BasicTensor4<T> pad2d(const BasicTensor4<T>& x, std::size_t pad_h, std::size_t pad_w) {
    const Shape4 s = x.shape();
    BasicTensor4<T> out(Shape4{s.b, s.c, s.h + 2 * pad_h, s.w + 2 * pad_w});
    const auto planes = static_cast<std::ptrdiff_t>(s.b * s.c);
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t pc = 0; pc < planes; ++pc) {
        const std::size_t bi = static_cast<std::size_t>(pc) / s.c;
        const std::size_t ci = static_cast<std::size_t>(pc) % s.c;
        for (std::size_t y = 0; y < s.h; ++y) {
            const T* src = &x(bi, ci, y, 0);
            std::copy_n(src, s.w, &out(bi, ci, y + pad_h, pad_w));
        }
    }
    return out;
}

template <typename T>
BasicTensor4<T> crop2d(const BasicTensor4<T>& x, std::size_t pad_h, std::size_t pad_w) {
    const Shape4 s = x.shape();
    if (s.h <= 2 * pad_h || s.w <= 2 * pad_w) {
        throw ShapeError("crop2d: crop exceeds tensor dims " + s.str());
    }
    BasicTensor4<T> out(Shape4{s.b, s.c, s.h - 2 * pad_h, s.w - 2 * pad_w});
    const Shape4 o = out.shape();
    for (std::size_t bi = 0; bi < o.b; ++bi) {
        for (std::size_t ci = 0; ci < o.c; ++ci) {
            for (std::size_t y = 0; y < o.h; ++y) {
                std::copy_n(&x(bi, ci, y + pad_h, pad_w), o.w, &out(bi, ci, y, 0));
            }
        }
    }
    return out;
}

template <typename T>
BasicTensor4<T> maxpool2x2(const BasicTensor4<T>& x, PoolIndices& indices) {
    const Shape4 s = x.shape();
    if (s.h % 2 != 0 || s.w % 2 != 0) {
        throw ShapeError("maxpool2x2: spatial dims must be even, got " + s.str());
    }
    if (s.count() > std::numeric_limits<std::uint32_t>::max()) {
        throw ShapeError("maxpool2x2: tensor too large for 32-bit pool indices");
    }
    const Shape4 o{s.b, s.c, s.h / 2, s.w / 2};
    BasicTensor4<T> out(o);
    indices.input_shape = s;
    indices.output_shape = o;
    indices.argmax.assign(o.count(), 0);

    const auto planes = static_cast<std::ptrdiff_t>(s.b * s.c);
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t pc = 0; pc < planes; ++pc) {
        const std::size_t bi = static_cast<std::size_t>(pc) / s.c;
        const std::size_t ci = static_cast<std::size_t>(pc) % s.c;
        for (std::size_t y = 0; y < o.h; ++y) {
            for (std::size_t xo = 0; xo < o.w; ++xo) {
                // Scan in increasing flat-index order; strict '>' keeps the first maximum.
                std::size_t best = x.offset(bi, ci, 2 * y, 2 * xo);
                const std::size_t candidates[3] = {best + 1, best + s.w, best + s.w + 1};
                for (std::size_t cand : candidates) {
                    if (x[cand] > x[best]) {
                        best = cand;
                    }
                }
                const std::size_t oi = out.offset(bi, ci, y, xo);
                out[oi] = x[best];
                indices.argmax[oi] = static_cast<std::uint32_t>(best);
            }
        }
    }
    return out;
}

template <typename T>
BasicTensor4<T> maxpool2x2_backward(const BasicTensor4<T>& grad_out, const PoolIndices& indices,
                                    const Shape4& input_shape) {
    const Shape4 expected{input_shape.b, input_shape.c, input_shape.h / 2, input_shape.w / 2};
    if (input_shape.h % 2 != 0 || input_shape.w % 2 != 0 || grad_out.shape() != expected ||
        indices.input_shape != input_shape || indices.argmax.size() != grad_out.size()) {
        throw ShapeError("maxpool2x2_backward: grad " + grad_out.shape().str() +
                         " does not match pooled dims of " + input_shape.str());
    }
    BasicTensor4<T> grad_in(input_shape);
    // Windows are disjoint, so each input position receives at most one contribution.
    const auto n = static_cast<std::ptrdiff_t>(grad_out.size());
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < n; ++i) {
        grad_in[indices.argmax[static_cast<std::size_t>(i)]] = grad_out[static_cast<std::size_t>(i)];
    }
    return grad_in;
}

template <typename T>
BasicTensor4<T> concat_channels(std::span<const BasicTensor4<T>> parts) {
    if (parts.empty()) {
        throw ShapeError("concat_channels: no inputs");
    }
    const Shape4 first = parts.front().shape();
    std::size_t channels = 0;
    for (const auto& p : parts) {
        const Shape4 s = p.shape();
        if (s.b != first.b || s.h != first.h || s.w != first.w) {
            throw ShapeError("concat_channels: mismatched dims " + s.str() + " vs " + first.str());
        }
        channels += s.c;
    }
    BasicTensor4<T> out(Shape4{first.b, channels, first.h, first.w});
    for (std::size_t bi = 0; bi < first.b; ++bi) {
        std::size_t c0 = 0;
        for (const auto& p : parts) {
            const auto src = p.span().subspan(p.offset(bi, 0, 0, 0), p.shape().c * first.plane());
            std::copy(src.begin(), src.end(), out.span().begin() + static_cast<std::ptrdiff_t>(out.offset(bi, c0, 0, 0)));
            c0 += p.shape().c;
        }
    }
    return out;
}

template <typename T>
BasicTensor4<T> slice_channels(const BasicTensor4<T>& x, std::size_t first, std::size_t count) {
    const Shape4 s = x.shape();
    if (first + count > s.c || count == 0) {
        throw ShapeError("slice_channels: range exceeds channel count of " + s.str());
    }
    BasicTensor4<T> out(Shape4{s.b, count, s.h, s.w});
    for (std::size_t bi = 0; bi < s.b; ++bi) {
        const auto src = x.span().subspan(x.offset(bi, first, 0, 0), count * s.plane());
        std::copy(src.begin(), src.end(), out.span().begin() + static_cast<std::ptrdiff_t>(out.offset(bi, 0, 0, 0)));
    }
    return out;
}

namespace reference {

template <typename T>
BasicTensor2<T> matmul(const BasicTensor2<T>& a, const BasicTensor2<T>& b) {
    if (a.cols() != b.rows()) {
        throw ShapeError("reference::matmul: dimension mismatch");
    }
    BasicTensor2<T> c(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        for (std::size_t j = 0; j < b.cols(); ++j) {
            T sum{0};
            for (std::size_t p = 0; p < a.cols(); ++p) {
                sum += a(i, p) * b(p, j);
            }
            c(i, j) = sum;
        }
    }
    return c;
}

}  // namespace reference

#define SDCN_INSTANTIATE_TENSOR(T)                                                              \
    template class BasicTensor4<T>;                                                             \
    template class BasicTensor2<T>;                                                             \
    template void gemm<T>(std::size_t, std::size_t, std::size_t, const T*, std::size_t,         \
                          std::size_t, const T*, T*, bool);                                     \
    template void gemm_bt<T>(std::size_t, std::size_t, std::size_t, const T*, const T*, T*,     \
                             bool);                                                             \
    template BasicTensor2<T> matmul<T>(const BasicTensor2<T>&, const BasicTensor2<T>&);         \
    template BasicTensor2<T> matmul_bt<T>(const BasicTensor2<T>&, const BasicTensor2<T>&);      \
    template BasicTensor2<T> matmul_at<T>(const BasicTensor2<T>&, const BasicTensor2<T>&);      \
    template BasicTensor4<T> pad2d<T>(const BasicTensor4<T>&, std::size_t, std::size_t);        \
    template BasicTensor4<T> crop2d<T>(const BasicTensor4<T>&, std::size_t, std::size_t);       \
    template BasicTensor4<T> maxpool2x2<T>(const BasicTensor4<T>&, PoolIndices&);               \
    template BasicTensor4<T> maxpool2x2_backward<T>(const BasicTensor4<T>&, const PoolIndices&, \
                                                    const Shape4&);                             \
    template BasicTensor4<T> concat_channels<T>(std::span<const BasicTensor4<T>>);              \
    template BasicTensor4<T> slice_channels<T>(const BasicTensor4<T>&, std::size_t, std::size_t); \
    template BasicTensor2<T> reference::matmul<T>(const BasicTensor2<T>&, const BasicTensor2<T>&);

SDCN_INSTANTIATE_TENSOR(float)
SDCN_INSTANTIATE_TENSOR(double)

}  // namespace sdcn
