// Register-blocked GEMM drivers shared by the dense and convolution kernels.
// B is never read directly: callers supply a packer that materializes one
// K x panel-width slice (gemm_panels) or a few full rows (gemm_bt_rows) at a
// time, so convolutions can feed im2col tiles without building the whole matrix.
#pragma once

#include <algorithm>
#include <cstddef>
#include <cstring>
#include <vector>

namespace sdcn::detail {

constexpr std::size_t kVecBytes = 64;
constexpr std::size_t kRowTile = 8;
constexpr std::size_t kBtRowTile = 4;
constexpr std::size_t kBtColTile = 4;

template <typename T>
struct Simd {
    typedef T type __attribute__((vector_size(kVecBytes)));
    static constexpr std::size_t lanes = kVecBytes / sizeof(T);

    static type load(const T* p) {
        type v;
        std::memcpy(&v, p, sizeof v);
        return v;
    }
    static void store(T* p, type v) { std::memcpy(p, &v, sizeof v); }
    static T sum(type v) {
        T s{0};
        for (std::size_t l = 0; l < lanes; ++l) {
            s += v[l];
        }
        return s;
    }
};

template <typename T>
constexpr std::size_t panel_width() {
    return 2 * Simd<T>::lanes;
}

/// C[m x n] (+)= op(A) * B with op(A)(i, p) = a[i * a_row + p * a_col].
/// pack(j0, width, panel) writes B(p, j0 + j) to panel[p * panel_width + j] for j < width
/// and zeros for width <= j < panel_width. Each C element accumulates p = 0..k-1 in order.
template <typename T, typename PackB>
void gemm_panels(std::size_t m, std::size_t n, std::size_t k, const T* a, std::size_t a_row,
                 std::size_t a_col, PackB&& pack, T* c, bool accumulate) {
    using S = Simd<T>;
    using V = typename S::type;
    constexpr std::size_t L = S::lanes;
    constexpr std::size_t W = panel_width<T>();
    if (m == 0 || n == 0) {
        return;
    }
    const auto col_tiles = static_cast<std::ptrdiff_t>((n + W - 1) / W);
    const std::size_t row_tiles = (m + kRowTile - 1) / kRowTile;

#pragma omp parallel
    {
        std::vector<T> panel(k * W);
        alignas(64) T staging[kRowTile][W];
#pragma omp for schedule(static)
        for (std::ptrdiff_t jt = 0; jt < col_tiles; ++jt) {
            const std::size_t j0 = static_cast<std::size_t>(jt) * W;
            const std::size_t width = std::min(W, n - j0);
            pack(j0, width, panel.data());
            for (std::size_t it = 0; it < row_tiles; ++it) {
                const std::size_t i0 = it * kRowTile;
                const std::size_t rows = std::min(kRowTile, m - i0);
                V acc[kRowTile][2];
                for (std::size_t r = 0; r < kRowTile; ++r) {
                    if (accumulate && r < rows) {
                        std::fill_n(staging[r], W, T{0});
                        std::copy_n(c + (i0 + r) * n + j0, width, staging[r]);
                        acc[r][0] = S::load(staging[r]);
                        acc[r][1] = S::load(staging[r] + L);
                    } else {
                        acc[r][0] = V{};
                        acc[r][1] = V{};
                    }
                }
                const T* arow[kRowTile];
                for (std::size_t r = 0; r < kRowTile; ++r) {
                    arow[r] = a + (i0 + std::min(r, rows - 1)) * a_row;
                }
                const T* bp = panel.data();
                for (std::size_t p = 0; p < k; ++p, bp += W) {
                    const V b0 = S::load(bp);
                    const V b1 = S::load(bp + L);
                    const std::size_t ap = p * a_col;
                    for (std::size_t r = 0; r < kRowTile; ++r) {
                        const T s = arow[r][ap];
                        acc[r][0] += s * b0;
                        acc[r][1] += s * b1;
                    }
                }
                for (std::size_t r = 0; r < rows; ++r) {
                    T* dst = c + (i0 + r) * n + j0;
                    if (width == W) {
                        S::store(dst, acc[r][0]);
                        S::store(dst + L, acc[r][1]);
                    } else {
                        S::store(staging[r], acc[r][0]);
                        S::store(staging[r] + L, acc[r][1]);
                        std::copy_n(staging[r], width, dst);
                    }
                }
            }
        }
    }
}

/// C[m x n] (+)= A[m x k] * B[n x k]^T. rows(j0, count, buf) returns a pointer to rows
/// j0..j0+count-1 of B stored contiguously, either in place or written to buf
/// (count <= kBtColTile). Each output is the lane-wise sum over
/// p = l (mod lanes), reduced in lane order, plus the sequential tail.
template <typename T, typename RowsB>
void gemm_bt_rows(std::size_t m, std::size_t n, std::size_t k, const T* a, RowsB&& rows_of_b,
                  T* c, bool accumulate) {
    using S = Simd<T>;
    using V = typename S::type;
    constexpr std::size_t L = S::lanes;
    if (m == 0 || n == 0) {
        return;
    }
    const std::size_t k_main = k - k % L;
    const std::size_t row_tiles = (m + kBtRowTile - 1) / kBtRowTile;
    const auto col_tiles = static_cast<std::ptrdiff_t>((n + kBtColTile - 1) / kBtColTile);

#pragma omp parallel
    {
        std::vector<T> buf(kBtColTile * k);
#pragma omp for schedule(static)
        for (std::ptrdiff_t jt = 0; jt < col_tiles; ++jt) {
            const std::size_t j0 = static_cast<std::size_t>(jt) * kBtColTile;
            const std::size_t cols = std::min(kBtColTile, n - j0);
            const T* rows_ptr = rows_of_b(j0, cols, buf.data());
            const T* brow[kBtColTile];
            for (std::size_t q = 0; q < kBtColTile; ++q) {
                brow[q] = rows_ptr + std::min(q, cols - 1) * k;
            }
            for (std::size_t it = 0; it < row_tiles; ++it) {
                const std::size_t i0 = it * kBtRowTile;
                const std::size_t rows = std::min(kBtRowTile, m - i0);
                const T* arow[kBtRowTile];
                for (std::size_t r = 0; r < kBtRowTile; ++r) {
                    arow[r] = a + (i0 + std::min(r, rows - 1)) * k;
                }
                V acc[kBtRowTile][kBtColTile] = {};
                for (std::size_t p = 0; p < k_main; p += L) {
                    V bv[kBtColTile];
                    for (std::size_t q = 0; q < kBtColTile; ++q) {
                        bv[q] = S::load(brow[q] + p);
                    }
                    for (std::size_t r = 0; r < kBtRowTile; ++r) {
                        const V av = S::load(arow[r] + p);
                        for (std::size_t q = 0; q < kBtColTile; ++q) {
                            acc[r][q] += av * bv[q];
                        }
                    }
                }
                for (std::size_t r = 0; r < rows; ++r) {
                    for (std::size_t q = 0; q < cols; ++q) {
                        T tail{0};
                        for (std::size_t p = k_main; p < k; ++p) {
                            tail += arow[r][p] * brow[q][p];
                        }
                        const T sum = S::sum(acc[r][q]) + tail;
                        T& out = c[(i0 + r) * n + j0 + q];
                        out = accumulate ? out + sum : sum;
                    }
                }
            }
        }
    }
}

}  // namespace sdcn::detail
