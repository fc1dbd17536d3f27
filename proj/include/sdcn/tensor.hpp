#pragma once

#include <algorithm>
#include <array>
#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "sdcn/error.hpp"

namespace sdcn {

/// Dimensions of a rank-4 activation: batch, channels, height, width.
struct Shape4 {
    std::size_t b = 0;
    std::size_t c = 0;
    std::size_t h = 0;
    std::size_t w = 0;

    std::size_t count() const { return b * c * h * w; }
    std::size_t plane() const { return h * w; }
    bool operator==(const Shape4&) const = default;
    std::string str() const;
};

/// Dense rank-4 tensor, row-major with W fastest.
template <typename T>
class BasicTensor4 {
public:
    using value_type = T;

    BasicTensor4() = default;
    explicit BasicTensor4(Shape4 shape, T fill = T{0})
        : shape_(shape), data_(shape.count(), fill) {}
    BasicTensor4(std::size_t b, std::size_t c, std::size_t h, std::size_t w, T fill = T{0})
        : BasicTensor4(Shape4{b, c, h, w}, fill) {}
    BasicTensor4(Shape4 shape, std::vector<T> data);

    const Shape4& shape() const { return shape_; }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    std::size_t offset(std::size_t b, std::size_t c, std::size_t y, std::size_t x) const {
        return ((b * shape_.c + c) * shape_.h + y) * shape_.w + x;
    }
    T& operator()(std::size_t b, std::size_t c, std::size_t y, std::size_t x) {
        return data_[offset(b, c, y, x)];
    }
    const T& operator()(std::size_t b, std::size_t c, std::size_t y, std::size_t x) const {
        return data_[offset(b, c, y, x)];
    }
    T& operator[](std::size_t i) { return data_[i]; }
    const T& operator[](std::size_t i) const { return data_[i]; }

    std::span<T> span() { return data_; }
    std::span<const T> span() const { return data_; }
    /// Contiguous (H x W) plane of one (batch, channel) pair.
    std::span<T> plane(std::size_t b, std::size_t c) {
        return std::span<T>(data_).subspan(offset(b, c, 0, 0), shape_.plane());
    }
    std::span<const T> plane(std::size_t b, std::size_t c) const {
        return std::span<const T>(data_).subspan(offset(b, c, 0, 0), shape_.plane());
    }
    std::vector<T>& vec() { return data_; }
    const std::vector<T>& vec() const { return data_; }

    void fill(T value) { std::fill(data_.begin(), data_.end(), value); }

private:
    Shape4 shape_{};
    std::vector<T> data_;
};

/// Dense row-major matrix.
template <typename T>
class BasicTensor2 {
public:
    using value_type = T;

    BasicTensor2() = default;
    BasicTensor2(std::size_t rows, std::size_t cols, T fill = T{0})
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
    BasicTensor2(std::size_t rows, std::size_t cols, std::vector<T> data);

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t size() const { return data_.size(); }

    T& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    const T& operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
    T& operator[](std::size_t i) { return data_[i]; }
    const T& operator[](std::size_t i) const { return data_[i]; }

    std::span<T> row(std::size_t r) { return std::span<T>(data_).subspan(r * cols_, cols_); }
    std::span<const T> row(std::size_t r) const {
        return std::span<const T>(data_).subspan(r * cols_, cols_);
    }
    std::span<T> span() { return data_; }
    std::span<const T> span() const { return data_; }
    std::vector<T>& vec() { return data_; }
    const std::vector<T>& vec() const { return data_; }

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<T> data_;
};

using Tensor4 = BasicTensor4<float>;
using Tensor2 = BasicTensor2<float>;
using Tensor4d = BasicTensor4<double>;
using Tensor2d = BasicTensor2<double>;

/// Argmax routing recorded by maxpool2x2: one flat input index per output element.
struct PoolIndices {
    Shape4 input_shape;
    Shape4 output_shape;
    std::vector<std::uint32_t> argmax;
};

// ---------------------------------------------------------------------------
// Dense kernels. All are deterministic: each output element is accumulated
// in a fixed order regardless of blocking or thread count.
// ---------------------------------------------------------------------------

/// C = A * B.
template <typename T>
BasicTensor2<T> matmul(const BasicTensor2<T>& a, const BasicTensor2<T>& b);

/// C = A * B^T (B given as N x K).
template <typename T>
BasicTensor2<T> matmul_bt(const BasicTensor2<T>& a, const BasicTensor2<T>& b);

/// C = A^T * B (A given as K x M).
template <typename T>
BasicTensor2<T> matmul_at(const BasicTensor2<T>& a, const BasicTensor2<T>& b);

/// Raw-pointer GEMM used by the convolution kernels.
/// C[m x n] (+)= op(A) * B where op(A)(i, k) = a[i * a_row + k * a_col] and B is row-major k x n.
template <typename T>
void gemm(std::size_t m, std::size_t n, std::size_t k, const T* a, std::size_t a_row,
          std::size_t a_col, const T* b, T* c, bool accumulate);

/// C[m x n] (+)= A[m x k] * B[n x k]^T via fixed-lane dot products.
template <typename T>
void gemm_bt(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c,
             bool accumulate);

template <typename T>
BasicTensor4<T> pad2d(const BasicTensor4<T>& x, std::size_t pad_h, std::size_t pad_w);

/// Inverse of pad2d: removes pad_h rows / pad_w columns from each border.
template <typename T>
BasicTensor4<T> crop2d(const BasicTensor4<T>& x, std::size_t pad_h, std::size_t pad_w);

/// Disjoint 2x2 max-pool; ties resolve to the smallest flat input index.
template <typename T>
BasicTensor4<T> maxpool2x2(const BasicTensor4<T>& x, PoolIndices& indices);

template <typename T>
BasicTensor4<T> maxpool2x2_backward(const BasicTensor4<T>& grad_out, const PoolIndices& indices,
                                    const Shape4& input_shape);

/// Concatenates tensors along the channel axis; all other dims must agree.
template <typename T>
BasicTensor4<T> concat_channels(std::span<const BasicTensor4<T>> parts);

/// Channels [first, first + count) of x.
template <typename T>
BasicTensor4<T> slice_channels(const BasicTensor4<T>& x, std::size_t first, std::size_t count);

// ---------------------------------------------------------------------------
// Serial reference kernels kept for testing and benchmarking.
// ---------------------------------------------------------------------------
namespace reference {

template <typename T>
BasicTensor2<T> matmul(const BasicTensor2<T>& a, const BasicTensor2<T>& b);

}  // namespace reference

// ---------------------------------------------------------------------------
// ".sgt" binary tensor files: "SGT1", four u32 LE dims (B, C, H, W), then
// B*C*H*W f32 LE values.
// ---------------------------------------------------------------------------

void write_sgt(std::ostream& out, const Tensor4& t);
Tensor4 read_sgt(std::istream& in);
void save_sgt(const std::string& path, const Tensor4& t);
Tensor4 load_sgt(const std::string& path);

}  // namespace sdcn
