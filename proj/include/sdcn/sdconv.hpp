#pragma once

#include <cstddef>
#include <vector>

#include "sdcn/tensor.hpp"

namespace sdcn {

/// Per-axis tap spacing [d_h, d_w]: d_h along height (frequency), d_w along width (time).
struct DilationVector {
    std::size_t h = 1;
    std::size_t w = 1;

    bool operator==(const DilationVector&) const = default;
};

enum class Padding { same, valid };

/// Square k x k semi-dilated convolution, stride 1.
struct ConvSpec {
    std::size_t k = 3;
    DilationVector dilation{};
    std::size_t in_channels = 1;
    std::size_t out_channels = 1;
    Padding padding = Padding::same;

    void validate() const;
    /// Zero rows added above and below the input (0 for valid padding).
    std::size_t pad_h() const;
    std::size_t pad_w() const;
    Shape4 output_shape(const Shape4& input) const;
    /// Learnable scalars: weights plus one bias per output channel. Independent of dilation.
    std::size_t parameter_count() const;
};

template <typename T>
struct BasicConvParams {
    BasicTensor4<T> weights;  // (out_channels, in_channels, k, k)
    std::vector<T> bias;      // out_channels
};

template <typename T>
struct BasicConvGrads {
    BasicTensor4<T> grad_x;
    BasicTensor4<T> grad_w;
    std::vector<T> grad_b;
};

using ConvParams = BasicConvParams<float>;
using ConvGrads = BasicConvGrads<float>;

struct ReceptiveField {
    std::size_t h = 0;
    std::size_t w = 0;

    bool operator==(const ReceptiveField&) const = default;
};

struct TapOffset {
    std::ptrdiff_t dy = 0;
    std::ptrdiff_t dx = 0;

    bool operator==(const TapOffset&) const = default;
    auto operator<=>(const TapOffset&) const = default;
};

/// ((k-1)*d_h + 1) x ((k-1)*d_w + 1).
ReceptiveField receptive_field(std::size_t k, DilationVector d);

/// The k^2 tap positions (i*d_h, j*d_w), row-major over (i, j). With centered = true
/// the offsets are shifted so the middle tap sits at (0, 0).
std::vector<TapOffset> effective_tap_offsets(const ConvSpec& spec, bool centered = false);

/// Zero-filled (out_channels, in_channels, k, k) parameters for spec.
template <typename T>
BasicConvParams<T> make_conv_params(const ConvSpec& spec);

/// im2col + GEMM forward pass:
/// out[b,o,y,x] = bias[o] + sum_{c,i,j} w[o,c,i,j] * x_pad[b, c, y + i*d_h, x + j*d_w].
template <typename T>
BasicTensor4<T> sdconv_forward(const BasicTensor4<T>& x, const ConvSpec& spec,
                               const BasicConvParams<T>& params);

/// Exact gradients of sdconv_forward with respect to input, weights and bias.
/// With input_grad = false, grad_x is left empty (first layer of a network).
template <typename T>
BasicConvGrads<T> sdconv_backward(const BasicTensor4<T>& x, const ConvSpec& spec,
                                  const BasicConvParams<T>& params,
                                  const BasicTensor4<T>& grad_out, bool input_grad = true);

/// Zero-insertion: ((k-1)d_h+1) x ((k-1)d_w+1) kernel holding the original taps at
/// (i*d_h, j*d_w). Convolving with it at dilation 1 equals the semi-dilated convolution.
template <typename T>
BasicConvParams<T> expand_kernel(const BasicConvParams<T>& params, DilationVector d);

namespace reference {

/// Serial direct-sum semi-dilated convolution.
template <typename T>
BasicTensor4<T> sdconv_forward(const BasicTensor4<T>& x, const ConvSpec& spec,
                               const BasicConvParams<T>& params);

template <typename T>
BasicConvGrads<T> sdconv_backward(const BasicTensor4<T>& x, const ConvSpec& spec,
                                  const BasicConvParams<T>& params,
                                  const BasicTensor4<T>& grad_out);

/// Undilated convolution with a possibly rectangular (O, C, Kh, Kw) kernel; Kh, Kw odd.
/// "same" pads (Kh-1)/2 x (Kw-1)/2.
template <typename T>
BasicTensor4<T> dense_conv2d(const BasicTensor4<T>& x, const BasicConvParams<T>& params,
                             Padding padding);

}  // namespace reference

}  // namespace sdcn
