#pragma once

#include <cstdint>
#include <vector>

#include "tensor.hpp"

namespace ivusseg::ops {

enum class Padding { same, valid };

// Output spatial size for one axis.
int conv_out_dim(int in, int kernel, int stride, Padding pad);

// input [N,Cin,H,W], kernel [Cout,Cin,kH,kW], bias [Cout] -> [N,Cout,H',W'].
// kH,kW odd, stride >= 1. padding=same zero-fills (k-1)/2 per side.
Tensor conv2d(const Tensor& input, const Tensor& kernel, const Tensor& bias,
              int stride, Padding pad);

// Gradients of conv2d. Any of the out-pointers may be null to skip.
void conv2d_backward(const Tensor& input, const Tensor& kernel, const Tensor& grad_out,
                     int stride, Padding pad,
                     Tensor* grad_input, Tensor* grad_kernel, Tensor* grad_bias);

// 2x2 max pooling, stride 2. H and W must be even. argmax (if non-null)
// receives the flat input index of each window maximum, ties broken by the
// first row-major position.
Tensor maxpool2(const Tensor& input, std::vector<std::int64_t>* argmax);
Tensor maxpool2_backward(const Tensor& grad_out, const std::vector<std::int64_t>& argmax,
                         const std::vector<int>& input_shape);

// Nearest-neighbor 2x upsampling: out[..,2i+a,2j+b] = in[..,i,j].
Tensor upsample2_nearest(const Tensor& input);
Tensor upsample2_backward(const Tensor& grad_out);

// Channel concatenation: a [N,Ca,H,W] + b [N,Cb,H,W] -> [N,Ca+Cb,H,W].
Tensor concat_channels(const Tensor& a, const Tensor& b);
void concat_backward(const Tensor& grad_out, int ca, Tensor* grad_a, Tensor* grad_b);
// First `count` channels of a rank-4 tensor (round-trip check for concat).
Tensor slice_channels(const Tensor& t, int first, int count);

// out = x if x > 0 else alpha * x. alpha has 1 element (per layer) or C
// elements (per channel).
Tensor prelu(const Tensor& input, const Tensor& alpha);
void prelu_backward(const Tensor& input, const Tensor& alpha, const Tensor& grad_out,
                    Tensor* grad_input, Tensor* grad_alpha);

// Numerically stable logistic; branches on sign so |x| up to ~700 is safe.
Tensor sigmoid(const Tensor& input);
Tensor sigmoid_backward(const Tensor& output, const Tensor& grad_out);

} // namespace ivusseg::ops
