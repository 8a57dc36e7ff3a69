#pragma once

#include "stein/tensor.hpp"

namespace stein {

/// 2-D convolution geometry. Square stride/padding; groups must divide both
/// channel counts. groups == in_channels with one output per group is a
/// depthwise convolution.
struct ConvSpec {
    int kernel_h = 1;
    int kernel_w = 1;
    int stride = 1;
    int padding = 0;
    int groups = 1;
    bool has_bias = true;

    int out_size(int in) const { return (in + 2 * padding - kernel_h) / stride + 1; }
    int out_size_w(int in) const { return (in + 2 * padding - kernel_w) / stride + 1; }
};

/// x: [N, Cin, H, W]; weight: [Cout, Cin/groups, kh, kw]; bias: [Cout] or
/// undefined. Zero padding outside the image. Differentiable in x, weight
/// and bias.
Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias, const ConvSpec& spec);

/// Bilinear resize of an NCHW tensor, align-corners=false convention:
/// src = (dst + 0.5) * scale - 0.5, clamped to the valid range.
Tensor bilinear_resize(const Tensor& x, int out_h, int out_w);

/// Per-channel normalization over N*H*W with learnable scale/shift.
/// Training mode normalizes with batch statistics and (optionally) updates
/// the running buffers in place; eval mode uses the running statistics.
Tensor batch_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  std::vector<double>& running_mean, std::vector<double>& running_var,
                  bool training, bool update_running, double momentum = 0.1,
                  double eps = 1e-5);

}  // namespace stein
