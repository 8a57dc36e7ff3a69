#pragma once

#include <string>
#include <vector>

#include "stein/common.hpp"
#include "stein/conv.hpp"
#include "stein/tensor.hpp"

namespace stein::nn {

struct NamedParam {
    std::string name;
    Tensor tensor;
};

/// Non-trainable state that still belongs in checkpoints (running statistics).
struct NamedBuffer {
    std::string name;
    std::vector<double>* values = nullptr;
};

/// Forward-pass mode. Training mode makes normalization use batch statistics;
/// update_running can be disabled to keep the pass side-effect free.
struct Mode {
    bool training = false;
    bool update_running = true;

    static Mode train() { return {true, true}; }
    static Mode eval() { return {false, false}; }
    static Mode frozen_train() { return {true, false}; }
};

/// Learnable convolution. Weight init is truncated normal (std 0.02),
/// bias init is zero.
struct Conv2dLayer {
    ConvSpec spec;
    int in_channels = 0;
    int out_channels = 0;
    Tensor weight;
    Tensor bias;

    Conv2dLayer() = default;
    Conv2dLayer(int in_ch, int out_ch, int kernel, int stride, int padding, int groups,
                bool has_bias, Rng& rng);

    Tensor forward(const Tensor& x) const;
    void collect(const std::string& prefix, std::vector<NamedParam>& params,
                 std::vector<NamedBuffer>& buffers);
    int64_t param_count() const;
    /// Multiply-accumulates for one image at the given input spatial size.
    int64_t macs_per_image(int64_t in_h, int64_t in_w) const;
    void out_size(int64_t in_h, int64_t in_w, int64_t& out_h, int64_t& out_w) const;
};

/// Per-channel batch-style normalization with learnable scale/shift and
/// running statistics for evaluation mode.
struct Norm2d {
    int channels = 0;
    Tensor gamma;
    Tensor beta;
    std::vector<double> running_mean;
    std::vector<double> running_var;
    double momentum = 0.1;
    double eps = 1e-5;

    Norm2d() = default;
    explicit Norm2d(int channels);

    Tensor forward(const Tensor& x, const Mode& mode);
    void collect(const std::string& prefix, std::vector<NamedParam>& params,
                 std::vector<NamedBuffer>& buffers);
    int64_t param_count() const { return 2 * channels; }
};

/// 3x3 depthwise + 1x1 pointwise convolution, both biased.
struct DepthwiseSeparableConv {
    Conv2dLayer depthwise;
    Conv2dLayer pointwise;

    DepthwiseSeparableConv() = default;
    DepthwiseSeparableConv(int in_ch, int out_ch, Rng& rng);

    Tensor forward(const Tensor& x) const;
    void collect(const std::string& prefix, std::vector<NamedParam>& params,
                 std::vector<NamedBuffer>& buffers);
    int64_t param_count() const;
    int64_t macs_per_image(int64_t h, int64_t w) const;
};

}  // namespace stein::nn
