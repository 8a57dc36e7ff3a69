#include "stein/layers.hpp"

namespace stein::nn {

Conv2dLayer::Conv2dLayer(int in_ch, int out_ch, int kernel, int stride, int padding, int groups,
                         bool has_bias, Rng& rng)
    : in_channels(in_ch), out_channels(out_ch) {
    spec.kernel_h = kernel;
    spec.kernel_w = kernel;
    spec.stride = stride;
    spec.padding = padding;
    spec.groups = groups;
    spec.has_bias = has_bias;
    if (in_ch % groups != 0 || out_ch % groups != 0)
        throw ConfigError("Conv2dLayer: groups " + std::to_string(groups) +
                          " must divide channels " + std::to_string(in_ch) + "->" +
                          std::to_string(out_ch));
    const int64_t fan = static_cast<int64_t>(in_ch / groups) * kernel * kernel;
    std::vector<double> w(static_cast<size_t>(out_ch) * fan);
    for (double& v : w) v = rng.truncated_normal(0.02);
    weight = Tensor::from_data({out_ch, in_ch / groups, kernel, kernel}, std::move(w), true);
    if (has_bias) bias = Tensor::zeros({out_ch}, true);
}

Tensor Conv2dLayer::forward(const Tensor& x) const { return conv2d(x, weight, bias, spec); }

void Conv2dLayer::collect(const std::string& prefix, std::vector<NamedParam>& params,
                          std::vector<NamedBuffer>&) {
    params.push_back({prefix + ".weight", weight});
    if (bias.defined()) params.push_back({prefix + ".bias", bias});
}

int64_t Conv2dLayer::param_count() const {
    return weight.numel() + (bias.defined() ? bias.numel() : 0);
}

void Conv2dLayer::out_size(int64_t in_h, int64_t in_w, int64_t& out_h, int64_t& out_w) const {
    out_h = (in_h + 2 * spec.padding - spec.kernel_h) / spec.stride + 1;
    out_w = (in_w + 2 * spec.padding - spec.kernel_w) / spec.stride + 1;
}

int64_t Conv2dLayer::macs_per_image(int64_t in_h, int64_t in_w) const {
    int64_t oh, ow;
    out_size(in_h, in_w, oh, ow);
    return static_cast<int64_t>(out_channels) * oh * ow *
           (in_channels / spec.groups) * spec.kernel_h * spec.kernel_w;
}

Norm2d::Norm2d(int ch) : channels(ch) {
    gamma = Tensor::full({ch}, 1.0, true);
    beta = Tensor::zeros({ch}, true);
    running_mean.assign(ch, 0.0);
    running_var.assign(ch, 1.0);
}

Tensor Norm2d::forward(const Tensor& x, const Mode& mode) {
    return batch_norm(x, gamma, beta, running_mean, running_var, mode.training,
                      mode.training && mode.update_running, momentum, eps);
}

void Norm2d::collect(const std::string& prefix, std::vector<NamedParam>& params,
                     std::vector<NamedBuffer>& buffers) {
    params.push_back({prefix + ".gamma", gamma});
    params.push_back({prefix + ".beta", beta});
    buffers.push_back({prefix + ".running_mean", &running_mean});
    buffers.push_back({prefix + ".running_var", &running_var});
}

DepthwiseSeparableConv::DepthwiseSeparableConv(int in_ch, int out_ch, Rng& rng)
    : depthwise(in_ch, in_ch, 3, 1, 1, in_ch, true, rng),
      pointwise(in_ch, out_ch, 1, 1, 0, 1, true, rng) {}

Tensor DepthwiseSeparableConv::forward(const Tensor& x) const {
    return pointwise.forward(depthwise.forward(x));
}

void DepthwiseSeparableConv::collect(const std::string& prefix, std::vector<NamedParam>& params,
                                     std::vector<NamedBuffer>& buffers) {
    depthwise.collect(prefix + ".dw", params, buffers);
    pointwise.collect(prefix + ".pw", params, buffers);
}

int64_t DepthwiseSeparableConv::param_count() const {
    return depthwise.param_count() + pointwise.param_count();
}

int64_t DepthwiseSeparableConv::macs_per_image(int64_t h, int64_t w) const {
    return depthwise.macs_per_image(h, w) + pointwise.macs_per_image(h, w);
}

}  // namespace stein::nn
