#pragma once

#include "stein/dct.hpp"
#include "stein/layers.hpp"

namespace stein::spectral {

enum class MixerKind {
    kMultiFrequency,  // fixed DCT basis filters per head
    kPlainConv,       // learnable 3x3 convolution baseline
};

struct MixerConfig {
    int channels = 0;    // C in and out
    int heads = 8;       // M
    int p = 7;           // basis size
    int expansion = 1;   // width multiplier of the inner projection
    MixerKind kind = MixerKind::kMultiFrequency;
    FrequencySpec spec;

    void validate() const;
    int inner_channels() const { return channels * expansion; }
};

/**
 * Multi-frequency token mixer: 1x1 projection C -> E*C, split into M head
 * groups along channels, each group filtered by its fixed p x p DCT basis
 * kernel (depthwise, stride 1, zero padding p/2), concatenation, 1x1
 * projection E*C -> C. The basis kernels carry no learnable parameters and
 * never receive gradients.
 */
class MultiFrequencyMixer {
public:
    MultiFrequencyMixer() = default;
    MultiFrequencyMixer(const MixerConfig& cfg, Rng& rng);

    Tensor forward(const Tensor& x) const;
    void collect(const std::string& prefix, std::vector<nn::NamedParam>& params,
                 std::vector<nn::NamedBuffer>& buffers);
    int64_t param_count() const;
    int64_t macs_per_image(int64_t h, int64_t w) const;

    const MixerConfig& config() const { return cfg_; }
    const Tensor& frequency_kernels() const { return freq_weight_; }

private:
    MixerConfig cfg_;
    nn::Conv2dLayer proj_in_;
    nn::Conv2dLayer proj_out_;
    Tensor freq_weight_;  // [E*C, 1, p, p], frozen
};

/// Token-mixing sublayer of a base block; either the multi-frequency mixer
/// or its plain-convolution replacement.
class TokenMixer {
public:
    TokenMixer() = default;
    TokenMixer(const MixerConfig& cfg, Rng& rng);

    Tensor forward(const Tensor& x) const;
    void collect(const std::string& prefix, std::vector<nn::NamedParam>& params,
                 std::vector<nn::NamedBuffer>& buffers);
    int64_t param_count() const;
    int64_t macs_per_image(int64_t h, int64_t w) const;
    const MixerConfig& config() const { return cfg_; }
    const MultiFrequencyMixer& mfm() const { return mfm_; }

private:
    MixerConfig cfg_;
    MultiFrequencyMixer mfm_;
    nn::Conv2dLayer conv_;
};

}  // namespace stein::spectral
