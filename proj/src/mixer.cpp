#include "stein/mixer.hpp"

namespace stein::spectral {

void MixerConfig::validate() const {
    if (channels <= 0) throw ConfigError("MixerConfig: channels must be positive");
    if (kind == MixerKind::kPlainConv) return;
    if (heads <= 0) throw ConfigError("MixerConfig: heads must be positive");
    if (expansion <= 0) throw ConfigError("MixerConfig: expansion must be positive");
    if (inner_channels() % heads != 0)
        throw ConfigError("MixerConfig: " + std::to_string(inner_channels()) +
                          " mixer channels not divisible into " + std::to_string(heads) +
                          " heads");
    if (p % 2 == 0)
        throw ConfigError("MixerConfig: basis size p=" + std::to_string(p) +
                          " must be odd for shape-preserving filtering");
    if (static_cast<int>(spec.indices.size()) != heads)
        throw ConfigError("MixerConfig: " + std::to_string(spec.indices.size()) +
                          " selected frequencies for " + std::to_string(heads) + " heads");
    spec.validate();
    if (spec.p != p)
        throw ConfigError("MixerConfig: frequency spec built for p=" + std::to_string(spec.p) +
                          ", mixer uses p=" + std::to_string(p));
}

MultiFrequencyMixer::MultiFrequencyMixer(const MixerConfig& cfg, Rng& rng) : cfg_(cfg) {
    cfg_.validate();
    const int inner = cfg_.inner_channels();
    proj_in_ = nn::Conv2dLayer(cfg_.channels, inner, 1, 1, 0, 1, true, rng);
    proj_out_ = nn::Conv2dLayer(inner, cfg_.channels, 1, 1, 0, 1, true, rng);

    // One depthwise plane per channel; every channel of head i carries the
    // same fixed basis kernel B_{u_i, v_i}.
    const int group_ch = inner / cfg_.heads;
    std::vector<double> w(static_cast<size_t>(inner) * cfg_.p * cfg_.p);
    for (int head = 0; head < cfg_.heads; ++head) {
        const auto [u, v] = cfg_.spec.indices[head];
        const DctBasis basis = dct_basis(cfg_.p, u, v);
        for (int g = 0; g < group_ch; ++g) {
            const int ch = head * group_ch + g;
            std::copy(basis.kernel.begin(), basis.kernel.end(),
                      w.begin() + static_cast<size_t>(ch) * cfg_.p * cfg_.p);
        }
    }
    freq_weight_ = Tensor::from_data({inner, 1, cfg_.p, cfg_.p}, std::move(w), false);
}

Tensor MultiFrequencyMixer::forward(const Tensor& x) const {
    if (x.dim(1) != cfg_.channels)
        throw ConfigError("MultiFrequencyMixer: input has " + std::to_string(x.dim(1)) +
                          " channels, configured for " + std::to_string(cfg_.channels));
    Tensor a = proj_in_.forward(x);
    ConvSpec dw;
    dw.kernel_h = cfg_.p;
    dw.kernel_w = cfg_.p;
    dw.stride = 1;
    dw.padding = cfg_.p / 2;
    dw.groups = cfg_.inner_channels();
    dw.has_bias = false;
    Tensor filtered = conv2d(a, freq_weight_, Tensor(), dw);
    return proj_out_.forward(filtered);
}

void MultiFrequencyMixer::collect(const std::string& prefix,
                                  std::vector<nn::NamedParam>& params,
                                  std::vector<nn::NamedBuffer>& buffers) {
    proj_in_.collect(prefix + ".proj_in", params, buffers);
    proj_out_.collect(prefix + ".proj_out", params, buffers);
    // fixed, not learnable; serialized so checkpoints restore data-dependent
    // frequency selections (dynamic assignment) exactly
    buffers.push_back({prefix + ".freq_kernels", &freq_weight_.mutable_data()});
}

int64_t MultiFrequencyMixer::param_count() const {
    // The frequency kernels are fixed and contribute nothing.
    return proj_in_.param_count() + proj_out_.param_count();
}

int64_t MultiFrequencyMixer::macs_per_image(int64_t h, int64_t w) const {
    const int64_t inner = cfg_.inner_channels();
    const int64_t dw_macs = inner * h * w * cfg_.p * cfg_.p;
    return proj_in_.macs_per_image(h, w) + dw_macs + proj_out_.macs_per_image(h, w);
}

TokenMixer::TokenMixer(const MixerConfig& cfg, Rng& rng) : cfg_(cfg) {
    cfg_.validate();
    if (cfg_.kind == MixerKind::kMultiFrequency) {
        mfm_ = MultiFrequencyMixer(cfg_, rng);
    } else {
        conv_ = nn::Conv2dLayer(cfg_.channels, cfg_.channels, 3, 1, 1, 1, true, rng);
    }
}

Tensor TokenMixer::forward(const Tensor& x) const {
    return cfg_.kind == MixerKind::kMultiFrequency ? mfm_.forward(x) : conv_.forward(x);
}

void TokenMixer::collect(const std::string& prefix, std::vector<nn::NamedParam>& params,
                         std::vector<nn::NamedBuffer>& buffers) {
    if (cfg_.kind == MixerKind::kMultiFrequency)
        mfm_.collect(prefix, params, buffers);
    else
        conv_.collect(prefix + ".conv", params, buffers);
}

int64_t TokenMixer::param_count() const {
    return cfg_.kind == MixerKind::kMultiFrequency ? mfm_.param_count() : conv_.param_count();
}

int64_t TokenMixer::macs_per_image(int64_t h, int64_t w) const {
    return cfg_.kind == MixerKind::kMultiFrequency ? mfm_.macs_per_image(h, w)
                                                   : conv_.macs_per_image(h, w);
}

}  // namespace stein::spectral
