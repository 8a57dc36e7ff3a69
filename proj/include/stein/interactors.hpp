#pragma once

#include <utility>

#include "stein/layers.hpp"
#include "stein/mixer.hpp"
#include "stein/profile.hpp"

namespace stein::nn {

/**
 * Cross-temporal interactor. Given bi-temporal features F1, F2 of identical
 * shape it forms a coarse change map R_c = |F1 - F2|, gates each branch with
 * W_t = sigmoid(fuse(concat(F_t, R_c))) and returns R_t = W_t * F_t. One
 * depthwise-separable fuse conv (2C -> C) is shared by both branches, which
 * together with the symmetric difference makes the block swap-equivariant.
 */
struct CtiBlock {
    int channels = 0;
    DepthwiseSeparableConv fuse;

    CtiBlock() = default;
    CtiBlock(int channels, Rng& rng);

    Tensor coarse_change(const Tensor& f1, const Tensor& f2) const;
    std::pair<Tensor, Tensor> forward(const Tensor& f1, const Tensor& f2) const;

    void collect(const std::string& prefix, std::vector<NamedParam>& params,
                 std::vector<NamedBuffer>& buffers);
    int64_t param_count() const;
    void profile(const std::string& prefix, int64_t h, int64_t w, int64_t runs,
                 std::vector<profile::LedgerRow>& rows) const;
};

/// Transformer-style block: x + mixer(norm(x)), then y + mlp(norm(y)).
/// The channel MLP is 1x1 conv C -> r*C, GELU, 1x1 conv r*C -> C.
struct BaseBlock {
    int channels = 0;
    int mlp_ratio = 2;
    Norm2d norm1;
    Norm2d norm2;
    spectral::TokenMixer mixer;
    Conv2dLayer mlp_in;
    Conv2dLayer mlp_out;

    BaseBlock() = default;
    BaseBlock(int channels, int mlp_ratio, const spectral::MixerConfig& mixer_cfg, Rng& rng);

    Tensor forward(const Tensor& x, const Mode& mode);

    void collect(const std::string& prefix, std::vector<NamedParam>& params,
                 std::vector<NamedBuffer>& buffers);
    int64_t param_count() const;
    void profile(const std::string& prefix, int64_t h, int64_t w, int64_t runs,
                 std::vector<profile::LedgerRow>& rows) const;
};

/// Prototype for building per-level mixers: everything but the channel count.
struct MixerProto {
    int heads = 8;
    int p = 7;
    int expansion = 1;
    spectral::MixerKind kind = spectral::MixerKind::kMultiFrequency;
    spectral::FrequencySpec spec;

    spectral::MixerConfig at_channels(int channels) const;
};

struct CsiStageConfig {
    int stage_index = 1;             // 1..4; depth = 5 - stage_index
    std::vector<int> level_channels; // size depth+1, native first, bottom last
    int blocks_per_level = 1;
    int mlp_ratio = 2;
    MixerProto mixer;

    int depth() const { return 5 - stage_index; }
    void validate() const;
};

/**
 * Per-stage U-shaped cross-spatial interactor. The encoder applies
 * [base block -> strided 2x downsample] per level; the bottom features of the
 * two branches interact through a CTI; the decoder applies
 * [bilinear 2x upsample -> concat same-branch skip -> 1x1 fuse -> base block]
 * per level. Both temporal branches share all weights.
 */
class CsiStage {
public:
    CsiStage() = default;
    CsiStage(const CsiStageConfig& cfg, Rng& rng);

    /// Optional capture of the bottom coarse change map.
    std::pair<Tensor, Tensor> forward(const Tensor& f1, const Tensor& f2, const Mode& mode,
                                      Tensor* coarse_change = nullptr);

    const CsiStageConfig& config() const { return cfg_; }
    const CtiBlock& cti() const { return cti_; }
    CtiBlock& cti() { return cti_; }

    void collect(const std::string& prefix, std::vector<NamedParam>& params,
                 std::vector<NamedBuffer>& buffers);
    int64_t param_count() const;
    /// h, w: native input size of one branch. `branch_runs` is the number of
    /// branch passes per counted input (2 for a bi-temporal pair).
    void profile(const std::string& prefix, int64_t h, int64_t w, int64_t branch_runs,
                 std::vector<profile::LedgerRow>& rows) const;

private:
    CsiStageConfig cfg_;
    struct EncoderLevel {
        std::vector<BaseBlock> blocks;
        Conv2dLayer down;
    };
    struct DecoderLevel {
        Conv2dLayer fuse;
        std::vector<BaseBlock> blocks;
    };
    std::vector<EncoderLevel> enc_;
    CtiBlock cti_;
    std::vector<DecoderLevel> dec_;  // index i fuses with encoder level i

    Tensor encode(const Tensor& x, const Mode& mode, std::vector<Tensor>& skips);
    Tensor decode(Tensor x, const std::vector<Tensor>& skips, const Mode& mode);
};

}  // namespace stein::nn
