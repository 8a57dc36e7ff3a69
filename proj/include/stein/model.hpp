#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "stein/interactors.hpp"
#include "stein/profile.hpp"

namespace stein::model {

/// Full architecture hyperparameters; the defaults reproduce the reference
/// configuration.
struct ModelConfig {
    std::vector<int> stage_channels = {32, 48, 64, 96};
    int blocks_per_level = 1;
    int mlp_ratio = 2;
    int mixer_heads = 8;      // M
    int mixer_p = 7;          // basis size
    int mixer_expansion = 2;  // inner projection width multiplier
    spectral::MixerKind mixer_kind = spectral::MixerKind::kMultiFrequency;
    spectral::FrequencyStrategy frequency_strategy =
        spectral::FrequencyStrategy::kPretrainedPriors;
    uint64_t frequency_seed = 0;
    std::string priors_file;          // optional "u v" priority rows
    std::vector<double> importance;   // p*p map for dynamic assignment
    int num_classes = 2;
    int decoder_channels = 32;
    int input_h = 256;
    int input_w = 256;
    uint64_t init_seed = 0;

    void validate() const;
    /// Channel schedule of one stage: native width stepping through the tail
    /// of stage_channels, deepest level pinned to the last entry.
    std::vector<int> stage_level_channels(int stage_index) const;
};

spectral::FrequencySpec build_frequency_spec(const ModelConfig& cfg);

/**
 * Bi-temporal change-detection backbone plus MLP decoder: shared patch
 * embedding, four U-shaped cross-spatial stages with cross-temporal
 * interaction at 1/32 resolution, and a per-stage fuse/upsample decode head
 * that emits two-class logits at input resolution.
 */
class SteinFormer {
public:
    SteinFormer() = default;
    explicit SteinFormer(const ModelConfig& cfg);

    struct Trace {
        std::vector<Tensor> coarse_change;  // bottom R_c per stage
    };
    struct Output {
        Tensor logits;  // N x num_classes x H x W
        std::vector<std::pair<Tensor, Tensor>> stage_features;
    };

    /// Stem: 3 -> stage_channels[0] with a single 2x reduction.
    Tensor patch_embed(const Tensor& image, const nn::Mode& mode);

    Output forward(const Tensor& t1, const Tensor& t2, const nn::Mode& mode,
                   Trace* trace = nullptr);

    /// Decoder over the four bi-temporal feature pairs.
    Tensor decode(const std::vector<std::pair<Tensor, Tensor>>& features, int out_h, int out_w);

    std::vector<nn::NamedParam>& parameters() { return params_; }
    std::vector<nn::NamedBuffer>& buffers() { return buffers_; }
    int64_t param_count() const;
    /// Accounting for one bi-temporal pair at the given input size.
    profile::Ledger profile_pair(int h, int w) const;

    const ModelConfig& config() const { return cfg_; }
    nn::CsiStage& stage(int i) { return stages_[i]; }

private:
    ModelConfig cfg_;
    nn::Conv2dLayer stem_conv1_, stem_conv2_, stem_conv3_;
    nn::Norm2d stem_norm1_, stem_norm2_, stem_norm3_;
    std::vector<nn::Conv2dLayer> transitions_;
    std::vector<nn::CsiStage> stages_;
    std::vector<nn::Conv2dLayer> head_stage_;
    nn::Conv2dLayer head_final_;
    std::vector<nn::NamedParam> params_;
    std::vector<nn::NamedBuffer> buffers_;

    void register_all();
};

}  // namespace stein::model
