#include "stein/model.hpp"

namespace stein::model {

void ModelConfig::validate() const {
    if (stage_channels.size() != 4)
        throw ConfigError("ModelConfig: stage_channels must have 4 entries, got " +
                          std::to_string(stage_channels.size()));
    for (int c : stage_channels)
        if (c <= 0) throw ConfigError("ModelConfig: stage channels must be positive");
    if (blocks_per_level < 1) throw ConfigError("ModelConfig: blocks_per_level must be >= 1");
    if (mlp_ratio < 1) throw ConfigError("ModelConfig: mlp_ratio must be >= 1");
    if (num_classes != 2)
        throw ConfigError("ModelConfig: this head is binary, num_classes must be 2");
    if (decoder_channels < 1) throw ConfigError("ModelConfig: decoder_channels must be >= 1");
    if (input_h % 32 != 0 || input_w % 32 != 0)
        throw ConfigError("ModelConfig: input " + std::to_string(input_h) + "x" +
                          std::to_string(input_w) + " must be divisible by 32");
    if (mixer_kind == spectral::MixerKind::kMultiFrequency) {
        if (mixer_heads < 1 || mixer_heads > mixer_p * mixer_p)
            throw ConfigError("ModelConfig: mixer_heads outside [1, p^2]");
        for (int s = 1; s <= 4; ++s)
            for (int c : stage_level_channels(s))
                if ((c * mixer_expansion) % mixer_heads != 0)
                    throw ConfigError("ModelConfig: " + std::to_string(mixer_heads) +
                                      " heads do not divide " +
                                      std::to_string(c * mixer_expansion) + " mixer channels");
    }
}

std::vector<int> ModelConfig::stage_level_channels(int stage_index) const {
    if (stage_index < 1 || stage_index > 4)
        throw ConfigError("stage_level_channels: stage index outside 1..4");
    const int depth = 5 - stage_index;
    std::vector<int> levels(depth + 1);
    for (int i = 0; i <= depth; ++i) {
        const int pos = std::min(stage_index - 1 + i, 3);
        levels[i] = stage_channels[pos];
    }
    return levels;
}

spectral::FrequencySpec build_frequency_spec(const ModelConfig& cfg) {
    using spectral::FrequencyStrategy;
    switch (cfg.frequency_strategy) {
        case FrequencyStrategy::kPretrainedPriors: {
            if (!cfg.priors_file.empty()) {
                auto priority = spectral::load_priority_list(cfg.priors_file, cfg.mixer_p);
                return spectral::select_frequencies(cfg.frequency_strategy, cfg.mixer_heads,
                                                    cfg.mixer_p, std::nullopt, nullptr,
                                                    &priority);
            }
            return spectral::select_frequencies(cfg.frequency_strategy, cfg.mixer_heads,
                                                cfg.mixer_p);
        }
        case FrequencyStrategy::kRandomSelection:
            return spectral::select_frequencies(cfg.frequency_strategy, cfg.mixer_heads,
                                                cfg.mixer_p, cfg.frequency_seed);
        case FrequencyStrategy::kDynamicAssignment:
            return spectral::select_frequencies(cfg.frequency_strategy, cfg.mixer_heads,
                                                cfg.mixer_p, std::nullopt, &cfg.importance);
    }
    throw ConfigError("build_frequency_spec: unknown strategy");
}

SteinFormer::SteinFormer(const ModelConfig& cfg) : cfg_(cfg) {
    cfg_.validate();
    Rng rng(cfg_.init_seed);

    nn::MixerProto proto;
    proto.heads = cfg_.mixer_heads;
    proto.p = cfg_.mixer_p;
    proto.expansion = cfg_.mixer_expansion;
    proto.kind = cfg_.mixer_kind;
    if (cfg_.mixer_kind == spectral::MixerKind::kMultiFrequency)
        proto.spec = build_frequency_spec(cfg_);

    const int c0 = cfg_.stage_channels[0];
    stem_conv1_ = nn::Conv2dLayer(3, c0, 7, 2, 3, 1, true, rng);
    stem_norm1_ = nn::Norm2d(c0);
    stem_conv2_ = nn::Conv2dLayer(c0, c0, 3, 1, 1, 1, true, rng);
    stem_norm2_ = nn::Norm2d(c0);
    stem_conv3_ = nn::Conv2dLayer(c0, c0, 3, 1, 1, 1, true, rng);
    stem_norm3_ = nn::Norm2d(c0);

    for (int s = 1; s <= 4; ++s) {
        nn::CsiStageConfig scfg;
        scfg.stage_index = s;
        scfg.level_channels = cfg_.stage_level_channels(s);
        scfg.blocks_per_level = cfg_.blocks_per_level;
        scfg.mlp_ratio = cfg_.mlp_ratio;
        scfg.mixer = proto;
        stages_.emplace_back(scfg, rng);
        if (s < 4)
            transitions_.emplace_back(cfg_.stage_channels[s - 1], cfg_.stage_channels[s], 3, 2,
                                      1, 1, true, rng);
    }

    for (int s = 0; s < 4; ++s)
        head_stage_.emplace_back(2 * cfg_.stage_channels[s], cfg_.decoder_channels, 1, 1, 0, 1,
                                 true, rng);
    head_final_ =
        nn::Conv2dLayer(4 * cfg_.decoder_channels, cfg_.num_classes, 1, 1, 0, 1, true, rng);

    register_all();
}

void SteinFormer::register_all() {
    params_.clear();
    buffers_.clear();
    stem_conv1_.collect("stem.conv1", params_, buffers_);
    stem_norm1_.collect("stem.norm1", params_, buffers_);
    stem_conv2_.collect("stem.conv2", params_, buffers_);
    stem_norm2_.collect("stem.norm2", params_, buffers_);
    stem_conv3_.collect("stem.conv3", params_, buffers_);
    stem_norm3_.collect("stem.norm3", params_, buffers_);
    for (size_t i = 0; i < transitions_.size(); ++i)
        transitions_[i].collect("transition" + std::to_string(i + 1), params_, buffers_);
    for (size_t i = 0; i < stages_.size(); ++i)
        stages_[i].collect("stage" + std::to_string(i + 1), params_, buffers_);
    for (size_t i = 0; i < head_stage_.size(); ++i)
        head_stage_[i].collect("head.stage" + std::to_string(i + 1), params_, buffers_);
    head_final_.collect("head.final", params_, buffers_);
}

Tensor SteinFormer::patch_embed(const Tensor& image, const nn::Mode& mode) {
    if (image.shape().size() != 4 || image.dim(1) != 3)
        throw ShapeError("patch_embed: expected Nx3xHxW, got " + shape_str(image.shape()));
    if (image.dim(2) % 2 != 0 || image.dim(3) % 2 != 0)
        throw ConfigError("patch_embed: spatial dims must be even, got " +
                          shape_str(image.shape()));
    Tensor x = gelu(stem_norm1_.forward(stem_conv1_.forward(image), mode));
    x = gelu(stem_norm2_.forward(stem_conv2_.forward(x), mode));
    return stem_norm3_.forward(stem_conv3_.forward(x), mode);
}

SteinFormer::Output SteinFormer::forward(const Tensor& t1, const Tensor& t2,
                                         const nn::Mode& mode, Trace* trace) {
    if (t1.shape() != t2.shape())
        throw ShapeError("forward: image shapes differ, " + shape_str(t1.shape()) + " vs " +
                         shape_str(t2.shape()));
    const int64_t h = t1.dim(2), w = t1.dim(3);
    if (h % 32 != 0 || w % 32 != 0)
        throw ConfigError("forward: input " + std::to_string(h) + "x" + std::to_string(w) +
                          " must be divisible by 32");

    Tensor x1 = patch_embed(t1, mode);
    Tensor x2 = patch_embed(t2, mode);

    Output out;
    for (size_t s = 0; s < stages_.size(); ++s) {
        if (s > 0) {
            x1 = transitions_[s - 1].forward(x1);
            x2 = transitions_[s - 1].forward(x2);
        }
        Tensor rc;
        auto [g1, g2] = stages_[s].forward(x1, x2, mode, trace ? &rc : nullptr);
        if (trace) trace->coarse_change.push_back(rc);
        out.stage_features.emplace_back(g1, g2);
        x1 = g1;
        x2 = g2;
    }
    out.logits = decode(out.stage_features, static_cast<int>(h), static_cast<int>(w));
    return out;
}

Tensor SteinFormer::decode(const std::vector<std::pair<Tensor, Tensor>>& features, int out_h,
                           int out_w) {
    if (features.size() != head_stage_.size())
        throw UsageError("decode: expected " + std::to_string(head_stage_.size()) +
                         " stage feature pairs, got " + std::to_string(features.size()));
    std::vector<Tensor> maps;
    for (size_t s = 0; s < features.size(); ++s) {
        Tensor fused = head_stage_[s].forward(concat({features[s].first, features[s].second}, 1));
        maps.push_back(bilinear_resize(fused, out_h / 2, out_w / 2));
    }
    Tensor stacked = concat(maps, 1);
    Tensor logits = head_final_.forward(stacked);
    return bilinear_resize(logits, out_h, out_w);
}

int64_t SteinFormer::param_count() const {
    int64_t t = 0;
    for (const auto& p : params_) t += p.tensor.numel();
    return t;
}

profile::Ledger SteinFormer::profile_pair(int h, int w) const {
    profile::Ledger ledger;
    auto& rows = ledger.rows;
    const int64_t branch = 2;  // both temporal branches pass through shared weights

    rows.push_back({"stem.conv1", stem_conv1_.param_count(),
                    branch * stem_conv1_.macs_per_image(h, w)});
    rows.push_back({"stem.norm1", stem_norm1_.param_count(), 0});
    const int64_t h2 = h / 2, w2 = w / 2;
    rows.push_back({"stem.conv2", stem_conv2_.param_count(),
                    branch * stem_conv2_.macs_per_image(h2, w2)});
    rows.push_back({"stem.norm2", stem_norm2_.param_count(), 0});
    rows.push_back({"stem.conv3", stem_conv3_.param_count(),
                    branch * stem_conv3_.macs_per_image(h2, w2)});
    rows.push_back({"stem.norm3", stem_norm3_.param_count(), 0});

    int64_t sh = h2, sw = w2;
    for (size_t s = 0; s < stages_.size(); ++s) {
        if (s > 0) {
            rows.push_back({"transition" + std::to_string(s),
                            transitions_[s - 1].param_count(),
                            branch * transitions_[s - 1].macs_per_image(sh, sw)});
            sh /= 2;
            sw /= 2;
        }
        stages_[s].profile("stage" + std::to_string(s + 1), sh, sw, branch, rows);
    }

    int64_t hh = h2, hw = w2;
    for (size_t s = 0; s < head_stage_.size(); ++s) {
        rows.push_back({"head.stage" + std::to_string(s + 1), head_stage_[s].param_count(),
                        head_stage_[s].macs_per_image(hh, hw)});
        hh /= 2;
        hw /= 2;
    }
    rows.push_back({"head.final", head_final_.param_count(),
                    head_final_.macs_per_image(h / 2, w / 2)});
    return ledger;
}

}  // namespace stein::model
