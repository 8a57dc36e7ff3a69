#include "stein/interactors.hpp"

namespace stein::nn {

CtiBlock::CtiBlock(int ch, Rng& rng) : channels(ch), fuse(2 * ch, ch, rng) {}

Tensor CtiBlock::coarse_change(const Tensor& f1, const Tensor& f2) const {
    return abs(sub(f1, f2));
}

std::pair<Tensor, Tensor> CtiBlock::forward(const Tensor& f1, const Tensor& f2) const {
    if (f1.shape() != f2.shape())
        throw ShapeError("CtiBlock: branch shapes differ, " + shape_str(f1.shape()) + " vs " +
                         shape_str(f2.shape()));
    if (f1.dim(1) != channels)
        throw ConfigError("CtiBlock: input has " + std::to_string(f1.dim(1)) +
                          " channels, configured for " + std::to_string(channels));
    Tensor rc = coarse_change(f1, f2);
    Tensor w1 = sigmoid(fuse.forward(concat({f1, rc}, 1)));
    Tensor w2 = sigmoid(fuse.forward(concat({f2, rc}, 1)));
    return {mul(w1, f1), mul(w2, f2)};
}

void CtiBlock::collect(const std::string& prefix, std::vector<NamedParam>& params,
                       std::vector<NamedBuffer>& buffers) {
    fuse.collect(prefix + ".fuse", params, buffers);
}

int64_t CtiBlock::param_count() const { return fuse.param_count(); }

void CtiBlock::profile(const std::string& prefix, int64_t h, int64_t w, int64_t runs,
                       std::vector<profile::LedgerRow>& rows) const {
    rows.push_back({prefix + ".fuse", fuse.param_count(), runs * fuse.macs_per_image(h, w)});
}

BaseBlock::BaseBlock(int ch, int ratio, const spectral::MixerConfig& mixer_cfg, Rng& rng)
    : channels(ch),
      mlp_ratio(ratio),
      norm1(ch),
      norm2(ch),
      mixer(mixer_cfg, rng),
      mlp_in(ch, ch * ratio, 1, 1, 0, 1, true, rng),
      mlp_out(ch * ratio, ch, 1, 1, 0, 1, true, rng) {
    if (mixer_cfg.channels != ch)
        throw ConfigError("BaseBlock: mixer configured for " +
                          std::to_string(mixer_cfg.channels) + " channels, block has " +
                          std::to_string(ch));
}

Tensor BaseBlock::forward(const Tensor& x, const Mode& mode) {
    if (x.dim(1) != channels)
        throw ConfigError("BaseBlock: input has " + std::to_string(x.dim(1)) +
                          " channels, configured for " + std::to_string(channels));
    Tensor y = add(x, mixer.forward(norm1.forward(x, mode)));
    Tensor z = add(y, mlp_out.forward(gelu(mlp_in.forward(norm2.forward(y, mode)))));
    return z;
}

void BaseBlock::collect(const std::string& prefix, std::vector<NamedParam>& params,
                        std::vector<NamedBuffer>& buffers) {
    norm1.collect(prefix + ".norm1", params, buffers);
    mixer.collect(prefix + ".mixer", params, buffers);
    norm2.collect(prefix + ".norm2", params, buffers);
    mlp_in.collect(prefix + ".mlp_in", params, buffers);
    mlp_out.collect(prefix + ".mlp_out", params, buffers);
}

int64_t BaseBlock::param_count() const {
    return norm1.param_count() + mixer.param_count() + norm2.param_count() +
           mlp_in.param_count() + mlp_out.param_count();
}

void BaseBlock::profile(const std::string& prefix, int64_t h, int64_t w, int64_t runs,
                        std::vector<profile::LedgerRow>& rows) const {
    rows.push_back({prefix + ".norm1", norm1.param_count(), 0});
    rows.push_back({prefix + ".mixer", mixer.param_count(), runs * mixer.macs_per_image(h, w)});
    rows.push_back({prefix + ".norm2", norm2.param_count(), 0});
    rows.push_back({prefix + ".mlp_in", mlp_in.param_count(),
                    runs * mlp_in.macs_per_image(h, w)});
    rows.push_back({prefix + ".mlp_out", mlp_out.param_count(),
                    runs * mlp_out.macs_per_image(h, w)});
}

spectral::MixerConfig MixerProto::at_channels(int channels) const {
    spectral::MixerConfig cfg;
    cfg.channels = channels;
    cfg.heads = heads;
    cfg.p = p;
    cfg.expansion = expansion;
    cfg.kind = kind;
    cfg.spec = spec;
    return cfg;
}

void CsiStageConfig::validate() const {
    if (stage_index < 1 || stage_index > 4)
        throw ConfigError("CsiStage: stage index " + std::to_string(stage_index) +
                          " outside 1..4");
    if (static_cast<int>(level_channels.size()) != depth() + 1)
        throw ConfigError("CsiStage: stage " + std::to_string(stage_index) + " needs " +
                          std::to_string(depth() + 1) + " channel entries, got " +
                          std::to_string(level_channels.size()));
    for (int c : level_channels)
        if (c <= 0) throw ConfigError("CsiStage: channel counts must be positive");
    if (blocks_per_level < 1)
        throw ConfigError("CsiStage: blocks_per_level must be at least 1");
}

CsiStage::CsiStage(const CsiStageConfig& cfg, Rng& rng) : cfg_(cfg) {
    cfg_.validate();
    const int d = cfg_.depth();
    enc_.reserve(d);
    for (int i = 0; i < d; ++i) {
        EncoderLevel lvl;
        for (int b = 0; b < cfg_.blocks_per_level; ++b)
            lvl.blocks.emplace_back(cfg_.level_channels[i], cfg_.mlp_ratio,
                                    cfg_.mixer.at_channels(cfg_.level_channels[i]), rng);
        // patch-merge style 2x reduction
        lvl.down = Conv2dLayer(cfg_.level_channels[i], cfg_.level_channels[i + 1], 2, 2, 0, 1,
                               true, rng);
        enc_.push_back(std::move(lvl));
    }
    cti_ = CtiBlock(cfg_.level_channels[d], rng);
    dec_.reserve(d);
    for (int i = 0; i < d; ++i) {
        DecoderLevel lvl;
        lvl.fuse = Conv2dLayer(cfg_.level_channels[i + 1] + cfg_.level_channels[i],
                               cfg_.level_channels[i], 1, 1, 0, 1, true, rng);
        for (int b = 0; b < cfg_.blocks_per_level; ++b)
            lvl.blocks.emplace_back(cfg_.level_channels[i], cfg_.mlp_ratio,
                                    cfg_.mixer.at_channels(cfg_.level_channels[i]), rng);
        dec_.push_back(std::move(lvl));
    }
}

Tensor CsiStage::encode(const Tensor& x_in, const Mode& mode, std::vector<Tensor>& skips) {
    Tensor x = x_in;
    for (auto& lvl : enc_) {
        for (auto& blk : lvl.blocks) x = blk.forward(x, mode);
        skips.push_back(x);
        x = lvl.down.forward(x);
    }
    return x;
}

Tensor CsiStage::decode(Tensor x, const std::vector<Tensor>& skips, const Mode& mode) {
    for (int i = static_cast<int>(dec_.size()) - 1; i >= 0; --i) {
        const Tensor& skip = skips[i];
        x = bilinear_resize(x, static_cast<int>(skip.dim(2)), static_cast<int>(skip.dim(3)));
        x = dec_[i].fuse.forward(concat({x, skip}, 1));
        for (auto& blk : dec_[i].blocks) x = blk.forward(x, mode);
    }
    return x;
}

std::pair<Tensor, Tensor> CsiStage::forward(const Tensor& f1, const Tensor& f2, const Mode& mode,
                                            Tensor* coarse_change) {
    if (f1.shape() != f2.shape())
        throw ShapeError("CsiStage: branch shapes differ, " + shape_str(f1.shape()) + " vs " +
                         shape_str(f2.shape()));
    if (f1.dim(1) != cfg_.level_channels[0])
        throw ConfigError("CsiStage: input has " + std::to_string(f1.dim(1)) +
                          " channels, stage expects " + std::to_string(cfg_.level_channels[0]));
    const int d = cfg_.depth();
    const int64_t div = int64_t{1} << d;
    if (f1.dim(2) % div != 0 || f1.dim(3) % div != 0)
        throw ConfigError("CsiStage: input " + std::to_string(f1.dim(2)) + "x" +
                          std::to_string(f1.dim(3)) + " not divisible by 2^" +
                          std::to_string(d));

    std::vector<Tensor> skips1, skips2;
    Tensor b1 = encode(f1, mode, skips1);
    Tensor b2 = encode(f2, mode, skips2);
    if (coarse_change) *coarse_change = cti_.coarse_change(b1, b2);
    auto [r1, r2] = cti_.forward(b1, b2);
    Tensor g1 = decode(r1, skips1, mode);
    Tensor g2 = decode(r2, skips2, mode);
    return {g1, g2};
}

void CsiStage::collect(const std::string& prefix, std::vector<NamedParam>& params,
                       std::vector<NamedBuffer>& buffers) {
    for (size_t i = 0; i < enc_.size(); ++i) {
        for (size_t b = 0; b < enc_[i].blocks.size(); ++b)
            enc_[i].blocks[b].collect(
                prefix + ".enc" + std::to_string(i) + ".block" + std::to_string(b), params,
                buffers);
        enc_[i].down.collect(prefix + ".enc" + std::to_string(i) + ".down", params, buffers);
    }
    cti_.collect(prefix + ".cti", params, buffers);
    for (size_t i = 0; i < dec_.size(); ++i) {
        dec_[i].fuse.collect(prefix + ".dec" + std::to_string(i) + ".fuse", params, buffers);
        for (size_t b = 0; b < dec_[i].blocks.size(); ++b)
            dec_[i].blocks[b].collect(
                prefix + ".dec" + std::to_string(i) + ".block" + std::to_string(b), params,
                buffers);
    }
}

int64_t CsiStage::param_count() const {
    int64_t t = cti_.param_count();
    for (const auto& lvl : enc_) {
        for (const auto& blk : lvl.blocks) t += blk.param_count();
        t += lvl.down.param_count();
    }
    for (const auto& lvl : dec_) {
        t += lvl.fuse.param_count();
        for (const auto& blk : lvl.blocks) t += blk.param_count();
    }
    return t;
}

void CsiStage::profile(const std::string& prefix, int64_t h, int64_t w, int64_t branch_runs,
                       std::vector<profile::LedgerRow>& rows) const {
    int64_t lh = h, lw = w;
    std::vector<std::pair<int64_t, int64_t>> level_size;
    for (size_t i = 0; i < enc_.size(); ++i) {
        level_size.emplace_back(lh, lw);
        for (size_t b = 0; b < enc_[i].blocks.size(); ++b)
            enc_[i].blocks[b].profile(
                prefix + ".enc" + std::to_string(i) + ".block" + std::to_string(b), lh, lw,
                branch_runs, rows);
        int64_t oh, ow;
        enc_[i].down.out_size(lh, lw, oh, ow);
        rows.push_back({prefix + ".enc" + std::to_string(i) + ".down",
                        enc_[i].down.param_count(),
                        branch_runs * enc_[i].down.macs_per_image(lh, lw)});
        lh = oh;
        lw = ow;
    }
    cti_.profile(prefix + ".cti", lh, lw, branch_runs, rows);
    for (int i = static_cast<int>(dec_.size()) - 1; i >= 0; --i) {
        auto [sh, sw] = level_size[i];
        rows.push_back({prefix + ".dec" + std::to_string(i) + ".fuse",
                        dec_[i].fuse.param_count(),
                        branch_runs * dec_[i].fuse.macs_per_image(sh, sw)});
        for (size_t b = 0; b < dec_[i].blocks.size(); ++b)
            dec_[i].blocks[b].profile(
                prefix + ".dec" + std::to_string(i) + ".block" + std::to_string(b), sh, sw,
                branch_runs, rows);
    }
}

}  // namespace stein::nn
