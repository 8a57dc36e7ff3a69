#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>

#include "stein/loss.hpp"
#include "stein/model.hpp"
#include "stein/serialize.hpp"
#include "test_utils.hpp"

using namespace stein;
using namespace stein::model;
using testutil::check_gradients;
using testutil::rand_tensor;

namespace {

/// Small model for gradient and behavior tests.
ModelConfig toy_config(int input = 32) {
    ModelConfig cfg;
    cfg.stage_channels = {2, 3, 4, 6};
    cfg.mixer_heads = 2;
    cfg.mixer_p = 3;
    cfg.mixer_expansion = 2;
    cfg.decoder_channels = 4;
    cfg.input_h = cfg.input_w = input;
    return cfg;
}

Tensor logits_tensor(std::vector<double> v, int64_t n, int64_t h, int64_t w) {
    return Tensor::from_data({n, 2, h, w}, std::move(v));
}

}  // namespace

TEST_CASE("default config reproduces the reference channel schedule") {
    ModelConfig cfg;
    CHECK(cfg.stage_level_channels(1) == std::vector<int>{32, 48, 64, 96, 96});
    CHECK(cfg.stage_level_channels(2) == std::vector<int>{48, 64, 96, 96});
    CHECK(cfg.stage_level_channels(3) == std::vector<int>{64, 96, 96});
    CHECK(cfg.stage_level_channels(4) == std::vector<int>{96, 96});
}

TEST_CASE("patch embed halves the resolution and widens to the stem channels") {
    ModelConfig cfg;
    cfg.input_h = cfg.input_w = 256;
    SteinFormer net(cfg);
    Tensor img = Tensor::zeros({1, 3, 256, 256});
    CHECK(net.patch_embed(img, nn::Mode::eval()).shape() == Shape{1, 32, 128, 128});
    Tensor img2 = Tensor::zeros({1, 3, 64, 64});
    CHECK(net.patch_embed(img2, nn::Mode::eval()).shape() == Shape{1, 32, 32, 32});
    Tensor odd = Tensor::zeros({1, 3, 63, 64});
    CHECK_THROWS_AS(net.patch_embed(odd, nn::Mode::eval()), ConfigError);
}

TEST_CASE("patch embed gradient check at toy width") {
    Rng rng(60);
    SteinFormer net(toy_config());
    Tensor img = rand_tensor({1, 3, 8, 8}, rng, 0.0, 1.0, true);
    std::vector<Tensor> leaves = {img};
    for (auto& p : net.parameters())
        if (p.name.rfind("stem.", 0) == 0) leaves.push_back(p.tensor);
    auto rep = check_gradients(
        [&] {
            Tensor y = net.patch_embed(img, nn::Mode::frozen_train());
            return sum(mul(y, y));
        },
        leaves);
    CHECK_MESSAGE(rep.ok, rep.worst);
}

TEST_CASE("model forward: logits at input resolution plus four feature scales") {
    Rng rng(61);
    SteinFormer net(toy_config(64));
    Tensor t1 = rand_tensor({2, 3, 64, 64}, rng, 0.0, 1.0);
    Tensor t2 = rand_tensor({2, 3, 64, 64}, rng, 0.0, 1.0);
    NoGradGuard ng;
    auto out = net.forward(t1, t2, nn::Mode::eval());
    CHECK(out.logits.shape() == Shape{2, 2, 64, 64});
    REQUIRE(out.stage_features.size() == 4);
    const auto& ch = net.config().stage_channels;
    for (int s = 0; s < 4; ++s) {
        const int64_t res = 64 >> (s + 1);
        CHECK(out.stage_features[s].first.shape() == Shape{2, ch[s], res, res});
        CHECK(out.stage_features[s].second.shape() == Shape{2, ch[s], res, res});
    }
    for (double v : out.logits.data()) CHECK(std::isfinite(v));
}

TEST_CASE("model forward is deterministic for a fixed seed") {
    Rng rng(62);
    Tensor t1 = rand_tensor({1, 3, 32, 32}, rng, 0.0, 1.0);
    Tensor t2 = rand_tensor({1, 3, 32, 32}, rng, 0.0, 1.0);
    SteinFormer a(toy_config());
    SteinFormer b(toy_config());
    NoGradGuard ng;
    auto oa = a.forward(t1, t2, nn::Mode::eval());
    auto ob = b.forward(t1, t2, nn::Mode::eval());
    CHECK(oa.logits.data() == ob.logits.data());
    auto oa2 = a.forward(t1, t2, nn::Mode::eval());
    CHECK(oa.logits.data() == oa2.logits.data());
}

TEST_CASE("equal frames with a zeroed cti fuse leave a zero change map everywhere") {
    Rng rng(63);
    SteinFormer net(toy_config());
    for (int s = 0; s < 4; ++s) {
        std::vector<nn::NamedParam> params;
        std::vector<nn::NamedBuffer> buffers;
        net.stage(s).cti().collect("c", params, buffers);
        for (auto& np : params) {
            auto& d = np.tensor.mutable_data();
            std::fill(d.begin(), d.end(), 0.0);
        }
    }
    Tensor t = rand_tensor({1, 3, 32, 32}, rng, 0.0, 1.0);
    NoGradGuard ng;
    SteinFormer::Trace trace;
    net.forward(t, t, nn::Mode::eval(), &trace);
    REQUIRE(trace.coarse_change.size() == 4);
    for (const auto& rc : trace.coarse_change)
        for (double v : rc.data()) CHECK(v == 0.0);
}

TEST_CASE("decoder channel arithmetic and zero-feature behavior") {
    Rng rng(64);
    ModelConfig cfg;  // default widths: head sees 2*[32,48,64,96] -> 4x32 -> 2
    cfg.input_h = cfg.input_w = 64;
    SteinFormer net(cfg);
    NoGradGuard ng;

    std::vector<std::pair<Tensor, Tensor>> feats;
    for (int s = 0; s < 4; ++s) {
        const int64_t res = 64 >> (s + 1);
        feats.emplace_back(Tensor::zeros({1, cfg.stage_channels[s], res, res}),
                           Tensor::zeros({1, cfg.stage_channels[s], res, res}));
    }
    Tensor logits = net.decode(feats, 64, 64);
    CHECK(logits.shape() == Shape{1, 2, 64, 64});

    // all-zero features: logits equal the final conv bias (zero at init)
    for (double v : logits.data()) CHECK(v == 0.0);

    // set the final bias and reread
    for (auto& p : net.parameters())
        if (p.name == "head.final.bias") {
            p.tensor.mutable_data() = {0.25, -0.5};
        }
    Tensor logits2 = net.decode(feats, 64, 64);
    const int64_t hw = 64 * 64;
    for (int64_t i = 0; i < hw; ++i) {
        CHECK(logits2.data()[i] == doctest::Approx(0.25).epsilon(1e-12));
        CHECK(logits2.data()[hw + i] == doctest::Approx(-0.5).epsilon(1e-12));
    }

    feats.pop_back();
    CHECK_THROWS_AS(net.decode(feats, 64, 64), UsageError);
}

TEST_CASE("focal loss identities") {
    LossConfig cfg;

    // saturated correct predictions drive the loss to zero
    const int64_t n = 1, h = 4, w = 4;
    std::vector<double> big(n * 2 * h * w, 0.0);
    std::vector<uint8_t> lab(h * w, 1);
    for (int64_t i = 0; i < h * w; ++i) big[h * w + i] = 40.0;  // changed-class logit
    Tensor labels = make_label_tensor(lab, n, h, w);
    CHECK(focal_loss(logits_tensor(big, n, h, w), labels, cfg).item() < 1e-6);

    // alpha=1, gamma=0 is exactly mean binary cross-entropy
    Rng rng(65);
    LossConfig plain = cfg;
    plain.focal_alpha = 1.0;
    plain.focal_gamma = 0.0;
    std::vector<double> lg(n * 2 * h * w);
    for (double& v : lg) v = rng.uniform_real(-2.0, 2.0);
    std::vector<uint8_t> rl(h * w);
    for (auto& v : rl) v = static_cast<uint8_t>(rng.uniform_u64(2));
    Tensor rlabels = make_label_tensor(rl, n, h, w);
    const double got = focal_loss(logits_tensor(lg, n, h, w), rlabels, plain).item();
    double ce = 0.0;
    for (int64_t i = 0; i < h * w; ++i) {
        const double a = lg[i], b = lg[h * w + i];
        const double p1 = std::exp(b) / (std::exp(a) + std::exp(b));
        const double phat = rl[i] ? p1 : 1.0 - p1;
        ce += -std::log(phat);
    }
    ce /= static_cast<double>(h * w);
    CHECK(std::fabs(got - ce) < 1e-12);
}

TEST_CASE("focal loss single-pixel value matches direct evaluation") {
    // one pixel, y=1, p=0.7, alpha=0.25, gamma=2
    LossConfig cfg;
    const double p = 0.7;
    const double logit = std::log(p / (1.0 - p));
    Tensor logits = logits_tensor({0.0, logit}, 1, 1, 1);
    Tensor labels = make_label_tensor({1}, 1, 1, 1);
    const double expect = 0.25 * 0.09 * -std::log(0.7);  // 0.008025...
    CHECK(focal_loss(logits, labels, cfg).item() == doctest::Approx(expect).epsilon(1e-9));
    CHECK(focal_loss(logits, labels, cfg).item() == doctest::Approx(0.008025).epsilon(1e-3));
}

TEST_CASE("focal loss rejects non-binary labels") {
    CHECK_THROWS_AS(make_label_tensor({2}, 1, 1, 1), DataError);
    Tensor bad = Tensor::from_data({1, 1, 1, 1}, {0.5});
    LossConfig cfg;
    CHECK_THROWS_AS(focal_loss(logits_tensor({0.0, 0.0}, 1, 1, 1), bad, cfg), DataError);
}

TEST_CASE("dice loss identities") {
    LossConfig cfg;
    const int64_t h = 64, w = 64;

    // perfect one-hot match: loss limited only by the smoothing term
    std::vector<double> lg(2 * h * w, 0.0);
    std::vector<uint8_t> lab(h * w);
    Rng rng(66);
    for (int64_t i = 0; i < h * w; ++i) {
        lab[i] = static_cast<uint8_t>(rng.uniform_u64(2));
        lg[i] = lab[i] ? -40.0 : 40.0;
        lg[h * w + i] = lab[i] ? 40.0 : -40.0;
    }
    Tensor labels = make_label_tensor(lab, 1, h, w);
    CHECK(dice_loss(logits_tensor(lg, 1, h, w), labels, cfg).item() <= 1e-3);

    // exact complement on a half-changed map: loss approaches 1
    std::vector<double> inv(2 * h * w);
    std::vector<uint8_t> half(h * w, 0);
    for (int64_t i = 0; i < h * w / 2; ++i) half[i] = 1;
    for (int64_t i = 0; i < h * w; ++i) {
        inv[i] = half[i] ? 40.0 : -40.0;
        inv[h * w + i] = half[i] ? -40.0 : 40.0;
    }
    Tensor hlabels = make_label_tensor(half, 1, h, w);
    const double expect = 1.0 - 1.0 / (h * w / 2.0 + h * w / 2.0 + 1.0);
    CHECK(dice_loss(logits_tensor(inv, 1, h, w), hlabels, cfg).item() ==
          doctest::Approx(expect).epsilon(1e-9));
}

TEST_CASE("dice loss hand-computed 4x4 example") {
    // 4 changed pixels, probability 0.5 everywhere: 1 - 5/13
    LossConfig cfg;
    std::vector<double> lg(2 * 16, 0.0);  // equal logits -> p = 0.5
    std::vector<uint8_t> lab(16, 0);
    lab[0] = lab[5] = lab[10] = lab[15] = 1;
    Tensor labels = make_label_tensor(lab, 1, 4, 4);
    CHECK(dice_loss(logits_tensor(lg, 1, 4, 4), labels, cfg).item() ==
          doctest::Approx(1.0 - 5.0 / 13.0).epsilon(1e-9));
}

TEST_CASE("hybrid loss is the weighted sum of its parts") {
    Rng rng(67);
    const int64_t h = 8, w = 8;
    std::vector<double> lg(2 * h * w);
    for (double& v : lg) v = rng.uniform_real(-2.0, 2.0);
    std::vector<uint8_t> lab(h * w);
    for (auto& v : lab) v = static_cast<uint8_t>(rng.uniform_u64(2));
    Tensor logits = logits_tensor(lg, 1, h, w);
    Tensor labels = make_label_tensor(lab, 1, h, w);

    LossConfig cfg;
    const double f = focal_loss(logits, labels, cfg).item();
    const double d = dice_loss(logits, labels, cfg).item();
    CHECK(std::fabs(hybrid_loss(logits, labels, cfg).item() - (f + d)) < 1e-12);

    cfg.lambda_focal = 2.0;
    CHECK(std::fabs(hybrid_loss(logits, labels, cfg).item() - (2.0 * f + d)) < 1e-12);

    cfg.lambda_focal = 0.0;
    cfg.lambda_dice = 0.0;
    CHECK(hybrid_loss(logits, labels, cfg).item() == 0.0);
}

TEST_CASE("losses are non-negative and decrease along the gradient") {
    Rng rng(68);
    LossConfig cfg;
    for (int t = 0; t < 5; ++t) {
        const int64_t h = 6, w = 6;
        Tensor logits = rand_tensor({1, 2, h, w}, rng, -2.0, 2.0, true);
        std::vector<uint8_t> lab(h * w);
        for (auto& v : lab) v = static_cast<uint8_t>(rng.uniform_u64(2));
        Tensor labels = make_label_tensor(lab, 1, h, w);

        Tensor loss = hybrid_loss(logits, labels, cfg);
        CHECK(loss.item() >= 0.0);
        CHECK(focal_loss(logits, labels, cfg).item() >= 0.0);
        CHECK(dice_loss(logits, labels, cfg).item() >= 0.0);

        logits.zero_grad();
        backward(loss);
        auto stepped = logits.data();
        for (size_t i = 0; i < stepped.size(); ++i) stepped[i] -= 1e-3 * logits.grad()[i];
        Tensor moved = Tensor::from_data(logits.shape(), stepped);
        CHECK(hybrid_loss(moved, labels, cfg).item() < loss.item());
    }
}

TEST_CASE("hybrid loss end-to-end gradient check through a tiny model") {
    Rng rng(69);
    ModelConfig mc = toy_config(32);
    SteinFormer net(mc);
    LossConfig lc;
    Tensor t1 = rand_tensor({1, 3, 32, 32}, rng, 0.0, 1.0, true);
    Tensor t2 = rand_tensor({1, 3, 32, 32}, rng, 0.0, 1.0, true);
    std::vector<uint8_t> lab(32 * 32);
    for (auto& v : lab) v = static_cast<uint8_t>(rng.uniform_u64(2));
    Tensor labels = make_label_tensor(lab, 1, 32, 32);

    std::vector<Tensor> leaves = {t1, t2};
    for (auto& p : net.parameters()) leaves.push_back(p.tensor);
    auto rep = check_gradients(
        [&] {
            auto out = net.forward(t1, t2, nn::Mode::frozen_train());
            return hybrid_loss(out.logits, labels, lc);
        },
        leaves);
    CHECK_MESSAGE(rep.ok, rep.worst);
    CHECK(rep.checked > 5000);  // every parameter and input element
}

TEST_CASE("parameter count: hand-checkable pieces") {
    Rng rng(70);
    nn::Conv2dLayer lone(3, 8, 1, 1, 0, 1, true, rng);
    CHECK(lone.param_count() == 3 * 8 + 8);

    nn::DepthwiseSeparableConv ds(3, 3, rng);
    CHECK(ds.param_count() == 27 + 3 + 9 + 3);
}

TEST_CASE("parameter count: default budget and invariance to input size") {
    SteinFormer a{ModelConfig{}};
    const int64_t params = a.param_count();
    CHECK(params > 1008000);   // within -20% of 1.26M
    CHECK(params < 1512000);   // within +20% of 1.26M

    ModelConfig big;
    big.input_h = big.input_w = 512;
    SteinFormer b(big);
    CHECK(b.param_count() == params);

    // ledger total agrees with the registry
    CHECK(a.profile_pair(256, 256).total_params() == params);
}

TEST_CASE("flops: formula instantiation and resolution scaling") {
    Rng rng(71);
    nn::Conv2dLayer one(2, 4, 1, 1, 0, 1, true, rng);
    CHECK(2 * one.macs_per_image(8, 8) == 1024);

    SteinFormer net{ModelConfig{}};
    auto l256 = net.profile_pair(256, 256);
    auto l512 = net.profile_pair(512, 512);
    CHECK(l512.total_macs() == 4 * l256.total_macs());

    const double flops = static_cast<double>(l256.total_flops());
    CHECK(flops > 9.42e9 * 0.75);
    CHECK(flops < 9.42e9 * 1.25);

    // the full figure equals the sum over the emitted ledger
    int64_t acc = 0;
    for (const auto& row : l256.rows) acc += row.flops();
    CHECK(acc == l256.total_flops());
    const std::string csv = l256.to_csv();
    CHECK(csv.rfind("name,params,flops", 0) == 0);
}

TEST_CASE("weights serialization round trip") {
    Rng rng(72);
    ModelConfig mc = toy_config();
    SteinFormer a(mc);
    // nudge buffers away from defaults so they are exercised too
    Tensor t = rand_tensor({2, 3, 32, 32}, rng, 0.0, 1.0);
    a.forward(t, t, nn::Mode::train());

    const std::string path = "/tmp/stein_model_test.stein";
    save_model(path, a);

    SteinFormer b(mc);
    auto leftovers = load_model(path, b);
    CHECK(leftovers.empty());

    NoGradGuard ng;
    auto oa = a.forward(t, t, nn::Mode::eval());
    auto ob = b.forward(t, t, nn::Mode::eval());
    // weights pass through float32 in the file; a float32 round trip is
    // idempotent, so save(load(x)) == save(x) bit for bit
    const std::string path2 = "/tmp/stein_model_test2.stein";
    save_model(path2, b);
    auto e1 = load_weights(path);
    auto e2 = load_weights(path2);
    REQUIRE(e1.size() == e2.size());
    for (size_t i = 0; i < e1.size(); ++i) {
        CHECK(e1[i].name == e2[i].name);
        CHECK(e1[i].values == e2[i].values);
    }
    // and the behavior difference is at float32 rounding level
    for (int64_t i = 0; i < oa.logits.numel(); ++i)
        CHECK(std::fabs(oa.logits.data()[i] - ob.logits.data()[i]) < 1e-4);
}

TEST_CASE("weights file: magic and error paths") {
    const std::string path = "/tmp/stein_bad.stein";
    {
        std::FILE* f = std::fopen(path.c_str(), "wb");
        std::fputs("NOTAMODEL", f);
        std::fclose(f);
    }
    CHECK_THROWS_AS(load_weights(path), DataError);
    CHECK_THROWS_AS(load_weights("/tmp/missing_file.stein"), DataError);

    // missing tensors are named
    SteinFormer a{toy_config()};
    save_weights("/tmp/stein_partial.stein", {{"stem.conv1.weight", {1}, {0.0}}});
    CHECK_THROWS_AS(load_model("/tmp/stein_partial.stein", a), DataError);
}

TEST_CASE("model config validation") {
    ModelConfig bad;
    bad.stage_channels = {32, 48, 64};
    CHECK_THROWS_AS(SteinFormer{bad}, ConfigError);

    ModelConfig odd;
    odd.input_h = 100;  // not divisible by 32
    CHECK_THROWS_AS(SteinFormer{odd}, ConfigError);

    ModelConfig heads;
    heads.mixer_heads = 7;  // does not divide 2*32
    CHECK_THROWS_AS(SteinFormer{heads}, ConfigError);

    ModelConfig da;
    da.frequency_strategy = spectral::FrequencyStrategy::kDynamicAssignment;
    CHECK_THROWS_AS(SteinFormer{da}, ConfigError);  // no importance map supplied
}

TEST_CASE("plain-conv mixer variant builds and differs in parameter count") {
    ModelConfig dct = toy_config();
    ModelConfig conv = toy_config();
    conv.mixer_kind = spectral::MixerKind::kPlainConv;
    SteinFormer a(dct), b(conv);
    CHECK(a.param_count() != b.param_count());
    Rng rng(73);
    Tensor t = rand_tensor({1, 3, 32, 32}, rng, 0.0, 1.0);
    NoGradGuard ng;
    CHECK(b.forward(t, t, nn::Mode::eval()).logits.shape() == Shape{1, 2, 32, 32});
}
