#include "stein/loss.hpp"

namespace stein::model {

void LossConfig::validate() const {
    if (lambda_focal < 0.0 || lambda_dice < 0.0)
        throw ConfigError("LossConfig: loss weights must be non-negative");
    if (focal_gamma < 0.0) throw ConfigError("LossConfig: gamma must be non-negative");
    if (focal_alpha <= 0.0 || focal_alpha > 1.0)
        throw ConfigError("LossConfig: alpha must lie in (0, 1]");
    if (dice_epsilon <= 0.0) throw ConfigError("LossConfig: dice epsilon must be positive");
    if (prob_clamp <= 0.0 || prob_clamp >= 0.5)
        throw ConfigError("LossConfig: probability clamp must lie in (0, 0.5)");
}

Tensor make_label_tensor(const std::vector<uint8_t>& labels, int64_t n, int64_t h, int64_t w) {
    if (static_cast<int64_t>(labels.size()) != n * h * w)
        throw ShapeError("make_label_tensor: " + std::to_string(labels.size()) +
                         " values for shape " + std::to_string(n) + "x" + std::to_string(h) +
                         "x" + std::to_string(w));
    std::vector<double> d(labels.size());
    for (size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] > 1)
            throw DataError("make_label_tensor: label value " + std::to_string(labels[i]) +
                            " at index " + std::to_string(i) + " is not binary");
        d[i] = static_cast<double>(labels[i]);
    }
    return Tensor::from_data({n, 1, h, w}, std::move(d));
}

namespace {

void check_loss_inputs(const Tensor& logits, const Tensor& labels) {
    if (logits.shape().size() != 4 || logits.dim(1) != 2)
        throw ShapeError("loss: logits must be Nx2xHxW, got " + shape_str(logits.shape()));
    if (labels.shape().size() != 4 || labels.dim(1) != 1 || labels.dim(0) != logits.dim(0) ||
        labels.dim(2) != logits.dim(2) || labels.dim(3) != logits.dim(3))
        throw ShapeError("loss: labels " + shape_str(labels.shape()) +
                         " do not match logits " + shape_str(logits.shape()));
    for (double v : labels.data())
        if (v != 0.0 && v != 1.0)
            throw DataError("loss: labels must be exactly 0 or 1");
}

/// Softmax probability of the changed class, shaped N x 1 x H x W.
Tensor changed_probability(const Tensor& logits) {
    Tensor sm = softmax_channels(logits);
    auto parts = split(sm, 1, {1, 1});
    return parts[1];
}

}  // namespace

Tensor focal_loss(const Tensor& logits, const Tensor& labels, const LossConfig& cfg) {
    cfg.validate();
    check_loss_inputs(logits, labels);
    Tensor p1 = changed_probability(logits);

    // p_hat = p for y=1, 1-p otherwise, via (2y-1)*p + (1-y).
    const auto& y = labels.data();
    std::vector<double> a(y.size()), b(y.size());
    for (size_t i = 0; i < y.size(); ++i) {
        a[i] = 2.0 * y[i] - 1.0;
        b[i] = 1.0 - y[i];
    }
    Tensor sel_scale = Tensor::from_data(labels.shape(), std::move(a));
    Tensor sel_shift = Tensor::from_data(labels.shape(), std::move(b));
    Tensor p_hat = clamp(add(mul(p1, sel_scale), sel_shift), cfg.prob_clamp,
                         1.0 - cfg.prob_clamp);

    Tensor one_minus = add_scalar(scale(p_hat, -1.0), 1.0);
    Tensor weighted = mul(pow_const(one_minus, cfg.focal_gamma), log(p_hat));
    return scale(mean(weighted), -cfg.focal_alpha);
}

Tensor dice_loss(const Tensor& logits, const Tensor& labels, const LossConfig& cfg) {
    cfg.validate();
    check_loss_inputs(logits, labels);
    Tensor s = changed_probability(logits);

    Tensor intersection = sum(mul(s, labels));
    Tensor denom = add_scalar(add(sum(s), sum(labels)), cfg.dice_epsilon);
    Tensor num = add_scalar(scale(intersection, 2.0), cfg.dice_epsilon);
    return add_scalar(scale(divide(num, denom), -1.0), 1.0);
}

Tensor hybrid_loss(const Tensor& logits, const Tensor& labels, const LossConfig& cfg) {
    return add(scale(focal_loss(logits, labels, cfg), cfg.lambda_focal),
               scale(dice_loss(logits, labels, cfg), cfg.lambda_dice));
}

}  // namespace stein::model
