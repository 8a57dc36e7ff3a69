#pragma once

#include "stein/tensor.hpp"

namespace stein::model {

struct LossConfig {
    double lambda_focal = 1.0;
    double lambda_dice = 1.0;
    double focal_alpha = 0.25;
    double focal_gamma = 2.0;
    double dice_epsilon = 1.0;
    double prob_clamp = 1e-7;

    void validate() const;
};

/// Builds an N x 1 x H x W {0,1} constant tensor from a binary pixel map.
/// Values other than 0/1 raise a data error.
Tensor make_label_tensor(const std::vector<uint8_t>& labels, int64_t n, int64_t h, int64_t w);

/// Mean over pixels of -alpha * (1 - p_hat)^gamma * log(p_hat) where p_hat is
/// the softmax probability of the true class, clamped away from 0 and 1.
Tensor focal_loss(const Tensor& logits, const Tensor& labels, const LossConfig& cfg);

/// Global soft dice on the changed-class probability map:
/// 1 - (2*sum(E*s) + eps) / (sum(E) + sum(s) + eps).
Tensor dice_loss(const Tensor& logits, const Tensor& labels, const LossConfig& cfg);

Tensor hybrid_loss(const Tensor& logits, const Tensor& labels, const LossConfig& cfg);

}  // namespace stein::model
