#pragma once

#include "stein/layers.hpp"

namespace stein::harness {

struct AdamConfig {
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 1e-5;  // decoupled
};

/// Adam with decoupled weight decay over a fixed parameter list.
class AdamOptimizer {
public:
    AdamOptimizer() = default;
    AdamOptimizer(std::vector<nn::NamedParam>* params, const AdamConfig& cfg);

    void set_lr(double lr) { cfg_.lr = lr; }
    double lr() const { return cfg_.lr; }
    int64_t step_count() const { return t_; }

    /// One update from the gradients accumulated on the parameters.
    /// A trainable parameter without a gradient is a training error.
    void step();
    void zero_grad();

    // checkpointing access
    const std::vector<std::vector<double>>& first_moments() const { return m_; }
    const std::vector<std::vector<double>>& second_moments() const { return v_; }
    void restore(int64_t step_count, std::vector<std::vector<double>> m,
                 std::vector<std::vector<double>> v);

private:
    std::vector<nn::NamedParam>* params_ = nullptr;
    AdamConfig cfg_;
    int64_t t_ = 0;
    std::vector<std::vector<double>> m_, v_;
};

}  // namespace stein::harness
