#include "stein/optim.hpp"

#include <cmath>

namespace stein::harness {

AdamOptimizer::AdamOptimizer(std::vector<nn::NamedParam>* params, const AdamConfig& cfg)
    : params_(params), cfg_(cfg) {
    m_.resize(params->size());
    v_.resize(params->size());
    for (size_t i = 0; i < params->size(); ++i) {
        m_[i].assign((*params)[i].tensor.numel(), 0.0);
        v_[i].assign((*params)[i].tensor.numel(), 0.0);
    }
}

void AdamOptimizer::step() {
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (size_t i = 0; i < params_->size(); ++i) {
        auto& p = (*params_)[i].tensor;
        if (!p.has_grad())
            throw UsageError("adam: parameter '" + (*params_)[i].name +
                             "' has no gradient; run backward first");
        const auto& g = p.grad();
        auto& w = p.mutable_data();
        auto& m = m_[i];
        auto& v = v_[i];
        for (size_t j = 0; j < w.size(); ++j) {
            m[j] = cfg_.beta1 * m[j] + (1.0 - cfg_.beta1) * g[j];
            v[j] = cfg_.beta2 * v[j] + (1.0 - cfg_.beta2) * g[j] * g[j];
            const double mhat = m[j] / bc1;
            const double vhat = v[j] / bc2;
            w[j] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
            w[j] -= cfg_.lr * cfg_.weight_decay * w[j];
        }
    }
}

void AdamOptimizer::zero_grad() {
    for (auto& p : *params_) p.tensor.zero_grad();
}

void AdamOptimizer::restore(int64_t step_count, std::vector<std::vector<double>> m,
                            std::vector<std::vector<double>> v) {
    if (m.size() != m_.size() || v.size() != v_.size())
        throw DataError("adam restore: moment count mismatch");
    for (size_t i = 0; i < m.size(); ++i)
        if (m[i].size() != m_[i].size() || v[i].size() != v_[i].size())
            throw DataError("adam restore: moment shape mismatch at parameter " +
                            std::to_string(i));
    t_ = step_count;
    m_ = std::move(m);
    v_ = std::move(v);
}

}  // namespace stein::harness
