#pragma once

#include <functional>
#include <string>
#include <vector>

#include "stein/common.hpp"
#include "stein/tensor.hpp"

namespace testutil {

using stein::Rng;
using stein::Shape;
using stein::Tensor;

inline Tensor rand_tensor(const Shape& shape, Rng& rng, double lo = -1.0, double hi = 1.0,
                          bool requires_grad = false) {
    std::vector<double> d(stein::shape_numel(shape));
    for (double& v : d) v = rng.uniform_real(lo, hi);
    return Tensor::from_data(shape, std::move(d), requires_grad);
}

struct FdReport {
    double max_rel = 0.0;
    double max_abs = 0.0;
    int64_t checked = 0;
    bool ok = true;
    std::string worst;
};

/**
 * Central finite differences against the analytic gradients of `leaves`.
 * `loss_fn` must be a pure function of the current leaf values. Tolerances:
 * relative error < rel_tol per element, absolute < abs_tol where the
 * numerical derivative magnitude falls under fd_floor.
 */
inline FdReport check_gradients(const std::function<Tensor()>& loss_fn,
                                const std::vector<Tensor>& leaves, double h = 1e-5,
                                double rel_tol = 1e-4, double abs_tol = 1e-7,
                                double fd_floor = 1e-6) {
    FdReport report;
    std::vector<Tensor> mutable_leaves = leaves;
    for (auto& t : mutable_leaves) t.zero_grad();

    Tensor loss = loss_fn();
    stein::backward(loss);

    std::vector<std::vector<double>> analytic;
    for (auto& t : mutable_leaves) {
        if (!t.requires_grad()) {
            analytic.emplace_back();
            continue;
        }
        analytic.push_back(t.has_grad() ? t.grad() : std::vector<double>(t.numel(), 0.0));
    }

    stein::NoGradGuard ng;
    for (size_t li = 0; li < mutable_leaves.size(); ++li) {
        auto& t = mutable_leaves[li];
        if (!t.requires_grad()) continue;
        auto& data = t.mutable_data();
        for (size_t i = 0; i < data.size(); ++i) {
            const double keep = data[i];
            data[i] = keep + h;
            const double f1 = loss_fn().item();
            data[i] = keep - h;
            const double f2 = loss_fn().item();
            data[i] = keep;
            const double fd = (f1 - f2) / (2.0 * h);
            const double an = analytic[li][i];
            const double err = std::fabs(an - fd);
            ++report.checked;
            bool elem_ok;
            if (std::fabs(fd) < fd_floor) {
                elem_ok = err < abs_tol;
                report.max_abs = std::max(report.max_abs, err);
            } else {
                const double rel = err / std::max(std::fabs(fd), std::fabs(an));
                // absolute agreement at the abs_tol scale also passes; the
                // relative bound is unreachable for small |fd| when central
                // differences hit their truncation floor
                elem_ok = rel < rel_tol || err < abs_tol;
                if (elem_ok) report.max_rel = std::max(report.max_rel, std::min(rel, rel_tol));
            }
            if (!elem_ok && report.ok) {
                report.ok = false;
                report.worst = "leaf " + std::to_string(li) + " elem " + std::to_string(i) +
                               ": analytic=" + std::to_string(an) +
                               " fd=" + std::to_string(fd);
            }
        }
    }
    return report;
}

inline double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
    double m = 0.0;
    for (size_t i = 0; i < a.size(); ++i) m = std::max(m, std::fabs(a[i] - b[i]));
    return m;
}

}  // namespace testutil
