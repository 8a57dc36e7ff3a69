#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "stein/common.hpp"

namespace stein {

struct TensorNode;

/**
 * Dense N-d real tensor with reverse-mode differentiation.
 *
 * Storage is row-major double precision. A Tensor is a cheap handle onto a
 * shared node; nodes produced by operations are treated as immutable.
 * Operations record a backward closure when any input participates in the
 * gradient graph. backward() accumulates into .grad (repeated calls add up;
 * use zero_grad() between steps).
 */
class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor full(Shape shape, double value, bool requires_grad = false);
    static Tensor from_data(Shape shape, std::vector<double> data, bool requires_grad = false);
    static Tensor scalar(double v, bool requires_grad = false);

    bool defined() const { return node_ != nullptr; }
    const Shape& shape() const;
    int64_t numel() const;
    int64_t dim(int i) const;
    bool requires_grad() const;

    const std::vector<double>& data() const;
    /// Direct access for leaf tensors (weights, buffers). Mutating a tensor
    /// that other ops already consumed invalidates recorded gradients.
    std::vector<double>& mutable_data();
    double item() const;

    bool has_grad() const;
    const std::vector<double>& grad() const;
    void zero_grad();

    /// Same data, no graph participation.
    Tensor detach() const;

    std::shared_ptr<TensorNode> node() const { return node_; }
    explicit Tensor(std::shared_ptr<TensorNode> node) : node_(std::move(node)) {}

private:
    std::shared_ptr<TensorNode> node_;
};

struct TensorNode {
    Shape shape;
    std::vector<double> data;
    std::vector<double> grad;       // persistent; sums over backward passes
    std::vector<double> pass_grad;  // scratch for the pass in flight
    bool requires_grad = false;
    std::vector<std::shared_ptr<TensorNode>> parents;
    std::function<void(TensorNode&)> backward_fn;

    // Backward closures accumulate into the pass-scoped buffer; backward()
    // folds it into .grad once the pass completes.
    std::vector<double>& ensure_grad() {
        if (pass_grad.empty()) pass_grad.assign(data.size(), 0.0);
        return pass_grad;
    }
};

/// Thread-local switch for gradient recording.
bool grad_enabled();

/// RAII scope that disables graph construction (inference passes).
struct NoGradGuard {
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool previous_;
};

// ---- elementwise ----
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor divide(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, double s);
Tensor add_scalar(const Tensor& x, double c);
Tensor sigmoid(const Tensor& x);
Tensor gelu(const Tensor& x);
Tensor relu(const Tensor& x);
Tensor abs(const Tensor& x);
Tensor log(const Tensor& x);
Tensor pow_const(const Tensor& x, double exponent);
Tensor clamp(const Tensor& x, double lo, double hi);

// ---- reductions ----
Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);

// ---- shape ----
Tensor concat(const std::vector<Tensor>& xs, int axis);
std::vector<Tensor> split(const Tensor& x, int axis, const std::vector<int64_t>& sizes);

/// Softmax over the channel axis of an NCHW tensor.
Tensor softmax_channels(const Tensor& x);

/// Reverse-mode pass from a scalar loss. Gradients accumulate.
void backward(const Tensor& loss);

}  // namespace stein
