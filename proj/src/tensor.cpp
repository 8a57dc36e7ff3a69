#include "stein/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

namespace stein {

namespace {

thread_local bool g_grad_enabled = true;

std::shared_ptr<TensorNode> make_node(Shape shape, std::vector<double> data, bool requires_grad) {
    auto n = std::make_shared<TensorNode>();
    n->shape = std::move(shape);
    n->data = std::move(data);
    n->requires_grad = requires_grad;
    return n;
}

void check_same_shape(const char* op, const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) {
        throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                         " vs " + shape_str(b.shape()));
    }
}

template <typename F, typename D>
Tensor unary_op(const Tensor& x, F f, D dfdx_of_xy) {
    const auto& xd = x.data();
    std::vector<double> out(xd.size());
    for (size_t i = 0; i < xd.size(); ++i) out[i] = f(xd[i]);
    const bool rg = g_grad_enabled && x.requires_grad();
    auto node = make_node(x.shape(), std::move(out), rg);
    if (rg) {
        auto xn = x.node();
        node->parents = {xn};
        node->backward_fn = [xn, dfdx_of_xy](TensorNode& self) {
            auto& g = xn->ensure_grad();
            for (size_t i = 0; i < g.size(); ++i)
                g[i] += self.pass_grad[i] * dfdx_of_xy(xn->data[i], self.data[i]);
        };
    }
    return Tensor(node);
}

}  // namespace

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
    auto n = shape_numel(shape);
    return Tensor(make_node(std::move(shape), std::vector<double>(n, 0.0), requires_grad));
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
    auto n = shape_numel(shape);
    return Tensor(make_node(std::move(shape), std::vector<double>(n, value), requires_grad));
}

Tensor Tensor::from_data(Shape shape, std::vector<double> data, bool requires_grad) {
    if (shape_numel(shape) != static_cast<int64_t>(data.size()))
        throw ShapeError("from_data: " + shape_str(shape) + " holds " +
                         std::to_string(shape_numel(shape)) + " values, got " +
                         std::to_string(data.size()));
    return Tensor(make_node(std::move(shape), std::move(data), requires_grad));
}

Tensor Tensor::scalar(double v, bool requires_grad) {
    return from_data({1}, {v}, requires_grad);
}

const Shape& Tensor::shape() const { return node_->shape; }
int64_t Tensor::numel() const { return static_cast<int64_t>(node_->data.size()); }
int64_t Tensor::dim(int i) const { return node_->shape.at(i); }
bool Tensor::requires_grad() const { return node_ && node_->requires_grad; }
const std::vector<double>& Tensor::data() const { return node_->data; }
std::vector<double>& Tensor::mutable_data() { return node_->data; }

double Tensor::item() const {
    if (numel() != 1) throw UsageError("item(): tensor has " + std::to_string(numel()) + " elements");
    return node_->data[0];
}

bool Tensor::has_grad() const { return node_ && !node_->grad.empty(); }

const std::vector<double>& Tensor::grad() const {
    if (!has_grad()) throw UsageError("grad(): no gradient has been accumulated");
    return node_->grad;
}

void Tensor::zero_grad() {
    if (node_) {
        node_->grad.clear();
        node_->pass_grad.clear();
    }
}

Tensor Tensor::detach() const {
    return Tensor(make_node(node_->shape, node_->data, false));
}

// ---- elementwise binary ----

Tensor add(const Tensor& a, const Tensor& b) {
    check_same_shape("add", a, b);
    const auto& ad = a.data();
    const auto& bd = b.data();
    std::vector<double> out(ad.size());
    for (size_t i = 0; i < ad.size(); ++i) out[i] = ad[i] + bd[i];
    const bool rg = grad_enabled() && (a.requires_grad() || b.requires_grad());
    auto node = make_node(a.shape(), std::move(out), rg);
    if (rg) {
        auto an = a.node(), bn = b.node();
        node->parents = {an, bn};
        node->backward_fn = [an, bn](TensorNode& self) {
            if (an->requires_grad) {
                auto& g = an->ensure_grad();
                for (size_t i = 0; i < g.size(); ++i) g[i] += self.pass_grad[i];
            }
            if (bn->requires_grad) {
                auto& g = bn->ensure_grad();
                for (size_t i = 0; i < g.size(); ++i) g[i] += self.pass_grad[i];
            }
        };
    }
    return Tensor(node);
}

Tensor sub(const Tensor& a, const Tensor& b) {
    check_same_shape("sub", a, b);
    const auto& ad = a.data();
    const auto& bd = b.data();
    std::vector<double> out(ad.size());
    for (size_t i = 0; i < ad.size(); ++i) out[i] = ad[i] - bd[i];
    const bool rg = grad_enabled() && (a.requires_grad() || b.requires_grad());
    auto node = make_node(a.shape(), std::move(out), rg);
    if (rg) {
        auto an = a.node(), bn = b.node();
        node->parents = {an, bn};
        node->backward_fn = [an, bn](TensorNode& self) {
            if (an->requires_grad) {
                auto& g = an->ensure_grad();
                for (size_t i = 0; i < g.size(); ++i) g[i] += self.pass_grad[i];
            }
            if (bn->requires_grad) {
                auto& g = bn->ensure_grad();
                for (size_t i = 0; i < g.size(); ++i) g[i] -= self.pass_grad[i];
            }
        };
    }
    return Tensor(node);
}

Tensor mul(const Tensor& a, const Tensor& b) {
    check_same_shape("mul", a, b);
    const auto& ad = a.data();
    const auto& bd = b.data();
    std::vector<double> out(ad.size());
    for (size_t i = 0; i < ad.size(); ++i) out[i] = ad[i] * bd[i];
    const bool rg = grad_enabled() && (a.requires_grad() || b.requires_grad());
    auto node = make_node(a.shape(), std::move(out), rg);
    if (rg) {
        auto an = a.node(), bn = b.node();
        node->parents = {an, bn};
        node->backward_fn = [an, bn](TensorNode& self) {
            if (an->requires_grad) {
                auto& g = an->ensure_grad();
                for (size_t i = 0; i < g.size(); ++i) g[i] += self.pass_grad[i] * bn->data[i];
            }
            if (bn->requires_grad) {
                auto& g = bn->ensure_grad();
                for (size_t i = 0; i < g.size(); ++i) g[i] += self.pass_grad[i] * an->data[i];
            }
        };
    }
    return Tensor(node);
}

Tensor divide(const Tensor& a, const Tensor& b) {
    check_same_shape("divide", a, b);
    const auto& ad = a.data();
    const auto& bd = b.data();
    std::vector<double> out(ad.size());
    for (size_t i = 0; i < ad.size(); ++i) out[i] = ad[i] / bd[i];
    const bool rg = grad_enabled() && (a.requires_grad() || b.requires_grad());
    auto node = make_node(a.shape(), std::move(out), rg);
    if (rg) {
        auto an = a.node(), bn = b.node();
        node->parents = {an, bn};
        node->backward_fn = [an, bn](TensorNode& self) {
            if (an->requires_grad) {
                auto& g = an->ensure_grad();
                for (size_t i = 0; i < g.size(); ++i) g[i] += self.pass_grad[i] / bn->data[i];
            }
            if (bn->requires_grad) {
                auto& g = bn->ensure_grad();
                for (size_t i = 0; i < g.size(); ++i)
                    g[i] -= self.pass_grad[i] * an->data[i] / (bn->data[i] * bn->data[i]);
            }
        };
    }
    return Tensor(node);
}

// ---- elementwise unary ----

Tensor scale(const Tensor& x, double s) {
    return unary_op(x, [s](double v) { return v * s; },
                    [s](double, double) { return s; });
}

Tensor add_scalar(const Tensor& x, double c) {
    return unary_op(x, [c](double v) { return v + c; },
                    [](double, double) { return 1.0; });
}

Tensor sigmoid(const Tensor& x) {
    return unary_op(x, [](double v) { return 1.0 / (1.0 + std::exp(-v)); },
                    [](double, double y) { return y * (1.0 - y); });
}

Tensor gelu(const Tensor& x) {
    constexpr double inv_sqrt2 = 0.7071067811865475244;
    constexpr double inv_sqrt2pi = 0.3989422804014326779;
    return unary_op(x,
                    [](double v) { return 0.5 * v * (1.0 + std::erf(v * inv_sqrt2)); },
                    [](double v, double) {
                        const double cdf = 0.5 * (1.0 + std::erf(v * inv_sqrt2));
                        const double pdf = inv_sqrt2pi * std::exp(-0.5 * v * v);
                        return cdf + v * pdf;
                    });
}

Tensor relu(const Tensor& x) {
    return unary_op(x, [](double v) { return v > 0.0 ? v : 0.0; },
                    [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Tensor abs(const Tensor& x) {
    return unary_op(x, [](double v) { return std::fabs(v); },
                    [](double v, double) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); });
}

Tensor log(const Tensor& x) {
    return unary_op(x, [](double v) { return std::log(v); },
                    [](double v, double) { return 1.0 / v; });
}

Tensor pow_const(const Tensor& x, double exponent) {
    return unary_op(x, [exponent](double v) { return std::pow(v, exponent); },
                    [exponent](double v, double) {
                        return exponent == 0.0 ? 0.0 : exponent * std::pow(v, exponent - 1.0);
                    });
}

Tensor clamp(const Tensor& x, double lo, double hi) {
    return unary_op(x, [lo, hi](double v) { return std::min(std::max(v, lo), hi); },
                    [lo, hi](double v, double) { return (v > lo && v < hi) ? 1.0 : 0.0; });
}

// ---- reductions ----

Tensor sum(const Tensor& x) {
    double acc = 0.0;
    for (double v : x.data()) acc += v;
    const bool rg = grad_enabled() && x.requires_grad();
    auto node = make_node({1}, {acc}, rg);
    if (rg) {
        auto xn = x.node();
        node->parents = {xn};
        node->backward_fn = [xn](TensorNode& self) {
            auto& g = xn->ensure_grad();
            const double gy = self.pass_grad[0];
            for (double& v : g) v += gy;
        };
    }
    return Tensor(node);
}

Tensor mean(const Tensor& x) {
    const double inv = 1.0 / static_cast<double>(x.numel());
    double acc = 0.0;
    for (double v : x.data()) acc += v;
    const bool rg = grad_enabled() && x.requires_grad();
    auto node = make_node({1}, {acc * inv}, rg);
    if (rg) {
        auto xn = x.node();
        node->parents = {xn};
        node->backward_fn = [xn, inv](TensorNode& self) {
            auto& g = xn->ensure_grad();
            const double gy = self.pass_grad[0] * inv;
            for (double& v : g) v += gy;
        };
    }
    return Tensor(node);
}

// ---- shape ops ----

namespace {

// Views an axis-split as (outer, axis, inner) blocks.
void axis_blocks(const Shape& s, int axis, int64_t& outer, int64_t& inner) {
    outer = 1;
    inner = 1;
    for (int i = 0; i < axis; ++i) outer *= s[i];
    for (size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
}

}  // namespace

Tensor concat(const std::vector<Tensor>& xs, int axis) {
    if (xs.empty()) throw UsageError("concat: empty input list");
    const Shape& ref = xs[0].shape();
    if (axis < 0 || axis >= static_cast<int>(ref.size()))
        throw UsageError("concat: axis out of range");
    int64_t axis_total = 0;
    for (const auto& t : xs) {
        const Shape& s = t.shape();
        if (s.size() != ref.size())
            throw ShapeError("concat: rank mismatch " + shape_str(ref) + " vs " + shape_str(s));
        for (size_t i = 0; i < s.size(); ++i)
            if (static_cast<int>(i) != axis && s[i] != ref[i])
                throw ShapeError("concat: shape mismatch " + shape_str(ref) + " vs " + shape_str(s));
        axis_total += s[axis];
    }
    Shape out_shape = ref;
    out_shape[axis] = axis_total;

    int64_t outer, inner;
    axis_blocks(ref, axis, outer, inner);
    std::vector<double> out(shape_numel(out_shape));
    int64_t offset = 0;
    for (const auto& t : xs) {
        const int64_t a = t.shape()[axis];
        const auto& d = t.data();
        for (int64_t o = 0; o < outer; ++o) {
            const double* src = d.data() + o * a * inner;
            double* dst = out.data() + (o * axis_total + offset) * inner;
            std::copy(src, src + a * inner, dst);
        }
        offset += a;
    }

    bool rg = false;
    for (const auto& t : xs) rg = rg || t.requires_grad();
    rg = rg && grad_enabled();
    auto node = make_node(std::move(out_shape), std::move(out), rg);
    if (rg) {
        std::vector<std::shared_ptr<TensorNode>> parents;
        std::vector<int64_t> sizes;
        for (const auto& t : xs) {
            parents.push_back(t.node());
            sizes.push_back(t.shape()[axis]);
        }
        node->parents = parents;
        node->backward_fn = [parents, sizes, outer, inner, axis_total](TensorNode& self) {
            int64_t off = 0;
            for (size_t k = 0; k < parents.size(); ++k) {
                const int64_t a = sizes[k];
                if (parents[k]->requires_grad) {
                    auto& g = parents[k]->ensure_grad();
                    for (int64_t o = 0; o < outer; ++o) {
                        const double* src = self.pass_grad.data() + (o * axis_total + off) * inner;
                        double* dst = g.data() + o * a * inner;
                        for (int64_t i = 0; i < a * inner; ++i) dst[i] += src[i];
                    }
                }
                off += a;
            }
        };
    }
    return Tensor(node);
}

std::vector<Tensor> split(const Tensor& x, int axis, const std::vector<int64_t>& sizes) {
    const Shape& s = x.shape();
    if (axis < 0 || axis >= static_cast<int>(s.size()))
        throw UsageError("split: axis out of range");
    int64_t total = 0;
    for (int64_t v : sizes) {
        if (v <= 0) throw UsageError("split: sizes must be positive");
        total += v;
    }
    if (total != s[axis])
        throw ShapeError("split: sizes sum to " + std::to_string(total) + ", axis has " +
                         std::to_string(s[axis]));

    int64_t outer, inner;
    axis_blocks(s, axis, outer, inner);
    const int64_t axis_total = s[axis];

    std::vector<Tensor> pieces;
    int64_t offset = 0;
    for (int64_t a : sizes) {
        Shape ps = s;
        ps[axis] = a;
        std::vector<double> pd(shape_numel(ps));
        for (int64_t o = 0; o < outer; ++o) {
            const double* src = x.data().data() + (o * axis_total + offset) * inner;
            std::copy(src, src + a * inner, pd.data() + o * a * inner);
        }
        const bool rg = grad_enabled() && x.requires_grad();
        auto node = make_node(std::move(ps), std::move(pd), rg);
        if (rg) {
            auto xn = x.node();
            const int64_t off = offset;
            node->parents = {xn};
            node->backward_fn = [xn, off, a, outer, inner, axis_total](TensorNode& self) {
                auto& g = xn->ensure_grad();
                for (int64_t o = 0; o < outer; ++o) {
                    const double* src = self.pass_grad.data() + o * a * inner;
                    double* dst = g.data() + (o * axis_total + off) * inner;
                    for (int64_t i = 0; i < a * inner; ++i) dst[i] += src[i];
                }
            };
        }
        pieces.emplace_back(node);
        offset += a;
    }
    return pieces;
}

Tensor softmax_channels(const Tensor& x) {
    const Shape& s = x.shape();
    if (s.size() != 4) throw ShapeError("softmax_channels: expected NCHW, got " + shape_str(s));
    const int64_t n = s[0], c = s[1], hw = s[2] * s[3];
    const auto& xd = x.data();
    std::vector<double> out(xd.size());
    for (int64_t b = 0; b < n; ++b) {
        for (int64_t p = 0; p < hw; ++p) {
            const int64_t base = b * c * hw + p;
            double mx = xd[base];
            for (int64_t ch = 1; ch < c; ++ch) mx = std::max(mx, xd[base + ch * hw]);
            double z = 0.0;
            for (int64_t ch = 0; ch < c; ++ch) {
                const double e = std::exp(xd[base + ch * hw] - mx);
                out[base + ch * hw] = e;
                z += e;
            }
            const double inv = 1.0 / z;
            for (int64_t ch = 0; ch < c; ++ch) out[base + ch * hw] *= inv;
        }
    }
    const bool rg = grad_enabled() && x.requires_grad();
    auto node = make_node(s, std::move(out), rg);
    if (rg) {
        auto xn = x.node();
        node->parents = {xn};
        node->backward_fn = [xn, n, c, hw](TensorNode& self) {
            auto& g = xn->ensure_grad();
            for (int64_t b = 0; b < n; ++b) {
                for (int64_t p = 0; p < hw; ++p) {
                    const int64_t base = b * c * hw + p;
                    double dot = 0.0;
                    for (int64_t ch = 0; ch < c; ++ch)
                        dot += self.pass_grad[base + ch * hw] * self.data[base + ch * hw];
                    for (int64_t ch = 0; ch < c; ++ch) {
                        const int64_t i = base + ch * hw;
                        g[i] += self.data[i] * (self.pass_grad[i] - dot);
                    }
                }
            }
        };
    }
    return Tensor(node);
}

// ---- backward ----

void backward(const Tensor& loss) {
    if (!loss.defined()) throw UsageError("backward: undefined tensor");
    if (loss.numel() != 1)
        throw UsageError("backward: loss must be scalar, has " + std::to_string(loss.numel()) +
                         " elements");
    if (!loss.requires_grad()) return;

    // Post-order DFS over grad-participating nodes.
    std::vector<TensorNode*> order;
    std::unordered_set<TensorNode*> visited;
    std::vector<std::pair<TensorNode*, size_t>> stack;
    stack.emplace_back(loss.node().get(), 0);
    visited.insert(loss.node().get());
    while (!stack.empty()) {
        auto& [node, idx] = stack.back();
        if (idx < node->parents.size()) {
            TensorNode* p = node->parents[idx++].get();
            if (p->requires_grad && !visited.count(p)) {
                visited.insert(p);
                stack.emplace_back(p, 0);
            }
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }

    loss.node()->ensure_grad()[0] = 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        TensorNode* node = *it;
        if (node->backward_fn && !node->pass_grad.empty()) node->backward_fn(*node);
    }

    // Fold the pass into the persistent gradients.
    for (TensorNode* node : order) {
        if (node->pass_grad.empty()) continue;
        if (node->grad.empty()) {
            node->grad = std::move(node->pass_grad);
        } else {
            for (size_t i = 0; i < node->grad.size(); ++i) node->grad[i] += node->pass_grad[i];
        }
        node->pass_grad.clear();
    }
}

}  // namespace stein
