#include "stein/conv.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

namespace stein {

namespace {

// C[m x n] += A[m x k] * B[k x n], all row-major. Four rows of A per pass
// so each B row is streamed m/4 times instead of m.
void gemm_acc(int64_t m, int64_t k, int64_t n, const double* a, const double* b, double* c) {
    int64_t i = 0;
    for (; i + 4 <= m; i += 4) {
        double* c0 = c + i * n;
        double* c1 = c0 + n;
        double* c2 = c1 + n;
        double* c3 = c2 + n;
        const double* a0 = a + i * k;
        const double* a1 = a0 + k;
        const double* a2 = a1 + k;
        const double* a3 = a2 + k;
        for (int64_t p = 0; p < k; ++p) {
            const double v0 = a0[p], v1 = a1[p], v2 = a2[p], v3 = a3[p];
            if (v0 == 0.0 && v1 == 0.0 && v2 == 0.0 && v3 == 0.0) continue;
            const double* bp = b + p * n;
            for (int64_t j = 0; j < n; ++j) {
                const double bv = bp[j];
                c0[j] += v0 * bv;
                c1[j] += v1 * bv;
                c2[j] += v2 * bv;
                c3[j] += v3 * bv;
            }
        }
    }
    for (; i < m; ++i) {
        double* ci = c + i * n;
        const double* ai = a + i * k;
        for (int64_t p = 0; p < k; ++p) {
            const double av = ai[p];
            if (av == 0.0) continue;
            const double* bp = b + p * n;
            for (int64_t j = 0; j < n; ++j) ci[j] += av * bp[j];
        }
    }
}

// C[m x n] += A[m x k] * B[n x k]^T, dot-product kernel with four A rows in
// flight per B stream.
void gemm_nt_acc(int64_t m, int64_t k, int64_t n, const double* a, const double* b, double* c) {
    int64_t i = 0;
    for (; i + 4 <= m; i += 4) {
        const double* a0 = a + i * k;
        const double* a1 = a0 + k;
        const double* a2 = a1 + k;
        const double* a3 = a2 + k;
        for (int64_t j = 0; j < n; ++j) {
            const double* bj = b + j * k;
            double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
            for (int64_t p = 0; p < k; ++p) {
                const double bv = bj[p];
                s0 += a0[p] * bv;
                s1 += a1[p] * bv;
                s2 += a2[p] * bv;
                s3 += a3[p] * bv;
            }
            c[i * n + j] += s0;
            c[(i + 1) * n + j] += s1;
            c[(i + 2) * n + j] += s2;
            c[(i + 3) * n + j] += s3;
        }
    }
    for (; i < m; ++i) {
        const double* ai = a + i * k;
        double* ci = c + i * n;
        for (int64_t j = 0; j < n; ++j) {
            const double* bj = b + j * k;
            double acc = 0.0;
            for (int64_t p = 0; p < k; ++p) acc += ai[p] * bj[p];
            ci[j] += acc;
        }
    }
}

std::vector<double>& scratch_t(size_t n) {
    thread_local std::vector<double> buf;
    if (buf.size() < n) buf.resize(n);
    return buf;
}

// C[m x n] += A[k x m]^T * B[k x n]; A is transposed into scratch first so
// the accumulation runs through the row kernel.
void gemm_tn_acc(int64_t m, int64_t k, int64_t n, const double* a, const double* b, double* c) {
    auto& at = scratch_t(static_cast<size_t>(m) * k);
    for (int64_t p = 0; p < k; ++p)
        for (int64_t i = 0; i < m; ++i) at[i * k + p] = a[p * m + i];
    gemm_acc(m, k, n, at.data(), b, c);
}

struct ConvDims {
    int64_t n, cin, h, w, cout, oh, ow;
    int64_t cin_g, cout_g;  // channels per group
    int64_t kh, kw, stride, pad, groups;
    int64_t col_rows() const { return cin_g * kh * kw; }

    bool pointwise() const {
        return kh == 1 && kw == 1 && stride == 1 && pad == 0 && groups == 1;
    }
    bool depthwise() const { return groups == cin && cout == cin; }
};

ConvDims resolve_dims(const Tensor& x, const Tensor& weight, const Tensor& bias,
                      const ConvSpec& spec) {
    if (x.shape().size() != 4)
        throw ShapeError("conv2d: input must be NCHW, got " + shape_str(x.shape()));
    if (weight.shape().size() != 4)
        throw ShapeError("conv2d: weight must be [Cout, Cin/groups, kh, kw], got " +
                         shape_str(weight.shape()));
    if (spec.kernel_h <= 0 || spec.kernel_w <= 0 || spec.stride <= 0 || spec.padding < 0 ||
        spec.groups <= 0)
        throw ConfigError("conv2d: invalid geometry (kernel " + std::to_string(spec.kernel_h) +
                          "x" + std::to_string(spec.kernel_w) + ", stride " +
                          std::to_string(spec.stride) + ", padding " +
                          std::to_string(spec.padding) + ", groups " +
                          std::to_string(spec.groups) + ")");

    ConvDims d;
    d.n = x.dim(0);
    d.cin = x.dim(1);
    d.h = x.dim(2);
    d.w = x.dim(3);
    d.cout = weight.dim(0);
    d.kh = spec.kernel_h;
    d.kw = spec.kernel_w;
    d.stride = spec.stride;
    d.pad = spec.padding;
    d.groups = spec.groups;

    if (d.cin % d.groups != 0 || d.cout % d.groups != 0)
        throw ConfigError("conv2d: groups " + std::to_string(d.groups) +
                          " must divide in=" + std::to_string(d.cin) +
                          " and out=" + std::to_string(d.cout) + " channels");
    d.cin_g = d.cin / d.groups;
    d.cout_g = d.cout / d.groups;
    if (weight.dim(1) != d.cin_g || weight.dim(2) != d.kh || weight.dim(3) != d.kw)
        throw ConfigError("conv2d: weight " + shape_str(weight.shape()) + " inconsistent with " +
                          std::to_string(d.cin) + " input channels, groups " +
                          std::to_string(d.groups) + ", kernel " + std::to_string(d.kh) + "x" +
                          std::to_string(d.kw));
    if (bias.defined() != spec.has_bias)
        throw ConfigError("conv2d: bias presence does not match spec.has_bias");
    if (bias.defined() && (bias.shape().size() != 1 || bias.dim(0) != d.cout))
        throw ShapeError("conv2d: bias must be [Cout], got " + shape_str(bias.shape()));

    d.oh = (d.h + 2 * d.pad - d.kh) / d.stride + 1;
    d.ow = (d.w + 2 * d.pad - d.kw) / d.stride + 1;
    if (d.oh <= 0 || d.ow <= 0)
        throw ConfigError("conv2d: kernel " + std::to_string(d.kh) + "x" + std::to_string(d.kw) +
                          " does not fit input " + shape_str(x.shape()) + " with padding " +
                          std::to_string(d.pad));
    return d;
}

std::vector<double>& scratch(size_t n) {
    thread_local std::vector<double> buf;
    if (buf.size() < n) buf.resize(n);
    return buf;
}

std::vector<double>& scratch2(size_t n) {
    thread_local std::vector<double> buf;
    if (buf.size() < n) buf.resize(n);
    return buf;
}

// Gathers one (image, group) into a [cin_g*kh*kw, oh*ow] patch matrix.
void im2col(const double* src, const ConvDims& d, double* col) {
    const int64_t ohow = d.oh * d.ow;
    for (int64_t c = 0; c < d.cin_g; ++c) {
        const double* plane = src + c * d.h * d.w;
        for (int64_t ky = 0; ky < d.kh; ++ky) {
            for (int64_t kx = 0; kx < d.kw; ++kx) {
                double* row = col + ((c * d.kh + ky) * d.kw + kx) * ohow;
                for (int64_t oy = 0; oy < d.oh; ++oy) {
                    const int64_t iy = oy * d.stride - d.pad + ky;
                    double* out = row + oy * d.ow;
                    if (iy < 0 || iy >= d.h) {
                        std::fill(out, out + d.ow, 0.0);
                        continue;
                    }
                    const double* in_row = plane + iy * d.w;
                    if (d.stride == 1) {
                        const int64_t ix0 = -d.pad + kx;
                        int64_t ox = 0;
                        for (; ox < d.ow && ix0 + ox < 0; ++ox) out[ox] = 0.0;
                        const int64_t valid = std::min(d.ow, d.w - ix0);
                        for (; ox < valid; ++ox) out[ox] = in_row[ix0 + ox];
                        for (; ox < d.ow; ++ox) out[ox] = 0.0;
                    } else {
                        for (int64_t ox = 0; ox < d.ow; ++ox) {
                            const int64_t ix = ox * d.stride - d.pad + kx;
                            out[ox] = (ix >= 0 && ix < d.w) ? in_row[ix] : 0.0;
                        }
                    }
                }
            }
        }
    }
}

// Scatter-add of a patch matrix back onto the input plane.
void col2im_acc(const double* col, const ConvDims& d, double* dst) {
    const int64_t ohow = d.oh * d.ow;
    for (int64_t c = 0; c < d.cin_g; ++c) {
        double* plane = dst + c * d.h * d.w;
        for (int64_t ky = 0; ky < d.kh; ++ky) {
            for (int64_t kx = 0; kx < d.kw; ++kx) {
                const double* row = col + ((c * d.kh + ky) * d.kw + kx) * ohow;
                for (int64_t oy = 0; oy < d.oh; ++oy) {
                    const int64_t iy = oy * d.stride - d.pad + ky;
                    if (iy < 0 || iy >= d.h) continue;
                    const double* in_row = row + oy * d.ow;
                    double* out_row = plane + iy * d.w;
                    for (int64_t ox = 0; ox < d.ow; ++ox) {
                        const int64_t ix = ox * d.stride - d.pad + kx;
                        if (ix >= 0 && ix < d.w) out_row[ix] += in_row[ox];
                    }
                }
            }
        }
    }
}

// Depthwise forward for one plane: out(oy,ox) += sum_k w(ky,kx) * in(...).
void dw_plane_forward(const double* in, const double* w, const ConvDims& d, double* out) {
    for (int64_t oy = 0; oy < d.oh; ++oy) {
        double* orow = out + oy * d.ow;
        for (int64_t ky = 0; ky < d.kh; ++ky) {
            const int64_t iy = oy * d.stride - d.pad + ky;
            if (iy < 0 || iy >= d.h) continue;
            const double* irow = in + iy * d.w;
            for (int64_t kx = 0; kx < d.kw; ++kx) {
                const double wv = w[ky * d.kw + kx];
                if (wv == 0.0) continue;
                const int64_t ix0 = -d.pad + kx;
                if (d.stride == 1) {
                    const int64_t lo = std::max<int64_t>(0, -ix0);
                    const int64_t hi = std::min(d.ow, d.w - ix0);
                    const double* ip = irow + ix0 + lo;
                    double* op = orow + lo;
                    for (int64_t ox = lo; ox < hi; ++ox) *op++ += wv * *ip++;
                } else {
                    for (int64_t ox = 0; ox < d.ow; ++ox) {
                        const int64_t ix = ox * d.stride + ix0;
                        if (ix >= 0 && ix < d.w) orow[ox] += wv * irow[ix];
                    }
                }
            }
        }
    }
}

// Depthwise backward: accumulates input and weight gradients for one plane.
void dw_plane_backward(const double* in, const double* w, const double* gy, const ConvDims& d,
                       double* gin, double* gw) {
    for (int64_t oy = 0; oy < d.oh; ++oy) {
        const double* grow = gy + oy * d.ow;
        for (int64_t ky = 0; ky < d.kh; ++ky) {
            const int64_t iy = oy * d.stride - d.pad + ky;
            if (iy < 0 || iy >= d.h) continue;
            const double* irow = in + iy * d.w;
            double* girow = gin ? gin + iy * d.w : nullptr;
            for (int64_t kx = 0; kx < d.kw; ++kx) {
                const int64_t ix0 = -d.pad + kx;
                const int64_t lo = d.stride == 1 ? std::max<int64_t>(0, -ix0) : 0;
                const int64_t hi = d.stride == 1 ? std::min(d.ow, d.w - ix0) : d.ow;
                const double wv = w[ky * d.kw + kx];
                double wacc = 0.0;
                if (d.stride == 1) {
                    for (int64_t ox = lo; ox < hi; ++ox) {
                        const int64_t ix = ix0 + ox;
                        wacc += grow[ox] * irow[ix];
                        if (girow) girow[ix] += wv * grow[ox];
                    }
                } else {
                    for (int64_t ox = lo; ox < hi; ++ox) {
                        const int64_t ix = ox * d.stride + ix0;
                        if (ix < 0 || ix >= d.w) continue;
                        wacc += grow[ox] * irow[ix];
                        if (girow) girow[ix] += wv * grow[ox];
                    }
                }
                if (gw) gw[ky * d.kw + kx] += wacc;
            }
        }
    }
}

void conv_forward(const ConvDims& d, const double* xd, const double* wd, const double* bd,
                  double* out) {
    const int64_t ohow = d.oh * d.ow;
    if (d.pointwise()) {
        for (int64_t b = 0; b < d.n; ++b)
            gemm_acc(d.cout, d.cin, ohow, wd, xd + b * d.cin * ohow, out + b * d.cout * ohow);
    } else if (d.depthwise()) {
        for (int64_t b = 0; b < d.n; ++b)
            for (int64_t c = 0; c < d.cin; ++c)
                dw_plane_forward(xd + (b * d.cin + c) * d.h * d.w, wd + c * d.kh * d.kw, d,
                                 out + (b * d.cout + c) * ohow);
    } else {
        auto& col = scratch(static_cast<size_t>(d.col_rows()) * ohow);
        for (int64_t b = 0; b < d.n; ++b)
            for (int64_t g = 0; g < d.groups; ++g) {
                im2col(xd + (b * d.cin + g * d.cin_g) * d.h * d.w, d, col.data());
                gemm_acc(d.cout_g, d.col_rows(), ohow, wd + g * d.cout_g * d.col_rows(),
                         col.data(), out + (b * d.cout + g * d.cout_g) * ohow);
            }
    }
    if (bd) {
        for (int64_t b = 0; b < d.n; ++b)
            for (int64_t c = 0; c < d.cout; ++c) {
                double* dst = out + (b * d.cout + c) * ohow;
                const double bv = bd[c];
                for (int64_t i = 0; i < ohow; ++i) dst[i] += bv;
            }
    }
}

}  // namespace

Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias, const ConvSpec& spec) {
    const ConvDims d = resolve_dims(x, weight, bias, spec);
    const int64_t ohow = d.oh * d.ow;

    std::vector<double> out(d.n * d.cout * ohow, 0.0);
    conv_forward(d, x.data().data(), weight.data().data(),
                 bias.defined() ? bias.data().data() : nullptr, out.data());

    const bool rg = grad_enabled() && (x.requires_grad() || weight.requires_grad() ||
                                       (bias.defined() && bias.requires_grad()));
    auto node = std::make_shared<TensorNode>();
    node->shape = {d.n, d.cout, d.oh, d.ow};
    node->data = std::move(out);
    node->requires_grad = rg;
    if (rg) {
        auto xn = x.node();
        auto wn = weight.node();
        auto bn = bias.defined() ? bias.node() : nullptr;
        node->parents = {xn, wn};
        if (bn) node->parents.push_back(bn);
        node->backward_fn = [xn, wn, bn, d](TensorNode& self) {
            const int64_t ohow = d.oh * d.ow;
            const bool need_dx = xn->requires_grad;
            const bool need_dw = wn->requires_grad;
            const double* gy_all = self.pass_grad.data();

            if (need_dx || need_dw) {
                double* dx = need_dx ? xn->ensure_grad().data() : nullptr;
                double* dw = need_dw ? wn->ensure_grad().data() : nullptr;
                if (d.pointwise()) {
                    for (int64_t b = 0; b < d.n; ++b) {
                        const double* gy = gy_all + b * d.cout * ohow;
                        if (need_dw)
                            gemm_nt_acc(d.cout, ohow, d.cin, gy, xn->data.data() + b * d.cin * ohow,
                                        dw);
                        if (need_dx)
                            gemm_tn_acc(d.cin, d.cout, ohow, wn->data.data(), gy,
                                        dx + b * d.cin * ohow);
                    }
                } else if (d.depthwise()) {
                    for (int64_t b = 0; b < d.n; ++b)
                        for (int64_t c = 0; c < d.cin; ++c)
                            dw_plane_backward(
                                xn->data.data() + (b * d.cin + c) * d.h * d.w,
                                wn->data.data() + c * d.kh * d.kw,
                                gy_all + (b * d.cout + c) * ohow, d,
                                need_dx ? dx + (b * d.cin + c) * d.h * d.w : nullptr,
                                need_dw ? dw + c * d.kh * d.kw : nullptr);
                } else {
                    auto& col = scratch(static_cast<size_t>(d.col_rows()) * ohow);
                    auto& dcol = scratch2(static_cast<size_t>(d.col_rows()) * ohow);
                    for (int64_t b = 0; b < d.n; ++b)
                        for (int64_t g = 0; g < d.groups; ++g) {
                            const double* gy = gy_all + (b * d.cout + g * d.cout_g) * ohow;
                            const double* wg = wn->data.data() + g * d.cout_g * d.col_rows();
                            if (need_dw) {
                                im2col(xn->data.data() + (b * d.cin + g * d.cin_g) * d.h * d.w, d,
                                       col.data());
                                gemm_nt_acc(d.cout_g, ohow, d.col_rows(), gy, col.data(),
                                            dw + g * d.cout_g * d.col_rows());
                            }
                            if (need_dx) {
                                std::fill(dcol.begin(),
                                          dcol.begin() + d.col_rows() * ohow, 0.0);
                                gemm_tn_acc(d.col_rows(), d.cout_g, ohow, wg, gy, dcol.data());
                                col2im_acc(dcol.data(), d,
                                           dx + (b * d.cin + g * d.cin_g) * d.h * d.w);
                            }
                        }
                }
            }
            if (bn && bn->requires_grad) {
                auto& db = bn->ensure_grad();
                for (int64_t b = 0; b < d.n; ++b)
                    for (int64_t c = 0; c < d.cout; ++c) {
                        const double* gy = gy_all + (b * d.cout + c) * ohow;
                        double acc = 0.0;
                        for (int64_t i = 0; i < ohow; ++i) acc += gy[i];
                        db[c] += acc;
                    }
            }
        };
    }
    return Tensor(node);
}

Tensor bilinear_resize(const Tensor& x, int out_h, int out_w) {
    if (x.shape().size() != 4)
        throw ShapeError("bilinear_resize: expected NCHW, got " + shape_str(x.shape()));
    if (out_h < 1 || out_w < 1)
        throw ConfigError("bilinear_resize: output size must be positive");
    const int64_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    const int64_t oh = out_h, ow = out_w;

    // Per output coordinate: source index pair and interpolation weight.
    struct Axis {
        int64_t i0, i1;
        double f;  // weight of i1
    };
    auto make_axis = [](int64_t in, int64_t out) {
        std::vector<Axis> ax(out);
        const double s = static_cast<double>(in) / static_cast<double>(out);
        for (int64_t o = 0; o < out; ++o) {
            double src = (static_cast<double>(o) + 0.5) * s - 0.5;
            src = std::min(std::max(src, 0.0), static_cast<double>(in - 1));
            const int64_t i0 = static_cast<int64_t>(std::floor(src));
            ax[o].i0 = i0;
            ax[o].i1 = std::min(i0 + 1, in - 1);
            ax[o].f = src - static_cast<double>(i0);
        }
        return ax;
    };
    const auto ys = make_axis(h, oh);
    const auto xs = make_axis(w, ow);

    const auto& xd = x.data();
    std::vector<double> out(n * c * oh * ow);
    for (int64_t bc = 0; bc < n * c; ++bc) {
        const double* plane = xd.data() + bc * h * w;
        double* dst = out.data() + bc * oh * ow;
        for (int64_t oy = 0; oy < oh; ++oy) {
            const Axis& ay = ys[oy];
            const double* r0 = plane + ay.i0 * w;
            const double* r1 = plane + ay.i1 * w;
            for (int64_t ox = 0; ox < ow; ++ox) {
                const Axis& axw = xs[ox];
                const double top = r0[axw.i0] * (1.0 - axw.f) + r0[axw.i1] * axw.f;
                const double bot = r1[axw.i0] * (1.0 - axw.f) + r1[axw.i1] * axw.f;
                dst[oy * ow + ox] = top * (1.0 - ay.f) + bot * ay.f;
            }
        }
    }

    auto node = std::make_shared<TensorNode>();
    node->shape = {n, c, oh, ow};
    node->data = std::move(out);
    const bool resize_rg = grad_enabled() && x.requires_grad();
    node->requires_grad = resize_rg;
    if (resize_rg) {
        auto xn = x.node();
        node->parents = {xn};
        node->backward_fn = [xn, ys, xs, n, c, h, w, oh, ow](TensorNode& self) {
            auto& g = xn->ensure_grad();
            for (int64_t bc = 0; bc < n * c; ++bc) {
                double* plane = g.data() + bc * h * w;
                const double* gy = self.pass_grad.data() + bc * oh * ow;
                for (int64_t oy = 0; oy < oh; ++oy) {
                    const Axis& ay = ys[oy];
                    for (int64_t ox = 0; ox < ow; ++ox) {
                        const Axis& axw = xs[ox];
                        const double v = gy[oy * ow + ox];
                        plane[ay.i0 * w + axw.i0] += v * (1.0 - ay.f) * (1.0 - axw.f);
                        plane[ay.i0 * w + axw.i1] += v * (1.0 - ay.f) * axw.f;
                        plane[ay.i1 * w + axw.i0] += v * ay.f * (1.0 - axw.f);
                        plane[ay.i1 * w + axw.i1] += v * ay.f * axw.f;
                    }
                }
            }
        };
    }
    return Tensor(node);
}

Tensor batch_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  std::vector<double>& running_mean, std::vector<double>& running_var,
                  bool training, bool update_running, double momentum, double eps) {
    if (x.shape().size() != 4)
        throw ShapeError("batch_norm: expected NCHW, got " + shape_str(x.shape()));
    const int64_t n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
    if (gamma.numel() != c || beta.numel() != c)
        throw ShapeError("batch_norm: scale/shift must have " + std::to_string(c) + " entries");
    if (static_cast<int64_t>(running_mean.size()) != c ||
        static_cast<int64_t>(running_var.size()) != c)
        throw ShapeError("batch_norm: running buffers must have " + std::to_string(c) +
                         " entries");

    const auto& xd = x.data();
    const int64_t cnt = n * hw;
    std::vector<double> mean_v(c), var_v(c);
    if (training) {
        for (int64_t ch = 0; ch < c; ++ch) {
            double m = 0.0;
            for (int64_t b = 0; b < n; ++b) {
                const double* p = xd.data() + (b * c + ch) * hw;
                for (int64_t i = 0; i < hw; ++i) m += p[i];
            }
            m /= static_cast<double>(cnt);
            double v = 0.0;
            for (int64_t b = 0; b < n; ++b) {
                const double* p = xd.data() + (b * c + ch) * hw;
                for (int64_t i = 0; i < hw; ++i) {
                    const double d = p[i] - m;
                    v += d * d;
                }
            }
            v /= static_cast<double>(cnt);
            mean_v[ch] = m;
            var_v[ch] = v;
        }
        if (update_running) {
            for (int64_t ch = 0; ch < c; ++ch) {
                running_mean[ch] = (1.0 - momentum) * running_mean[ch] + momentum * mean_v[ch];
                running_var[ch] = (1.0 - momentum) * running_var[ch] + momentum * var_v[ch];
            }
        }
    } else {
        mean_v = running_mean;
        var_v = running_var;
    }

    std::vector<double> inv_std(c);
    for (int64_t ch = 0; ch < c; ++ch) inv_std[ch] = 1.0 / std::sqrt(var_v[ch] + eps);

    const auto& gd = gamma.data();
    const auto& bd = beta.data();
    std::vector<double> out(xd.size());
    for (int64_t b = 0; b < n; ++b) {
        for (int64_t ch = 0; ch < c; ++ch) {
            const double* p = xd.data() + (b * c + ch) * hw;
            double* o = out.data() + (b * c + ch) * hw;
            const double m = mean_v[ch], is = inv_std[ch], gm = gd[ch], bt = bd[ch];
            for (int64_t i = 0; i < hw; ++i) o[i] = (p[i] - m) * is * gm + bt;
        }
    }

    const bool rg = grad_enabled() &&
                    (x.requires_grad() || gamma.requires_grad() || beta.requires_grad());
    auto node = std::make_shared<TensorNode>();
    node->shape = x.shape();
    node->data = std::move(out);
    node->requires_grad = rg;
    if (rg) {
        auto xn = x.node(), gn = gamma.node(), btn = beta.node();
        node->parents = {xn, gn, btn};
        node->backward_fn = [xn, gn, btn, mean_v, inv_std, n, c, hw, training](TensorNode& self) {
            const int64_t cnt = n * hw;
            for (int64_t ch = 0; ch < c; ++ch) {
                const double m = mean_v[ch], is = inv_std[ch];
                double sum_dy = 0.0, sum_dy_xhat = 0.0;
                for (int64_t b = 0; b < n; ++b) {
                    const double* gy = self.pass_grad.data() + (b * c + ch) * hw;
                    const double* p = xn->data.data() + (b * c + ch) * hw;
                    for (int64_t i = 0; i < hw; ++i) {
                        sum_dy += gy[i];
                        sum_dy_xhat += gy[i] * (p[i] - m) * is;
                    }
                }
                if (gn->requires_grad) gn->ensure_grad()[ch] += sum_dy_xhat;
                if (btn->requires_grad) btn->ensure_grad()[ch] += sum_dy;
                if (xn->requires_grad) {
                    auto& g = xn->ensure_grad();
                    const double gm = gn->data[ch];
                    if (training) {
                        for (int64_t b = 0; b < n; ++b) {
                            const double* gy = self.pass_grad.data() + (b * c + ch) * hw;
                            const double* p = xn->data.data() + (b * c + ch) * hw;
                            double* gx = g.data() + (b * c + ch) * hw;
                            for (int64_t i = 0; i < hw; ++i) {
                                const double xhat = (p[i] - m) * is;
                                gx[i] += gm * is *
                                         (gy[i] - sum_dy / cnt - xhat * sum_dy_xhat / cnt);
                            }
                        }
                    } else {
                        for (int64_t b = 0; b < n; ++b) {
                            const double* gy = self.pass_grad.data() + (b * c + ch) * hw;
                            double* gx = g.data() + (b * c + ch) * hw;
                            for (int64_t i = 0; i < hw; ++i) gx[i] += gm * is * gy[i];
                        }
                    }
                }
            }
        };
    }
    return Tensor(node);
}

}  // namespace stein
