#pragma once

// Convolution and resampling ops. Convolutions lower to im2col + GEMM.

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "svfit/autodiff/tensor.hpp"

namespace svfit::ad {

namespace detail {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct ConvGeom {
    int in_c, h, w, k, stride, pad, out_h, out_w;
    std::size_t out_plane() const { return static_cast<std::size_t>(out_h) * out_w; }
    int rows() const { return in_c * k * k; }
    bool trivial() const { return k == 1 && stride == 1 && pad == 0; }
};

inline ConvGeom conv_geometry(const Shape& x, const Shape& w, int stride, int pad, const char* op) {
    if (w.c != x.c)
        throw ShapeError(std::string(op) + ": input channels " + std::to_string(x.c) + " but weight expects " +
                         std::to_string(w.c) + " (weight " + w.str() + ")");
    if (w.h != w.w || (w.h != 1 && w.h != 3))
        throw ShapeError(std::string(op) + ": kernel must be 1x1 or 3x3, got " + w.str());
    if (stride < 1 || pad < 0) throw ShapeError(std::string(op) + ": invalid stride/padding");
    int oh = (x.h + 2 * pad - w.h) / stride + 1;
    int ow = (x.w + 2 * pad - w.w) / stride + 1;
    if (oh <= 0 || ow <= 0) throw ShapeError(std::string(op) + ": input " + x.str() + " too small for kernel");
    return {x.c, x.h, x.w, w.h, stride, pad, oh, ow};
}

template <typename T>
void im2col(const T* x, const ConvGeom& g, T* cols) {
    const std::size_t op = g.out_plane();
    for (int c = 0; c < g.in_c; ++c)
        for (int ky = 0; ky < g.k; ++ky)
            for (int kx = 0; kx < g.k; ++kx) {
                T* dst = cols + ((static_cast<std::size_t>(c) * g.k + ky) * g.k + kx) * op;
                const T* src = x + static_cast<std::size_t>(c) * g.h * g.w;
                for (int oy = 0; oy < g.out_h; ++oy) {
                    int iy = oy * g.stride - g.pad + ky;
                    T* row = dst + static_cast<std::size_t>(oy) * g.out_w;
                    if (iy < 0 || iy >= g.h) {
                        std::fill(row, row + g.out_w, T(0));
                        continue;
                    }
                    for (int ox = 0; ox < g.out_w; ++ox) {
                        int ix = ox * g.stride - g.pad + kx;
                        row[ox] = (ix >= 0 && ix < g.w) ? src[iy * g.w + ix] : T(0);
                    }
                }
            }
}

template <typename T>
void col2im(const T* cols, const ConvGeom& g, T* dx) {
    const std::size_t op = g.out_plane();
    for (int c = 0; c < g.in_c; ++c)
        for (int ky = 0; ky < g.k; ++ky)
            for (int kx = 0; kx < g.k; ++kx) {
                const T* src = cols + ((static_cast<std::size_t>(c) * g.k + ky) * g.k + kx) * op;
                T* dst = dx + static_cast<std::size_t>(c) * g.h * g.w;
                for (int oy = 0; oy < g.out_h; ++oy) {
                    int iy = oy * g.stride - g.pad + ky;
                    if (iy < 0 || iy >= g.h) continue;
                    const T* row = src + static_cast<std::size_t>(oy) * g.out_w;
                    for (int ox = 0; ox < g.out_w; ++ox) {
                        int ix = ox * g.stride - g.pad + kx;
                        if (ix >= 0 && ix < g.w) dst[iy * g.w + ix] += row[ox];
                    }
                }
            }
}

/// Column matrix for one sample: either a view of the input (1x1 kernels)
/// or an im2col buffer.
template <typename T>
const T* columns(const T* x, const ConvGeom& g, std::vector<T>& buf) {
    if (g.trivial()) return x;
    buf.resize(static_cast<std::size_t>(g.rows()) * g.out_plane());
    im2col(x, g, buf.data());
    return buf.data();
}

/// Accumulates d(input) for one sample from d(columns).
template <typename T>
void scatter_columns(const T* dcols, const ConvGeom& g, T* dx) {
    if (g.trivial()) {
        std::size_t n = static_cast<std::size_t>(g.rows()) * g.out_plane();
        for (std::size_t i = 0; i < n; ++i) dx[i] += dcols[i];
    } else {
        col2im(dcols, g, dx);
    }
}

}  // namespace detail

/// Cross-correlation of x [N,I,H,W] with weight [O,I,k,k]; bias [1,O,1,1] optional.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias = {}, int stride = 1,
                 int padding = -1) {
    using Mat = detail::RowMat<T>;
    using CMap = Eigen::Map<const Mat>;
    using MMap = Eigen::Map<Mat>;
    const Shape xs = x.shape(), ws = weight.shape();
    if (padding < 0) padding = ws.h / 2;
    const detail::ConvGeom g = detail::conv_geometry(xs, ws, stride, padding, "conv2d");
    const int outc = ws.n;
    if (bias.defined() && bias.shape() != Shape{1, outc, 1, 1})
        throw ShapeError("conv2d: bias " + bias.shape().str() + " does not match " + std::to_string(outc) +
                         " output channels");
    const std::size_t op = g.out_plane();
    const Shape os{xs.n, outc, g.out_h, g.out_w};
    std::vector<T> out(os.size());
    std::vector<T> buf;
    CMap wm(weight.ptr(), outc, g.rows());
    for (int n = 0; n < xs.n; ++n) {
        const T* cols = detail::columns(x.ptr() + n * xs.sample(), g, buf);
        MMap(out.data() + n * os.sample(), outc, op).noalias() = wm * CMap(cols, g.rows(), op);
        if (bias.defined())
            for (int o = 0; o < outc; ++o) {
                T b = bias.ptr()[o];
                T* dst = out.data() + n * os.sample() + o * op;
                for (std::size_t i = 0; i < op; ++i) dst[i] += b;
            }
    }
    return make_result<T>(os, std::move(out), {x, weight, bias}, [g, xs, os, outc](Node<T>& self) {
        const std::size_t op = g.out_plane();
        const auto& xv = self.inputs[0]->value;
        const auto& wv = self.inputs[1]->value;
        bool gx = wants_grad(self, 0), gw = wants_grad(self, 1), gb = wants_grad(self, 2);
        std::vector<T> buf, dcols;
        CMap wm(wv.data(), outc, g.rows());
        for (int n = 0; n < xs.n; ++n) {
            CMap go(self.grad.data() + n * os.sample(), outc, op);
            if (gw) {
                const T* cols = detail::columns(xv.data() + n * xs.sample(), g, buf);
                MMap(self.inputs[1]->grad_data(), outc, g.rows()).noalias() += go * CMap(cols, g.rows(), op).transpose();
            }
            if (gx) {
                dcols.resize(static_cast<std::size_t>(g.rows()) * op);
                MMap(dcols.data(), g.rows(), op).noalias() = wm.transpose() * go;
                detail::scatter_columns(dcols.data(), g, self.inputs[0]->grad_data() + n * xs.sample());
            }
            if (gb) {
                T* db = self.inputs[2]->grad_data();
                for (int o = 0; o < outc; ++o) {
                    const T* src = self.grad.data() + n * os.sample() + o * op;
                    T acc = 0;
                    for (std::size_t i = 0; i < op; ++i) acc += src[i];
                    db[o] += acc;
                }
            }
        }
    });
}

/// Style-modulated convolution (same padding, stride 1). The weight [O,I,k,k]
/// is scaled per input channel by `style` ([N,I,1,1] or [1,I,1,1]); with
/// `demodulate`, every output filter is then divided by
/// sqrt(sum of its squared scaled weights + 1e-8).
template <typename T>
Tensor<T> modulated_conv2d(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& style, bool demodulate) {
    using Mat = detail::RowMat<T>;
    using CMap = Eigen::Map<const Mat>;
    using MMap = Eigen::Map<Mat>;
    const Shape xs = x.shape(), ws = weight.shape(), ss = style.shape();
    const detail::ConvGeom g = detail::conv_geometry(xs, ws, 1, ws.h / 2, "modulated_conv2d");
    if (static_cast<int>(ss.sample()) != xs.c || (ss.n != 1 && ss.n != xs.n))
        throw ShapeError("modulated_conv2d: style " + ss.str() + " incompatible with input " + xs.str());
    const int outc = ws.n, rows = g.rows(), kk = ws.h * ws.w;
    const std::size_t op = g.out_plane();
    const Shape os{xs.n, outc, g.out_h, g.out_w};

    // Effective per-style-sample kernels and demodulation factors.
    const int ns = ss.n;
    std::vector<T> wmod(static_cast<std::size_t>(ns) * outc * rows);
    std::vector<T> demod(static_cast<std::size_t>(ns) * outc, T(1));
    for (int s = 0; s < ns; ++s) {
        const T* sv = style.ptr() + s * xs.c;
        for (int o = 0; o < outc; ++o) {
            T* dst = wmod.data() + (static_cast<std::size_t>(s) * outc + o) * rows;
            const T* src = weight.ptr() + static_cast<std::size_t>(o) * rows;
            T ss2 = 0;
            for (int i = 0; i < xs.c; ++i)
                for (int k = 0; k < kk; ++k) {
                    T u = src[i * kk + k] * sv[i];
                    dst[i * kk + k] = u;
                    ss2 += u * u;
                }
            if (demodulate) {
                T d = T(1) / std::sqrt(ss2 + T(1e-8));
                demod[s * outc + o] = d;
                for (int r = 0; r < rows; ++r) dst[r] *= d;
            }
        }
    }

    std::vector<T> out(os.size());
    std::vector<T> buf;
    for (int n = 0; n < xs.n; ++n) {
        const T* cols = detail::columns(x.ptr() + n * xs.sample(), g, buf);
        CMap wm(wmod.data() + (ns == 1 ? 0 : n) * static_cast<std::size_t>(outc) * rows, outc, rows);
        MMap(out.data() + n * os.sample(), outc, op).noalias() = wm * CMap(cols, rows, op);
    }

    return make_result<T>(os, std::move(out), {x, weight, style},
                          [g, xs, os, outc, rows, kk, ns, demodulate, wmod = std::move(wmod),
                           demod = std::move(demod)](Node<T>& self) {
        const std::size_t op = g.out_plane();
        const auto& xv = self.inputs[0]->value;
        const auto& wv = self.inputs[1]->value;
        const auto& sv = self.inputs[2]->value;
        bool gx = wants_grad(self, 0), gw = wants_grad(self, 1), gs = wants_grad(self, 2);
        std::vector<T> buf, dcols;
        // dW' accumulated per style sample.
        std::vector<T> dwp;
        if (gw || gs) dwp.assign(static_cast<std::size_t>(ns) * outc * rows, T(0));
        for (int n = 0; n < xs.n; ++n) {
            CMap go(self.grad.data() + n * os.sample(), outc, op);
            std::size_t woff = (ns == 1 ? 0 : n) * static_cast<std::size_t>(outc) * rows;
            if (gw || gs) {
                const T* cols = detail::columns(xv.data() + n * xs.sample(), g, buf);
                MMap(dwp.data() + woff, outc, rows).noalias() += go * CMap(cols, rows, op).transpose();
            }
            if (gx) {
                dcols.resize(static_cast<std::size_t>(rows) * op);
                MMap(dcols.data(), rows, op).noalias() = CMap(wmod.data() + woff, outc, rows).transpose() * go;
                detail::scatter_columns(dcols.data(), g, self.inputs[0]->grad_data() + n * xs.sample());
            }
        }
        if (!gw && !gs) return;
        T* dw = gw ? self.inputs[1]->grad_data() : nullptr;
        T* dstyle = gs ? self.inputs[2]->grad_data() : nullptr;
        const int inc = xs.c;
        for (int s = 0; s < ns; ++s) {
            const T* st = sv.data() + s * inc;
            for (int o = 0; o < outc; ++o) {
                const T* dw_eff = dwp.data() + (static_cast<std::size_t>(s) * outc + o) * rows;
                const T* w_eff = wmod.data() + (static_cast<std::size_t>(s) * outc + o) * rows;
                const T* w_raw = wv.data() + static_cast<std::size_t>(o) * rows;
                T d = demod[s * outc + o];
                // du = d dW' - d^3 u <dW', u>, with u = W' / d the undemodulated kernel.
                T proj = 0;
                if (demodulate) {
                    for (int r = 0; r < rows; ++r) proj += dw_eff[r] * w_eff[r];
                    proj /= d;  // <dW', u>
                }
                for (int i = 0; i < inc; ++i)
                    for (int k = 0; k < kk; ++k) {
                        int r = i * kk + k;
                        T du = demodulate ? d * dw_eff[r] - d * d * proj * w_eff[r] : dw_eff[r];
                        if (dw) dw[r + static_cast<std::size_t>(o) * rows] += du * st[i];
                        if (dstyle) dstyle[s * inc + i] += du * w_raw[r];
                    }
            }
        }
    });
}

/// Nearest-neighbour 2x upsampling.
template <typename T>
Tensor<T> upsample2x(const Tensor<T>& x) {
    const Shape s = x.shape();
    const Shape os{s.n, s.c, s.h * 2, s.w * 2};
    std::vector<T> out(os.size());
    const std::size_t planes = static_cast<std::size_t>(s.n) * s.c;
    for (std::size_t p = 0; p < planes; ++p) {
        const T* src = x.ptr() + p * s.plane();
        T* dst = out.data() + p * os.plane();
        for (int y = 0; y < os.h; ++y)
            for (int xx = 0; xx < os.w; ++xx) dst[y * os.w + xx] = src[(y / 2) * s.w + xx / 2];
    }
    return make_result<T>(os, std::move(out), {x}, [s, os, planes](Node<T>& self) {
        T* g = self.inputs[0]->grad_data();
        for (std::size_t p = 0; p < planes; ++p) {
            const T* go = self.grad.data() + p * os.plane();
            T* gi = g + p * s.plane();
            for (int y = 0; y < os.h; ++y)
                for (int xx = 0; xx < os.w; ++xx) gi[(y / 2) * s.w + xx / 2] += go[y * os.w + xx];
        }
    });
}

/// 2x2 average pooling; spatial extents must be even.
template <typename T>
Tensor<T> avg_pool2x(const Tensor<T>& x) {
    const Shape s = x.shape();
    if (s.h % 2 || s.w % 2) throw ShapeError("avg_pool2x: odd spatial size " + s.str());
    const Shape os{s.n, s.c, s.h / 2, s.w / 2};
    std::vector<T> out(os.size());
    const std::size_t planes = static_cast<std::size_t>(s.n) * s.c;
    for (std::size_t p = 0; p < planes; ++p) {
        const T* src = x.ptr() + p * s.plane();
        T* dst = out.data() + p * os.plane();
        for (int y = 0; y < os.h; ++y)
            for (int xx = 0; xx < os.w; ++xx) {
                const T* a = src + (2 * y) * s.w + 2 * xx;
                dst[y * os.w + xx] = T(0.25) * (a[0] + a[1] + a[s.w] + a[s.w + 1]);
            }
    }
    return make_result<T>(os, std::move(out), {x}, [s, os, planes](Node<T>& self) {
        T* g = self.inputs[0]->grad_data();
        for (std::size_t p = 0; p < planes; ++p) {
            const T* go = self.grad.data() + p * os.plane();
            T* gi = g + p * s.plane();
            for (int y = 0; y < os.h; ++y)
                for (int xx = 0; xx < os.w; ++xx) {
                    T v = T(0.25) * go[y * os.w + xx];
                    T* a = gi + (2 * y) * s.w + 2 * xx;
                    a[0] += v;
                    a[1] += v;
                    a[s.w] += v;
                    a[s.w + 1] += v;
                }
        }
    });
}

}  // namespace svfit::ad
