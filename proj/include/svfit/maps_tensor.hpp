#pragma once

// Bridges between SvbrdfMaps and [N,9,H,W] tensors: the bounded range mapping
// shared by the generator head and per-pixel fitting, and the renderer as an
// autodiff op.

#include <algorithm>
#include <cmath>
#include <vector>

#include "svfit/autodiff/tensor.hpp"
#include "svfit/material.hpp"
#include "svfit/render.hpp"

namespace svfit {

template <typename T>
ad::Tensor<T> to_tensor(const SvbrdfMaps<T>& maps, bool requires_grad = false) {
    return ad::Tensor<T>::from({1, 9, maps.height(), maps.width()},
                               std::vector<T>(maps.data().begin(), maps.data().end()), requires_grad);
}

/// Sample `n` of a [N,9,H,W] tensor.
template <typename T>
SvbrdfMaps<T> to_maps(const ad::Tensor<T>& t, int n = 0) {
    const ad::Shape s = t.shape();
    if (s.c != 9) throw ad::ShapeError("to_maps: expected 9 channels, got " + s.str());
    SvbrdfMaps<T> m(s.w, s.h);
    std::copy(t.ptr() + n * s.sample(), t.ptr() + (n + 1) * s.sample(), m.data().begin());
    return m;
}

template <typename T>
ad::Tensor<T> to_tensor(const Image<T>& img) {
    return ad::Tensor<T>::from({1, img.channels, img.height, img.width}, img.data);
}

template <typename T>
Image<T> to_image(const ad::Tensor<T>& t) {
    const ad::Shape s = t.shape();
    Image<T> img(s.w, s.h, s.c);
    std::copy(t.ptr(), t.ptr() + s.sample(), img.data.begin());
    return img;
}

/// Unbounded 9-channel values -> valid material maps:
/// albedo/specular sigmoid, normal xy tanh then projected onto the unit
/// disk, roughness sigmoid rescaled to [r_min, 1].
template <typename T>
ad::Tensor<T> range_map(const ad::Tensor<T>& raw) {
    const ad::Shape s = raw.shape();
    if (s.c != 9) throw ad::ShapeError("range_map: expected 9 channels, got " + s.str());
    const std::size_t hw = s.plane();
    const T rmin = T(kRoughnessMin);
    std::vector<T> out(raw.size());
    auto sig = [](T v) { return T(1) / (T(1) + std::exp(-v)); };
    for (int n = 0; n < s.n; ++n) {
        const T* in = raw.ptr() + n * s.sample();
        T* o = out.data() + n * s.sample();
        for (std::size_t i = 0; i < hw; ++i) {
            for (int c : {0, 1, 2, 6, 7, 8}) o[c * hw + i] = sig(in[c * hw + i]);
            o[5 * hw + i] = rmin + (T(1) - rmin) * sig(in[5 * hw + i]);
            T x = std::tanh(in[3 * hw + i]), y = std::tanh(in[4 * hw + i]);
            project_to_disk(x, y);
            o[3 * hw + i] = x;
            o[4 * hw + i] = y;
        }
    }
    return ad::make_result<T>(s, std::move(out), {raw}, [s, hw, rmin](ad::Node<T>& self) {
        const auto& in = self.inputs[0]->value;
        T* g = self.inputs[0]->grad_data();
        for (int n = 0; n < s.n; ++n) {
            const std::size_t base = n * s.sample();
            const T* o = self.value.data() + base;
            const T* go = self.grad.data() + base;
            const T* iv = in.data() + base;
            T* gi = g + base;
            for (std::size_t i = 0; i < hw; ++i) {
                for (int c : {0, 1, 2, 6, 7, 8}) {
                    T y = o[c * hw + i];
                    gi[c * hw + i] += go[c * hw + i] * y * (T(1) - y);
                }
                T yr = (o[5 * hw + i] - rmin) / (T(1) - rmin);
                gi[5 * hw + i] += go[5 * hw + i] * (T(1) - rmin) * yr * (T(1) - yr);

                T tx = std::tanh(iv[3 * hw + i]), ty = std::tanh(iv[4 * hw + i]);
                T dtx = T(1) - tx * tx, dty = T(1) - ty * ty;
                T gx = go[3 * hw + i], gy = go[4 * hw + i];
                T r2 = tx * tx + ty * ty;
                if (r2 > T(1)) {
                    T r = std::sqrt(r2), r3 = r2 * r;
                    T ux = gx * (ty * ty / r3) + gy * (-tx * ty / r3);
                    T uy = gx * (-tx * ty / r3) + gy * (tx * tx / r3);
                    gx = ux;
                    gy = uy;
                }
                gi[3 * hw + i] += gx * dtx;
                gi[4 * hw + i] += gy * dty;
            }
        }
    });
}

/// Right inverse of `range_map` for maps satisfying the invariants (values at
/// the bounds are pulled inside by a small margin).
template <typename T>
ad::Tensor<T> inverse_range_map(const SvbrdfMaps<T>& maps) {
    const std::size_t hw = maps.pixels();
    std::vector<T> raw(9 * hw);
    const T margin = T(1e-5);
    auto logit = [&](T p) {
        p = std::clamp(p, margin, T(1) - margin);
        return std::log(p / (T(1) - p));
    };
    auto data = maps.data();
    const T rmin = T(kRoughnessMin);
    for (std::size_t i = 0; i < hw; ++i) {
        for (int c : {0, 1, 2, 6, 7, 8}) raw[c * hw + i] = logit(data[c * hw + i]);
        raw[5 * hw + i] = logit((data[5 * hw + i] - rmin) / (T(1) - rmin));
        T x = data[3 * hw + i], y = data[4 * hw + i];
        project_to_disk(x, y);
        raw[3 * hw + i] = std::atanh(std::clamp(x, T(-1) + margin, T(1) - margin));
        raw[4 * hw + i] = std::atanh(std::clamp(y, T(-1) + margin, T(1) - margin));
    }
    return ad::Tensor<T>::from({1, 9, maps.height(), maps.width()}, std::move(raw));
}

/// Renders a [1,9,H,W] maps tensor under `view` into a [1,3,H,W] tensor;
/// the backward pass is `render_backward`.
template <typename T>
ad::Tensor<T> render_op(const ad::Tensor<T>& maps, const CaptureView& view) {
    const ad::Shape s = maps.shape();
    if (s.n != 1) throw ad::ShapeError("render_op: expected a single material, got " + s.str());
    SvbrdfMaps<T> m = to_maps(maps);
    Image<T> img = render(m, view);
    return ad::make_result<T>({1, 3, s.h, s.w}, std::move(img.data), {maps}, [view](ad::Node<T>& self) {
        const ad::Shape s = self.inputs[0]->shape;
        SvbrdfMaps<T> m(s.w, s.h);
        std::copy(self.inputs[0]->value.begin(), self.inputs[0]->value.end(), m.data().begin());
        Image<T> adj(s.w, s.h, 3);
        std::copy(self.grad.begin(), self.grad.end(), adj.data.begin());
        SvbrdfMaps<T> gm = render_backward(m, view, adj);
        T* g = self.inputs[0]->grad_data();
        auto gd = gm.data();
        for (std::size_t i = 0; i < gd.size(); ++i) g[i] += gd[i];
    });
}

}  // namespace svfit
