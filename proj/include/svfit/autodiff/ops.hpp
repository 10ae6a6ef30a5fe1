#pragma once

// Element-wise, reduction and layout ops.

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "svfit/autodiff/tensor.hpp"

namespace svfit::ad {

namespace detail {

inline void require_same(const Shape& a, const Shape& b, const char* op) {
    if (!(a == b)) throw ShapeError(std::string(op) + ": shape mismatch " + a.str() + " vs " + b.str());
}

template <typename T, typename Fwd, typename Deriv>
Tensor<T> unary(const Tensor<T>& x, Fwd fwd, Deriv deriv) {
    std::vector<T> out(x.size());
    const T* xv = x.ptr();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(xv[i]);
    return make_result<T>(x.shape(), std::move(out), {x}, [deriv](Node<T>& self) {
        Node<T>& in = *self.inputs[0];
        T* g = in.grad_data();
        for (std::size_t i = 0; i < self.value.size(); ++i)
            g[i] += self.grad[i] * deriv(in.value[i], self.value[i]);
    });
}

}  // namespace detail

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
    detail::require_same(a.shape(), b.shape(), "add");
    std::vector<T> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.ptr()[i] + b.ptr()[i];
    return make_result<T>(a.shape(), std::move(out), {a, b}, [](Node<T>& self) {
        for (int k = 0; k < 2; ++k)
            if (wants_grad(self, k)) {
                T* g = self.inputs[k]->grad_data();
                for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
            }
    });
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
    detail::require_same(a.shape(), b.shape(), "sub");
    std::vector<T> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.ptr()[i] - b.ptr()[i];
    return make_result<T>(a.shape(), std::move(out), {a, b}, [](Node<T>& self) {
        if (wants_grad(self, 0)) {
            T* g = self.inputs[0]->grad_data();
            for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
        }
        if (wants_grad(self, 1)) {
            T* g = self.inputs[1]->grad_data();
            for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] -= self.grad[i];
        }
    });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
    detail::require_same(a.shape(), b.shape(), "mul");
    std::vector<T> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.ptr()[i] * b.ptr()[i];
    return make_result<T>(a.shape(), std::move(out), {a, b}, [](Node<T>& self) {
        const Node<T>& na = *self.inputs[0];
        const Node<T>& nb = *self.inputs[1];
        if (wants_grad(self, 0)) {
            T* g = self.inputs[0]->grad_data();
            for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i] * nb.value[i];
        }
        if (wants_grad(self, 1)) {
            T* g = self.inputs[1]->grad_data();
            for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i] * na.value[i];
        }
    });
}

template <typename T>
Tensor<T> scale(const Tensor<T>& x, T s) {
    return detail::unary(x, [s](T v) { return v * s; }, [s](T, T) { return s; });
}

template <typename T>
Tensor<T> add_scalar(const Tensor<T>& x, T s) {
    return detail::unary(x, [s](T v) { return v + s; }, [](T, T) { return T(1); });
}

template <typename T>
Tensor<T> square(const Tensor<T>& x) {
    return detail::unary(x, [](T v) { return v * v; }, [](T v, T) { return T(2) * v; });
}

template <typename T>
Tensor<T> leaky_relu(const Tensor<T>& x, T slope = T(0.2)) {
    return detail::unary(
        x, [slope](T v) { return v > T(0) ? v : v * slope; }, [slope](T v, T) { return v > T(0) ? T(1) : slope; });
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x) {
    return detail::unary(
        x, [](T v) { return T(1) / (T(1) + std::exp(-v)); }, [](T, T y) { return y * (T(1) - y); });
}

template <typename T>
Tensor<T> tanh(const Tensor<T>& x) {
    return detail::unary(x, [](T v) { return std::tanh(v); }, [](T, T y) { return T(1) - y * y; });
}

/// log(1 + exp(x)), evaluated stably.
template <typename T>
Tensor<T> softplus(const Tensor<T>& x) {
    return detail::unary(
        x, [](T v) { return v > T(0) ? v + std::log1p(std::exp(-v)) : std::log1p(std::exp(v)); },
        [](T v, T) { return T(1) / (T(1) + std::exp(-v)); });
}

template <typename T>
Tensor<T> clamp(const Tensor<T>& x, T lo, T hi) {
    return detail::unary(
        x, [lo, hi](T v) { return v < lo ? lo : (v > hi ? hi : v); },
        [lo, hi](T v, T) { return (v >= lo && v <= hi) ? T(1) : T(0); });
}

/// x^p for x > 0.
template <typename T>
Tensor<T> pow(const Tensor<T>& x, T p) {
    return detail::unary(
        x, [p](T v) { return std::pow(v, p); }, [p](T v, T y) { return v > T(0) ? p * y / v : T(0); });
}

template <typename T>
Tensor<T> sum(const Tensor<T>& x) {
    T acc = 0;
    for (T v : x.data()) acc += v;
    return make_result<T>({1, 1, 1, 1}, {acc}, {x}, [](Node<T>& self) {
        T* g = self.inputs[0]->grad_data();
        T go = self.grad[0];
        for (std::size_t i = 0; i < self.inputs[0]->value.size(); ++i) g[i] += go;
    });
}

template <typename T>
Tensor<T> mean(const Tensor<T>& x) {
    return scale(sum(x), T(1) / static_cast<T>(x.size()));
}

/// Sum of squared differences, fused.
template <typename T>
Tensor<T> squared_distance(const Tensor<T>& a, const Tensor<T>& b) {
    detail::require_same(a.shape(), b.shape(), "squared_distance");
    T acc = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        T d = a.ptr()[i] - b.ptr()[i];
        acc += d * d;
    }
    return make_result<T>({1, 1, 1, 1}, {acc}, {a, b}, [](Node<T>& self) {
        const auto& va = self.inputs[0]->value;
        const auto& vb = self.inputs[1]->value;
        T go = T(2) * self.grad[0];
        if (wants_grad(self, 0)) {
            T* g = self.inputs[0]->grad_data();
            for (std::size_t i = 0; i < va.size(); ++i) g[i] += go * (va[i] - vb[i]);
        }
        if (wants_grad(self, 1)) {
            T* g = self.inputs[1]->grad_data();
            for (std::size_t i = 0; i < va.size(); ++i) g[i] -= go * (va[i] - vb[i]);
        }
    });
}

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape s) {
    if (s.size() != x.size()) throw ShapeError("reshape: " + x.shape().str() + " -> " + s.str());
    std::vector<T> out(x.data().begin(), x.data().end());
    return make_result<T>(s, std::move(out), {x}, [](Node<T>& self) {
        T* g = self.inputs[0]->grad_data();
        for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
    });
}

/// Sample `i` of the batch as a [1,C,H,W] tensor.
template <typename T>
Tensor<T> select_batch(const Tensor<T>& x, int i) {
    const Shape s = x.shape();
    if (i < 0 || i >= s.n) throw ShapeError("select_batch: index out of range for " + s.str());
    std::size_t k = s.sample();
    std::vector<T> out(x.ptr() + i * k, x.ptr() + (i + 1) * k);
    return make_result<T>({1, s.c, s.h, s.w}, std::move(out), {x}, [i, k](Node<T>& self) {
        T* g = self.inputs[0]->grad_data() + i * k;
        for (std::size_t j = 0; j < k; ++j) g[j] += self.grad[j];
    });
}

/// Repeats a [1,C,H,W] tensor n times along the batch axis.
template <typename T>
Tensor<T> broadcast_batch(const Tensor<T>& x, int n) {
    const Shape s = x.shape();
    if (s.n != 1) throw ShapeError("broadcast_batch: expected batch 1, got " + s.str());
    if (n == 1) return x;
    std::size_t k = s.sample();
    std::vector<T> out(k * n);
    for (int b = 0; b < n; ++b) std::copy(x.ptr(), x.ptr() + k, out.begin() + b * k);
    return make_result<T>({n, s.c, s.h, s.w}, std::move(out), {x}, [n, k](Node<T>& self) {
        T* g = self.inputs[0]->grad_data();
        for (int b = 0; b < n; ++b)
            for (std::size_t j = 0; j < k; ++j) g[j] += self.grad[b * k + j];
    });
}

template <typename T>
Tensor<T> concat_batch(const std::vector<Tensor<T>>& xs) {
    if (xs.empty()) throw ShapeError("concat_batch: no inputs");
    Shape s = xs[0].shape();
    int n = 0;
    for (const auto& x : xs) {
        const Shape& t = x.shape();
        if (t.c != s.c || t.h != s.h || t.w != s.w)
            throw ShapeError("concat_batch: mismatched sample shape " + t.str() + " vs " + s.str());
        n += t.n;
    }
    std::vector<T> out;
    out.reserve(static_cast<std::size_t>(n) * s.sample());
    std::vector<std::size_t> offsets;
    for (const auto& x : xs) {
        offsets.push_back(out.size());
        out.insert(out.end(), x.data().begin(), x.data().end());
    }
    return make_result<T>({n, s.c, s.h, s.w}, std::move(out), xs, [offsets](Node<T>& self) {
        for (std::size_t k = 0; k < self.inputs.size(); ++k) {
            if (!wants_grad(self, k)) continue;
            T* g = self.inputs[k]->grad_data();
            for (std::size_t j = 0; j < self.inputs[k]->value.size(); ++j) g[j] += self.grad[offsets[k] + j];
        }
    });
}

/// Adds a per-channel bias of shape [1,C,1,1].
template <typename T>
Tensor<T> add_channel_bias(const Tensor<T>& x, const Tensor<T>& bias) {
    const Shape s = x.shape();
    if (bias.shape() != Shape{1, s.c, 1, 1})
        throw ShapeError("add_channel_bias: bias " + bias.shape().str() + " does not match channels of " + s.str());
    std::vector<T> out(x.data().begin(), x.data().end());
    std::size_t hw = s.plane();
    for (int n = 0; n < s.n; ++n)
        for (int c = 0; c < s.c; ++c) {
            T b = bias.ptr()[c];
            T* o = out.data() + (static_cast<std::size_t>(n) * s.c + c) * hw;
            for (std::size_t i = 0; i < hw; ++i) o[i] += b;
        }
    return make_result<T>(s, std::move(out), {x, bias}, [s, hw](Node<T>& self) {
        if (wants_grad(self, 0)) {
            T* g = self.inputs[0]->grad_data();
            for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
        }
        if (wants_grad(self, 1)) {
            T* g = self.inputs[1]->grad_data();
            for (int n = 0; n < s.n; ++n)
                for (int c = 0; c < s.c; ++c) {
                    const T* go = self.grad.data() + (static_cast<std::size_t>(n) * s.c + c) * hw;
                    T acc = 0;
                    for (std::size_t i = 0; i < hw; ++i) acc += go[i];
                    g[c] += acc;
                }
        }
    });
}

/// x + gain * noise, with a single-channel noise map broadcast over channels
/// (and over the batch when the noise batch is 1).
template <typename T>
Tensor<T> add_noise(const Tensor<T>& x, const Tensor<T>& noise, const Tensor<T>& gain) {
    const Shape s = x.shape();
    const Shape ns = noise.shape();
    if (ns.c != 1 || ns.h != s.h || ns.w != s.w || (ns.n != 1 && ns.n != s.n))
        throw ShapeError("add_noise: noise " + ns.str() + " incompatible with " + s.str());
    if (gain.size() != 1) throw ShapeError("add_noise: gain must be a scalar");
    T k = gain.item();
    std::size_t hw = s.plane();
    std::vector<T> out(x.data().begin(), x.data().end());
    for (int n = 0; n < s.n; ++n) {
        const T* nz = noise.ptr() + (ns.n == 1 ? 0 : n) * hw;
        for (int c = 0; c < s.c; ++c) {
            T* o = out.data() + (static_cast<std::size_t>(n) * s.c + c) * hw;
            for (std::size_t i = 0; i < hw; ++i) o[i] += k * nz[i];
        }
    }
    return make_result<T>(s, std::move(out), {x, noise, gain}, [s, ns, hw](Node<T>& self) {
        const auto& nv = self.inputs[1]->value;
        T k = self.inputs[2]->value[0];
        if (wants_grad(self, 0)) {
            T* g = self.inputs[0]->grad_data();
            for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
        }
        bool gn = wants_grad(self, 1), gg = wants_grad(self, 2);
        if (!gn && !gg) return;
        T* g_noise = gn ? self.inputs[1]->grad_data() : nullptr;
        T g_gain = 0;
        for (int n = 0; n < s.n; ++n) {
            std::size_t off = (ns.n == 1 ? 0 : n) * hw;
            for (int c = 0; c < s.c; ++c) {
                const T* go = self.grad.data() + (static_cast<std::size_t>(n) * s.c + c) * hw;
                for (std::size_t i = 0; i < hw; ++i) {
                    if (gn) g_noise[off + i] += k * go[i];
                    g_gain += go[i] * nv[off + i];
                }
            }
        }
        if (gg) self.inputs[2]->grad_data()[0] += g_gain;
    });
}

/// Divides every sample by sqrt(mean of its squares + 1e-8).
template <typename T>
Tensor<T> normalize_2nd_moment(const Tensor<T>& x) {
    const Shape s = x.shape();
    std::size_t k = s.sample();
    std::vector<T> out(x.size());
    std::vector<T> inv(s.n);
    for (int n = 0; n < s.n; ++n) {
        const T* xv = x.ptr() + n * k;
        T ms = 0;
        for (std::size_t i = 0; i < k; ++i) ms += xv[i] * xv[i];
        ms /= static_cast<T>(k);
        inv[n] = T(1) / std::sqrt(ms + T(1e-8));
        for (std::size_t i = 0; i < k; ++i) out[n * k + i] = xv[i] * inv[n];
    }
    return make_result<T>(s, std::move(out), {x}, [s, k, inv](Node<T>& self) {
        T* g = self.inputs[0]->grad_data();
        for (int n = 0; n < s.n; ++n) {
            const T* y = self.value.data() + n * k;
            const T* go = self.grad.data() + n * k;
            T dot = 0;
            for (std::size_t i = 0; i < k; ++i) dot += go[i] * y[i];
            dot /= static_cast<T>(k);
            // y = x * r, r = (mean(x^2) + eps)^(-1/2): dx = r (go - y <go,y>/k)
            for (std::size_t i = 0; i < k; ++i) g[n * k + i] += inv[n] * (go[i] - y[i] * dot);
        }
    });
}

/// Fully connected layer on [N,I,1,1] inputs with weight [O,I,1,1] and
/// optional bias [1,O,1,1].
template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias = {}) {
    using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    using CMap = Eigen::Map<const Mat>;
    using MMap = Eigen::Map<Mat>;
    const Shape xs = x.shape(), ws = weight.shape();
    int n = xs.n, in = static_cast<int>(xs.sample()), o = ws.n;
    if (static_cast<int>(ws.sample()) != in)
        throw ShapeError("linear: input features " + std::to_string(in) + " vs weight " + ws.str());
    if (bias.defined() && bias.size() != static_cast<std::size_t>(o))
        throw ShapeError("linear: bias " + bias.shape().str() + " for " + std::to_string(o) + " outputs");
    std::vector<T> out(static_cast<std::size_t>(n) * o);
    MMap(out.data(), n, o).noalias() = CMap(x.ptr(), n, in) * CMap(weight.ptr(), o, in).transpose();
    if (bias.defined())
        for (int b = 0; b < n; ++b)
            for (int j = 0; j < o; ++j) out[b * o + j] += bias.ptr()[j];
    return make_result<T>({n, o, 1, 1}, std::move(out), {x, weight, bias}, [n, in, o](Node<T>& self) {
        CMap go(self.grad.data(), n, o);
        if (wants_grad(self, 0))
            MMap(self.inputs[0]->grad_data(), n, in).noalias() += go * CMap(self.inputs[1]->value.data(), o, in);
        if (wants_grad(self, 1))
            MMap(self.inputs[1]->grad_data(), o, in).noalias() +=
                go.transpose() * CMap(self.inputs[0]->value.data(), n, in);
        if (wants_grad(self, 2)) {
            T* g = self.inputs[2]->grad_data();
            for (int b = 0; b < n; ++b)
                for (int j = 0; j < o; ++j) g[j] += self.grad[b * o + j];
        }
    });
}

}  // namespace svfit::ad
