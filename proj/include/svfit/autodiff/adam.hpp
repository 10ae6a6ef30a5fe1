#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

#include "svfit/autodiff/tensor.hpp"

namespace svfit::ad {

struct AdamConfig {
    double lr = 0.01;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

template <typename T>
struct AdamState {
    std::vector<std::vector<T>> m;
    std::vector<std::vector<T>> v;
    long step = 0;
};

/// One bias-corrected Adam update of every parameter from its accumulated
/// gradient. Parameters without a gradient are treated as having zero grad.
template <typename T>
void adam_step(std::vector<Tensor<T>>& params, AdamState<T>& state, const AdamConfig& cfg) {
    if (state.m.empty()) {
        state.m.resize(params.size());
        state.v.resize(params.size());
        for (std::size_t i = 0; i < params.size(); ++i) {
            state.m[i].assign(params[i].size(), T(0));
            state.v[i].assign(params[i].size(), T(0));
        }
    }
    if (state.m.size() != params.size()) throw std::logic_error("adam_step: parameter list changed");
    ++state.step;
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
    const T b1 = T(cfg.beta1), b2 = T(cfg.beta2);
    const T step_size = T(cfg.lr / bc1);
    const T inv_sqrt_bc2 = T(1.0 / std::sqrt(bc2));
    const T eps = T(cfg.eps);
    for (std::size_t p = 0; p < params.size(); ++p) {
        Tensor<T>& t = params[p];
        if (!t.has_grad()) {
            // Keep the moments decaying exactly as a zero gradient would.
            for (std::size_t i = 0; i < t.size(); ++i) {
                state.m[p][i] *= b1;
                state.v[p][i] *= b2;
            }
        }
        auto g = t.grad();
        auto w = t.mutable_data();
        auto& m = state.m[p];
        auto& v = state.v[p];
        for (std::size_t i = 0; i < w.size(); ++i) {
            if (t.has_grad()) {
                T gi = g[i];
                m[i] = b1 * m[i] + (T(1) - b1) * gi;
                v[i] = b2 * v[i] + (T(1) - b2) * gi * gi;
            }
            w[i] -= step_size * m[i] / (std::sqrt(v[i]) * inv_sqrt_bc2 + eps);
        }
    }
}

/// Parameter list plus its optimizer state.
template <typename T>
class Adam {
public:
    Adam() = default;
    Adam(std::vector<Tensor<T>> params, AdamConfig cfg) : params_(std::move(params)), cfg_(cfg) {}

    void zero_grad() {
        for (auto& p : params_) p.zero_grad();
    }
    void step() { adam_step(params_, state_, cfg_); }

    AdamConfig& config() { return cfg_; }
    AdamState<T>& state() { return state_; }
    const AdamState<T>& state() const { return state_; }
    std::vector<Tensor<T>>& params() { return params_; }

private:
    std::vector<Tensor<T>> params_;
    AdamConfig cfg_;
    AdamState<T> state_;
};

}  // namespace svfit::ad
