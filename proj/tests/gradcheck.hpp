#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "svfit/autodiff/ops.hpp"

namespace gradcheck {

using svfit::ad::Shape;
using svfit::ad::Tensor;
using Fn = std::function<Tensor<double>(const std::vector<Tensor<double>>&)>;

inline Tensor<double> randn(Shape s, std::mt19937_64& rng, double stddev = 1.0, bool grad = true) {
    std::normal_distribution<double> nd(0.0, stddev);
    std::vector<double> v(s.size());
    for (auto& x : v) x = nd(rng);
    return Tensor<double>::from(s, std::move(v), grad);
}

/// Compares reverse-mode gradients of the scalar `f` against central
/// differences for every element of every input (or `max_probes` random ones).
inline void check(const Fn& f, const std::vector<Tensor<double>>& inputs, double h = 1e-6, double tol = 1e-6,
                  int max_probes = 200, std::uint64_t seed = 1) {
    std::vector<Tensor<double>> live;
    for (const auto& t : inputs) live.push_back(t.detach(true));
    svfit::ad::backward(f(live));

    std::mt19937_64 rng(seed);
    for (std::size_t k = 0; k < inputs.size(); ++k) {
        std::vector<std::size_t> idx(inputs[k].size());
        for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
        if (static_cast<int>(idx.size()) > max_probes) {
            std::shuffle(idx.begin(), idx.end(), rng);
            idx.resize(max_probes);
        }
        for (std::size_t i : idx) {
            auto eval = [&](double delta) {
                std::vector<Tensor<double>> in;
                for (std::size_t j = 0; j < inputs.size(); ++j) {
                    auto t = inputs[j].detach(false);
                    if (j == k) t.mutable_data()[i] += delta;
                    in.push_back(t);
                }
                return f(in).item();
            };
            double fd = (eval(h) - eval(-h)) / (2 * h);
            double an = live[k].has_grad() ? live[k].grad()[i] : 0.0;
            EXPECT_NEAR(an, fd, tol * (1 + std::abs(fd))) << "input " << k << " element " << i;
        }
    }
}

/// Directional-derivative probes: for `probes` random unit directions v over
/// input `k`, compares <grad, v> with a central difference along v and returns
/// the worst relative error.
inline double directional(const Fn& f, const std::vector<Tensor<double>>& inputs, std::size_t k, int probes,
                          double h = 1e-5, std::uint64_t seed = 3) {
    std::vector<Tensor<double>> live;
    for (const auto& t : inputs) live.push_back(t.detach(false));
    for (std::size_t j = 0; j < live.size(); ++j) live[j].set_requires_grad(j == k);
    svfit::ad::backward(f(live));
    std::vector<double> g(inputs[k].size(), 0.0);
    if (live[k].has_grad()) g.assign(live[k].grad().begin(), live[k].grad().end());

    std::mt19937_64 rng(seed);
    std::normal_distribution<double> nd(0.0, 1.0);
    double worst = 0;
    for (int p = 0; p < probes; ++p) {
        std::vector<double> v(g.size());
        double norm = 0;
        for (auto& x : v) {
            x = nd(rng);
            norm += x * x;
        }
        norm = std::sqrt(norm);
        double an = 0;
        for (std::size_t i = 0; i < v.size(); ++i) {
            v[i] /= norm;
            an += g[i] * v[i];
        }
        auto eval = [&](double delta) {
            std::vector<Tensor<double>> in;
            for (std::size_t j = 0; j < inputs.size(); ++j) {
                auto t = inputs[j].detach(false);
                if (j == k)
                    for (std::size_t i = 0; i < v.size(); ++i) t.mutable_data()[i] += delta * v[i];
                in.push_back(t);
            }
            return f(in).item();
        };
        double fd = (eval(h) - eval(-h)) / (2 * h);
        double rel = std::abs(an - fd) / std::max(std::abs(fd), 1e-12);
        EXPECT_LE(rel, 1e-3) << "input " << k << " probe " << p << ": analytic " << an << " fd " << fd;
        worst = std::max(worst, rel);
    }
    return worst;
}

/// Random-weighted sum to turn a tensor into a scalar with a generic adjoint.
inline Tensor<double> probe(const Tensor<double>& y, std::uint64_t seed = 99) {
    std::mt19937_64 rng(seed);
    return svfit::ad::sum(svfit::ad::mul(y, randn(y.shape(), rng, 1.0, false)));
}

}  // namespace gradcheck
