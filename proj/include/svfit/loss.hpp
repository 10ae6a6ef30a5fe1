#pragma once

// Image-space fitting loss: per-pixel L2 plus a weighted feature-space L2 over
// four taps of a fixed convolutional stack.
//
// Tap layout of FeatureExtractor (input [N,3,H,W], H and W divisible by 8):
//   tap 0  conv 3->8,  relu            stride 1
//   tap 1  conv 8->8,  relu            stride 1
//   tap 2  pool, conv 8->16, relu, pool, conv 16->16, relu   stride 4
//   tap 3  pool, conv 16->32, relu     stride 8
// All convolutions are 3x3 with zero padding.

#include <array>
#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "svfit/autodiff/archive.hpp"
#include "svfit/autodiff/conv.hpp"
#include "svfit/autodiff/ops.hpp"

namespace svfit {

enum class CompareSpace { linear, gamma };

inline const char* compare_space_name(CompareSpace s) { return s == CompareSpace::linear ? "linear" : "gamma"; }

inline CompareSpace parse_compare_space(const std::string& s) {
    if (s == "linear") return CompareSpace::linear;
    if (s == "gamma") return CompareSpace::gamma;
    throw std::invalid_argument("unknown comparison space '" + s + "'");
}

using LayerWeights = std::array<double, 4>;

struct LossConfig {
    double lambda_pixel = 1.0;
    double lambda_percept = 0.1;
    LayerWeights latent_weights{1.0 / 512, 1.0 / 512, 1.0 / 128, 1.0 / 64};  // w+ phase, also canonical
    LayerWeights noise_weights{1.0 / 64, 1.0 / 64, 1.0 / 256, 1.0 / 512};   // noise phase
    CompareSpace space = CompareSpace::gamma;

    void validate() const {
        if (!(lambda_pixel >= 0) || !(lambda_percept >= 0))
            throw std::invalid_argument("LossConfig: loss weights must be non-negative");
        for (const auto* ws : {&latent_weights, &noise_weights})
            for (double w : *ws)
                if (!(w >= 0) || !std::isfinite(w))
                    throw std::invalid_argument("LossConfig: layer weights must be finite and non-negative");
    }
};

/// Maps linear radiance into the comparison space. Gamma space clamps to
/// [0,1] first.
template <typename T>
ad::Tensor<T> to_compare_space(const ad::Tensor<T>& img, CompareSpace space) {
    if (space == CompareSpace::linear) return img;
    return ad::pow(ad::add_scalar(ad::clamp(img, T(0), T(1)), T(1e-4)), T(1.0 / 2.2));
}

template <typename T>
class FeatureExtractor {
public:
    static constexpr int kTaps = 4;
    static constexpr std::array<int, kTaps> kStrides{1, 1, 4, 8};

    FeatureExtractor() = default;

    /// Random filters, He-scaled, from a fixed seed.
    static FeatureExtractor random(std::uint64_t seed = 2024) {
        FeatureExtractor f;
        std::mt19937_64 rng(seed);
        for (int i = 0; i < kConvs; ++i) {
            const auto [in, out] = kLayout[i];
            std::normal_distribution<double> nd(0.0, std::sqrt(2.0 / (9.0 * in)));
            std::vector<T> w(static_cast<std::size_t>(out) * in * 9);
            for (auto& v : w) v = T(nd(rng));
            f.weight_[i] = ad::Tensor<T>::from({out, in, 3, 3}, std::move(w));
            f.bias_[i] = ad::Tensor<T>::zeros({1, out, 1, 1});
        }
        return f;
    }

    /// External filters stored as "features.conv<i>.weight" / ".bias".
    static FeatureExtractor load(const ad::Archive& a) {
        FeatureExtractor f;
        for (int i = 0; i < kConvs; ++i) {
            const auto [in, out] = kLayout[i];
            const std::string p = "features.conv" + std::to_string(i);
            f.weight_[i] = a.tensor<T>(p + ".weight");
            f.bias_[i] = a.contains(p + ".bias") ? a.tensor<T>(p + ".bias") : ad::Tensor<T>::zeros({1, out, 1, 1});
            if (f.weight_[i].shape() != ad::Shape{out, in, 3, 3} || f.bias_[i].shape() != ad::Shape{1, out, 1, 1})
                throw ad::ShapeError("FeatureExtractor: " + p + " has shape " + f.weight_[i].shape().str());
        }
        return f;
    }

    void save(ad::Archive& a) const {
        for (int i = 0; i < kConvs; ++i) {
            a.put("features.conv" + std::to_string(i) + ".weight", weight_[i]);
            a.put("features.conv" + std::to_string(i) + ".bias", bias_[i]);
        }
    }

    bool ready() const { return weight_[0].defined(); }

    std::array<ad::Tensor<T>, kTaps> extract(const ad::Tensor<T>& img) const {
        if (!ready()) throw std::logic_error("FeatureExtractor: not initialized");
        const ad::Shape s = img.shape();
        if (s.c != 3 || s.h % 8 != 0 || s.w % 8 != 0)
            throw ad::ShapeError("FeatureExtractor: expected [N,3,H,W] with H,W divisible by 8, got " + s.str());
        auto conv = [this](const ad::Tensor<T>& x, int i) {
            return ad::leaky_relu(ad::conv2d(x, weight_[i], bias_[i]), T(0));
        };
        std::array<ad::Tensor<T>, kTaps> taps;
        taps[0] = conv(img, 0);
        taps[1] = conv(taps[0], 1);
        taps[2] = conv(ad::avg_pool2x(conv(ad::avg_pool2x(taps[1]), 2)), 3);
        taps[3] = conv(ad::avg_pool2x(taps[2]), 4);
        return taps;
    }

private:
    static constexpr int kConvs = 5;
    static constexpr std::array<std::pair<int, int>, kConvs> kLayout{{{3, 8}, {8, 8}, {8, 16}, {16, 16}, {16, 32}}};

    std::array<ad::Tensor<T>, kConvs> weight_;
    std::array<ad::Tensor<T>, kConvs> bias_;
};

/// Mean squared difference over all pixels and channels, in `space`.
template <typename T>
ad::Tensor<T> pixel_loss(const ad::Tensor<T>& a, const ad::Tensor<T>& b, CompareSpace space = CompareSpace::linear) {
    if (a.shape() != b.shape())
        throw ad::ShapeError("pixel_loss: " + a.shape().str() + " vs " + b.shape().str());
    auto d = ad::squared_distance(to_compare_space(a, space), to_compare_space(b, space));
    return ad::scale(d, T(1) / static_cast<T>(a.size()));
}

/// Per-tap squared feature distances ||F_j(a) - F_j(b)||^2.
template <typename T>
std::array<ad::Tensor<T>, 4> feature_distances(const std::array<ad::Tensor<T>, 4>& fa,
                                               const std::array<ad::Tensor<T>, 4>& fb) {
    std::array<ad::Tensor<T>, 4> d;
    for (int j = 0; j < 4; ++j) d[j] = ad::squared_distance(fa[j], fb[j]);
    return d;
}

template <typename T>
ad::Tensor<T> weighted_sum(const std::array<ad::Tensor<T>, 4>& d, const LayerWeights& w) {
    ad::Tensor<T> acc = ad::scale(d[0], T(w[0]));
    for (int j = 1; j < 4; ++j) acc = ad::add(acc, ad::scale(d[j], T(w[j])));
    return acc;
}

/// sum_j w_j ||F_j(a) - F_j(b)||^2 with both images already in comparison space.
template <typename T>
ad::Tensor<T> perceptual_loss(const FeatureExtractor<T>& fx, const ad::Tensor<T>& a, const ad::Tensor<T>& b,
                              const LayerWeights& w) {
    if (a.shape() != b.shape())
        throw ad::ShapeError("perceptual_loss: " + a.shape().str() + " vs " + b.shape().str());
    return weighted_sum(feature_distances(fx.extract(a), fx.extract(b)), w);
}

/// Loss of one rendering against one target, split into its parts so that
/// several layer weightings can be evaluated from one feature pass.
template <typename T>
struct LossTerms {
    ad::Tensor<T> pixel;                       // mean squared, comparison space
    std::array<ad::Tensor<T>, 4> percept;      // per-tap squared distances

    ad::Tensor<T> total(const LossConfig& cfg, const LayerWeights& w) const {
        return ad::add(ad::scale(pixel, T(cfg.lambda_pixel)),
                       ad::scale(weighted_sum(percept, w), T(cfg.lambda_percept)));
    }

    double percept_value(const LayerWeights& w) const {
        double s = 0;
        for (int j = 0; j < 4; ++j) s += w[j] * static_cast<double>(percept[j].item());
        return s;
    }

    double total_value(const LossConfig& cfg, const LayerWeights& w) const {
        return cfg.lambda_pixel * static_cast<double>(pixel.item()) + cfg.lambda_percept * percept_value(w);
    }

    LossTerms& operator+=(const LossTerms& o) {
        pixel = ad::add(pixel, o.pixel);
        for (int j = 0; j < 4; ++j) percept[j] = ad::add(percept[j], o.percept[j]);
        return *this;
    }
};

/// A target image in comparison space with its cached features.
template <typename T>
struct LossTarget {
    ad::Tensor<T> image;
    std::array<ad::Tensor<T>, 4> features;

    static LossTarget make(const ad::Tensor<T>& linear, const FeatureExtractor<T>& fx, CompareSpace space) {
        LossTarget t;
        t.image = to_compare_space(linear.detach(), space);
        t.features = fx.extract(t.image);
        return t;
    }
};

template <typename T>
LossTerms<T> loss_terms(const ad::Tensor<T>& rendered, const LossTarget<T>& target, const FeatureExtractor<T>& fx,
                        CompareSpace space) {
    if (rendered.shape() != target.image.shape())
        throw ad::ShapeError("loss: rendering " + rendered.shape().str() + " vs target " +
                             target.image.shape().str());
    ad::Tensor<T> r = to_compare_space(rendered, space);
    LossTerms<T> t;
    t.pixel = ad::scale(ad::squared_distance(r, target.image), T(1) / static_cast<T>(r.size()));
    t.percept = feature_distances(fx.extract(r), target.features);
    return t;
}

}  // namespace svfit
