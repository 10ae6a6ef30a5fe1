#pragma once

// Procedural SVBRDF families used as GAN training data, plus augmentation.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "svfit/material.hpp"

namespace svfit {

enum class Family { tiles = 0, stripes = 1, blobs = 2, speckle = 3 };

inline const char* family_name(Family f) {
    switch (f) {
        case Family::tiles: return "tiles";
        case Family::stripes: return "stripes";
        case Family::blobs: return "blobs";
        case Family::speckle: return "speckle";
    }
    return "?";
}

struct AugmentConfig {
    double min_crop = 0.5;     // smallest crop side as a fraction of the input
    bool rotate = true;        // 90 degree rotations and flips
    double blend_prob = 0.25;  // chance of blending with a second sample
};

struct ProceduralDatasetConfig {
    int count = 1000;
    int resolution = 64;
    std::uint64_t seed = 1;
    std::array<double, 4> mix{0.25, 0.25, 0.25, 0.25};  // tiles, stripes, blobs, speckle
    AugmentConfig augment;

    void validate() const {
        if (count < 0) throw std::invalid_argument("ProceduralDatasetConfig: count must be >= 0");
        if (resolution < 4 || (resolution & (resolution - 1)) != 0)
            throw std::invalid_argument("ProceduralDatasetConfig: resolution must be a power of two >= 4");
        double s = 0;
        for (double w : mix) {
            if (!(w >= 0)) throw std::invalid_argument("ProceduralDatasetConfig: mix weights must be non-negative");
            s += w;
        }
        if (std::abs(s - 1.0) > 1e-6) throw std::invalid_argument("ProceduralDatasetConfig: mix weights must sum to 1");
        if (!(augment.min_crop > 0 && augment.min_crop <= 1))
            throw std::invalid_argument("ProceduralDatasetConfig: min_crop must be in (0,1]");
    }
};

namespace detail {

using Rng = std::mt19937_64;

inline double uni(Rng& rng, double a = 0.0, double b = 1.0) { return std::uniform_real_distribution<double>(a, b)(rng); }

inline float clamp01(double v) { return static_cast<float>(std::clamp(v, 0.0, 1.0)); }

/// Smooth value noise in [0,1]: random lattice of `cells` per side,
/// bicubic-smoothstep interpolated, wrapping.
inline std::vector<double> value_noise(int res, int cells, Rng& rng) {
    std::vector<double> lattice(static_cast<std::size_t>(cells) * cells);
    for (auto& v : lattice) v = uni(rng);
    std::vector<double> out(static_cast<std::size_t>(res) * res);
    auto sm = [](double t) { return t * t * (3 - 2 * t); };
    for (int y = 0; y < res; ++y)
        for (int x = 0; x < res; ++x) {
            double fx = (x + 0.5) * cells / res, fy = (y + 0.5) * cells / res;
            int x0 = static_cast<int>(std::floor(fx)), y0 = static_cast<int>(std::floor(fy));
            double tx = sm(fx - x0), ty = sm(fy - y0);
            auto L = [&](int i, int j) { return lattice[((j % cells + cells) % cells) * cells + (i % cells + cells) % cells]; };
            double a = L(x0, y0) * (1 - tx) + L(x0 + 1, y0) * tx;
            double b = L(x0, y0 + 1) * (1 - tx) + L(x0 + 1, y0 + 1) * tx;
            out[y * res + x] = a * (1 - ty) + b * ty;
        }
    return out;
}

inline std::vector<double> fractal_noise(int res, int base_cells, int octaves, Rng& rng) {
    std::vector<double> acc(static_cast<std::size_t>(res) * res, 0.0);
    double amp = 1, total = 0;
    for (int o = 0, cells = base_cells; o < octaves; ++o, cells *= 2, amp *= 0.5) {
        auto n = value_noise(res, std::min(cells, res), rng);
        for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += amp * n[i];
        total += amp;
    }
    for (auto& v : acc) v /= total;
    return acc;
}

/// Writes normals from a height field (pixel units); rows run downwards, the
/// surface y axis upwards.
inline void normals_from_height(SvbrdfMaps<float>& m, const std::vector<double>& h, double strength) {
    const int res = m.width();
    auto H = [&](int x, int y) { return h[std::clamp(y, 0, res - 1) * res + std::clamp(x, 0, res - 1)]; };
    for (int y = 0; y < res; ++y)
        for (int x = 0; x < res; ++x) {
            double dx = 0.5 * (H(x + 1, y) - H(x - 1, y)) * strength;
            double dy = -0.5 * (H(x, y + 1) - H(x, y - 1)) * strength;
            double l = std::sqrt(dx * dx + dy * dy + 1);
            m.at(3, y, x) = static_cast<float>(-dx / l);
            m.at(4, y, x) = static_cast<float>(-dy / l);
        }
}

inline Vec3d random_color(Rng& rng, double lo, double hi, double sat) {
    double g = uni(rng, lo, hi);
    return {std::clamp(g * (1 + uni(rng, -sat, sat)), 0.0, 1.0), std::clamp(g * (1 + uni(rng, -sat, sat)), 0.0, 1.0),
            std::clamp(g * (1 + uni(rng, -sat, sat)), 0.0, 1.0)};
}

inline void set_pixel(SvbrdfMaps<float>& m, int y, int x, const Vec3d& a, double r, const Vec3d& s) {
    for (int c = 0; c < 3; ++c) {
        m.at(c, y, x) = clamp01(a[c]);
        m.at(6 + c, y, x) = clamp01(s[c]);
    }
    m.at(5, y, x) = static_cast<float>(std::clamp(r, kRoughnessMin, 1.0));
}

inline SvbrdfMaps<float> make_tiles(int res, Rng& rng) {
    SvbrdfMaps<float> m(res, res);
    int n = static_cast<int>(uni(rng, 2, 7));
    double grout = uni(rng, 0.04, 0.1);
    Vec3d base = random_color(rng, 0.3, 0.85, 0.4);
    Vec3d gcol = random_color(rng, 0.1, 0.3, 0.1);
    double spec = uni(rng, 0.03, 0.25), rough = uni(rng, 0.25, 0.45);
    std::vector<Vec3d> tcol(n * n);
    std::vector<double> trough(n * n);
    for (int i = 0; i < n * n; ++i) {
        double j = uni(rng, 0.85, 1.15);
        tcol[i] = base * j;
        trough[i] = rough + uni(rng, -0.05, 0.05);
    }
    auto noise = value_noise(res, 8, rng);
    std::vector<double> h(static_cast<std::size_t>(res) * res);
    for (int y = 0; y < res; ++y)
        for (int x = 0; x < res; ++x) {
            double u = (x + 0.5) / res * n, v = (y + 0.5) / res * n;
            int tx = std::min(static_cast<int>(u), n - 1), ty = std::min(static_cast<int>(v), n - 1);
            double fu = u - tx, fv = v - ty;
            double edge = std::min({fu, 1 - fu, fv, 1 - fv});
            bool in_grout = edge < grout;
            double bevel = std::clamp((edge - grout) / 0.08, 0.0, 1.0);
            h[y * res + x] = in_grout ? 0.0 : std::sqrt(bevel);
            double nz = 0.9 + 0.2 * noise[y * res + x];
            if (in_grout)
                set_pixel(m, y, x, gcol * nz, std::min(1.0, rough + 0.35), {0.02, 0.02, 0.02});
            else
                set_pixel(m, y, x, tcol[ty * n + tx] * nz, trough[ty * n + tx], {spec, spec, spec});
        }
    normals_from_height(m, h, 1.5);
    return m;
}

inline SvbrdfMaps<float> make_stripes(int res, Rng& rng) {
    SvbrdfMaps<float> m(res, res);
    double theta = uni(rng, 0, kPi);
    double freq = uni(rng, 3, 10);
    Vec3d c0 = random_color(rng, 0.2, 0.8, 0.5), c1 = random_color(rng, 0.1, 0.7, 0.5);
    double r0 = uni(rng, 0.45, 0.6), r1 = uni(rng, 0.5, 0.65);
    double spec = uni(rng, 0.03, 0.2);
    double sharp = uni(rng, 1, 6);
    auto noise = value_noise(res, 16, rng);
    std::vector<double> h(static_cast<std::size_t>(res) * res);
    double ct = std::cos(theta), st = std::sin(theta);
    for (int y = 0; y < res; ++y)
        for (int x = 0; x < res; ++x) {
            double u = ((x + 0.5) / res) * ct + ((y + 0.5) / res) * st;
            double s = std::sin(2 * kPi * freq * u + 0.6 * noise[y * res + x]);
            double t = 0.5 + 0.5 * std::tanh(sharp * s);
            h[y * res + x] = t;
            set_pixel(m, y, x, c0 * (1 - t) + c1 * t, r0 * (1 - t) + r1 * t, {spec, spec, spec});
        }
    normals_from_height(m, h, 2.0);
    return m;
}

inline SvbrdfMaps<float> make_blobs(int res, Rng& rng) {
    SvbrdfMaps<float> m(res, res);
    auto f = fractal_noise(res, static_cast<int>(uni(rng, 2, 5)), 4, rng);
    auto g = fractal_noise(res, 4, 3, rng);
    Vec3d c0 = random_color(rng, 0.1, 0.6, 0.6), c1 = random_color(rng, 0.3, 0.9, 0.6);
    double rough = uni(rng, 0.65, 0.85), spec = uni(rng, 0.02, 0.1);
    double thresh = uni(rng, 0.4, 0.6), soft = uni(rng, 0.03, 0.15);
    for (int y = 0; y < res; ++y)
        for (int x = 0; x < res; ++x) {
            double v = f[y * res + x];
            double t = 0.5 + 0.5 * std::tanh((v - thresh) / soft);
            double r = rough + 0.2 * (g[y * res + x] - 0.5);
            set_pixel(m, y, x, c0 * (1 - t) + c1 * t, r, {spec, spec, spec});
        }
    normals_from_height(m, f, uni(rng, 4, 12));
    return m;
}

inline SvbrdfMaps<float> make_speckle(int res, Rng& rng) {
    SvbrdfMaps<float> m(res, res);
    Vec3d base = random_color(rng, 0.05, 0.35, 0.3);
    double rough = uni(rng, 0.12, 0.28), spec = uni(rng, 0.03, 0.08);
    double dot_spec = uni(rng, 0.6, 1.0);
    auto g = value_noise(res, 8, rng);
    std::vector<double> h(static_cast<std::size_t>(res) * res, 0.0);
    std::vector<double> mask(h.size(), 0.0);
    int dots = static_cast<int>(uni(rng, 0.01, 0.04) * res * res);
    double radius = uni(rng, 0.6, 1.8);
    for (int k = 0; k < dots; ++k) {
        double cx = uni(rng, 0, res), cy = uni(rng, 0, res);
        for (int y = std::max(0, static_cast<int>(cy - 3 * radius)); y < std::min(res, static_cast<int>(cy + 3 * radius) + 1); ++y)
            for (int x = std::max(0, static_cast<int>(cx - 3 * radius)); x < std::min(res, static_cast<int>(cx + 3 * radius) + 1); ++x) {
                double d2 = ((x + 0.5 - cx) * (x + 0.5 - cx) + (y + 0.5 - cy) * (y + 0.5 - cy)) / (radius * radius);
                double w = std::exp(-d2);
                mask[y * res + x] = std::max(mask[y * res + x], w);
                h[y * res + x] += w;
            }
    }
    for (int y = 0; y < res; ++y)
        for (int x = 0; x < res; ++x) {
            double t = mask[y * res + x];
            double s = spec * (1 - t) + dot_spec * t;
            set_pixel(m, y, x, base * (0.9 + 0.2 * g[y * res + x]), rough * (1 - 0.5 * t), {s, s, s});
        }
    normals_from_height(m, h, 0.8);
    return m;
}

/// Bilinear sample of every channel at continuous pixel coordinates.
inline void sample_bilinear(const SvbrdfMaps<float>& m, double fx, double fy, float* out) {
    fx = std::clamp(fx - 0.5, 0.0, m.width() - 1.0);
    fy = std::clamp(fy - 0.5, 0.0, m.height() - 1.0);
    int x0 = static_cast<int>(fx), y0 = static_cast<int>(fy);
    int x1 = std::min(x0 + 1, m.width() - 1), y1 = std::min(y0 + 1, m.height() - 1);
    double tx = fx - x0, ty = fy - y0;
    for (int c = 0; c < 9; ++c)
        out[c] = static_cast<float>((m.at(c, y0, x0) * (1 - tx) + m.at(c, y0, x1) * tx) * (1 - ty) +
                                    (m.at(c, y1, x0) * (1 - tx) + m.at(c, y1, x1) * tx) * ty);
}

/// Re-encodes a (not necessarily unit) normal into the stored xy form.
inline void encode_normal(Vec3d n, float& x, float& y) {
    if (n.z < 1e-6) n.z = 1e-6;
    n = normalize(n);
    double xx = n.x, yy = n.y;
    project_to_disk(xx, yy);
    x = static_cast<float>(xx);
    y = static_cast<float>(yy);
}

}  // namespace detail

inline SvbrdfMaps<float> generate_family(Family f, int resolution, std::mt19937_64& rng) {
    switch (f) {
        case Family::tiles: return detail::make_tiles(resolution, rng);
        case Family::stripes: return detail::make_stripes(resolution, rng);
        case Family::blobs: return detail::make_blobs(resolution, rng);
        case Family::speckle: return detail::make_speckle(resolution, rng);
    }
    throw std::invalid_argument("generate_family: unknown family");
}

/// Explicit augmentation parameters; see `augment` for the random draw.
struct AugmentParams {
    double crop = 1.0;           // crop side as a fraction of the input
    double crop_x = 0, crop_y = 0;  // top-left corner, fraction of the input
    int rotation = 0;            // number of 90 degree turns
    bool flip = false;           // mirror columns before rotating
    double blend = 1.0;          // weight of the first parent when blending
};

/// Crop (resampled back to the input size), rotate/flip, then optionally
/// blend convexly with `other`. Normals follow the rotation and are blended as
/// decoded vectors.
inline SvbrdfMaps<float> apply_augment(const SvbrdfMaps<float>& maps, const AugmentParams& p,
                                       const SvbrdfMaps<float>* other = nullptr) {
    const int w = maps.width(), h = maps.height();
    SvbrdfMaps<float> out(w, h);
    float px[9];
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            // Output pixel -> pre-rotation coordinates.
            double u = (x + 0.5) / w, v = (y + 0.5) / h;
            for (int r = 0; r < (p.rotation % 4 + 4) % 4; ++r) {
                double t = u;
                u = v;
                v = 1 - t;
            }
            if (p.flip) u = 1 - u;
            detail::sample_bilinear(maps, (p.crop_x + u * p.crop) * w, (p.crop_y + v * p.crop) * h, px);
            // Normals transform with the inverse of the lookup map above.
            double nx = px[3], ny = px[4];
            if (p.flip) nx = -nx;
            for (int r = 0; r < (p.rotation % 4 + 4) % 4; ++r) {
                double t = nx;
                nx = ny;
                ny = -t;
            }
            auto n = decode_normal(nx, ny);
            for (int c = 0; c < 9; ++c) out.at(c, y, x) = px[c];
            detail::encode_normal(n, out.at(3, y, x), out.at(4, y, x));
        }
    if (other && p.blend < 1.0) {
        if (other->width() != w || other->height() != h)
            throw std::invalid_argument("apply_augment: blend partner has a different size");
        const float a = static_cast<float>(p.blend), b = 1.0f - a;
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                for (int c : {0, 1, 2, 5, 6, 7, 8}) out.at(c, y, x) = a * out.at(c, y, x) + b * other->at(c, y, x);
                auto n0 = decode_normal<double>(out.at(3, y, x), out.at(4, y, x));
                auto n1 = decode_normal<double>(other->at(3, y, x), other->at(4, y, x));
                detail::encode_normal(n0 * a + n1 * b, out.at(3, y, x), out.at(4, y, x));
            }
    }
    // Bilinear weights can round a hair outside the constraint set.
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            for (int c : {0, 1, 2, 6, 7, 8}) out.at(c, y, x) = std::clamp(out.at(c, y, x), 0.0f, 1.0f);
            out.at(5, y, x) = std::clamp(out.at(5, y, x), static_cast<float>(kRoughnessMin), 1.0f);
        }
    return out;
}

inline AugmentParams draw_augment(const AugmentConfig& cfg, std::mt19937_64& rng, bool allow_blend) {
    AugmentParams p;
    p.crop = detail::uni(rng, cfg.min_crop, 1.0);
    p.crop_x = detail::uni(rng, 0, 1 - p.crop);
    p.crop_y = detail::uni(rng, 0, 1 - p.crop);
    if (cfg.rotate) {
        p.rotation = static_cast<int>(rng() % 4);
        p.flip = rng() % 2 == 1;
    }
    if (allow_blend && detail::uni(rng) < cfg.blend_prob) p.blend = detail::uni(rng, 0.3, 0.7);
    return p;
}

inline SvbrdfMaps<float> augment(const SvbrdfMaps<float>& maps, std::uint64_t seed,
                                 const SvbrdfMaps<float>* other = nullptr, const AugmentConfig& cfg = {}) {
    std::mt19937_64 rng(seed);
    return apply_augment(maps, draw_augment(cfg, rng, other != nullptr), other);
}

struct ProceduralSample {
    Family family;
    SvbrdfMaps<float> maps;
};

inline std::uint64_t sample_seed(std::uint64_t seed, std::uint64_t index) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32)};
    std::uint32_t parts[2];
    seq.generate(parts, parts + 2);
    return (static_cast<std::uint64_t>(parts[0]) << 32) | parts[1];
}

/// Deterministic given cfg.seed; sample i depends only on (seed, i).
inline std::vector<ProceduralSample> generate_procedural_dataset(const ProceduralDatasetConfig& cfg) {
    cfg.validate();
    std::vector<ProceduralSample> out;
    out.reserve(cfg.count);
    std::discrete_distribution<int> pick(cfg.mix.begin(), cfg.mix.end());
    for (int i = 0; i < cfg.count; ++i) {
        std::mt19937_64 rng(sample_seed(cfg.seed, i));
        auto fam = static_cast<Family>(pick(rng));
        out.push_back({fam, generate_family(fam, cfg.resolution, rng)});
    }
    return out;
}

}  // namespace svfit
