#pragma once

// Style-based generator producing 9-channel material maps.
//
// z --(normalize, MLP)--> w --(replicate)--> w+ (one column per style slot).
// Synthesis starts from a learned constant at base resolution; every block
// runs two {modulated conv, noise, bias, leaky relu} layers, with nearest 2x
// upsampling between blocks, then a 1x1 projection and the bounded range
// mapping. Each conv layer consumes one style slot and one noise map.

#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "svfit/autodiff/archive.hpp"
#include "svfit/autodiff/conv.hpp"
#include "svfit/autodiff/ops.hpp"
#include "svfit/maps_tensor.hpp"
#include "svfit/material.hpp"

namespace svfit {

struct GeneratorConfig {
    int latent_dim = 128;
    int base_resolution = 4;
    int num_blocks = 5;
    int mapping_depth = 4;
    double mapping_lr_mul = 0.01;
    std::vector<int> channels{64, 64, 32, 16, 16};  // per block

    int style_slots() const { return 2 * num_blocks; }
    int resolution() const { return base_resolution << (num_blocks - 1); }
    int layer_resolution(int slot) const { return base_resolution << (slot / 2); }

    /// 64x64 output, the default trained prior.
    static GeneratorConfig desk() { return {}; }

    /// 256x256 output with 512-dim latents and 14 style slots.
    static GeneratorConfig paper() {
        GeneratorConfig c;
        c.latent_dim = 512;
        c.num_blocks = 7;
        c.mapping_depth = 8;
        c.channels = {512, 512, 512, 512, 256, 128, 64};
        return c;
    }

    /// Two blocks (8x8), used by tests.
    static GeneratorConfig tiny() {
        GeneratorConfig c;
        c.latent_dim = 16;
        c.num_blocks = 2;
        c.mapping_depth = 2;
        c.channels = {12, 8};
        return c;
    }

    void validate() const {
        if (latent_dim < 1 || num_blocks < 1 || mapping_depth < 1 || base_resolution < 1)
            throw std::invalid_argument("GeneratorConfig: sizes must be positive");
        if (static_cast<int>(channels.size()) != num_blocks)
            throw std::invalid_argument("GeneratorConfig: need one channel count per block");
    }

    std::string to_text() const {
        std::ostringstream os;
        os << "latent_dim=" << latent_dim << "\nbase_resolution=" << base_resolution
           << "\nnum_blocks=" << num_blocks << "\nmapping_depth=" << mapping_depth
           << "\nmapping_lr_mul=" << mapping_lr_mul << "\nchannels=";
        for (std::size_t i = 0; i < channels.size(); ++i) os << (i ? "," : "") << channels[i];
        os << "\n";
        return os.str();
    }

    static GeneratorConfig from_text(const std::string& text) {
        std::map<std::string, std::string> kv;
        std::istringstream is(text);
        std::string line;
        while (std::getline(is, line)) {
            if (line.empty() || line[0] == '#') continue;
            auto eq = line.find('=');
            if (eq == std::string::npos) throw std::runtime_error("GeneratorConfig: malformed line '" + line + "'");
            kv[line.substr(0, eq)] = line.substr(eq + 1);
        }
        auto need = [&](const char* k) -> const std::string& {
            auto it = kv.find(k);
            if (it == kv.end()) throw std::runtime_error(std::string("GeneratorConfig: missing key ") + k);
            return it->second;
        };
        GeneratorConfig c;
        c.latent_dim = std::stoi(need("latent_dim"));
        c.base_resolution = std::stoi(need("base_resolution"));
        c.num_blocks = std::stoi(need("num_blocks"));
        c.mapping_depth = std::stoi(need("mapping_depth"));
        c.mapping_lr_mul = std::stod(need("mapping_lr_mul"));
        c.channels.clear();
        std::istringstream cs(need("channels"));
        std::string tok;
        while (std::getline(cs, tok, ',')) c.channels.push_back(std::stoi(tok));
        c.validate();
        return c;
    }
};

template <typename T>
struct StyleLayer {
    ad::Tensor<T> weight;      // [O, I, 3, 3]
    ad::Tensor<T> affine_w;    // [I, D, 1, 1]
    ad::Tensor<T> affine_b;    // [1, I, 1, 1]
    ad::Tensor<T> bias;        // [1, O, 1, 1]
    ad::Tensor<T> noise_gain;  // [1, 1, 1, 1]
};

template <typename T>
struct GeneratorWeights {
    GeneratorConfig config;
    std::vector<ad::Tensor<T>> mapping_w, mapping_b;
    ad::Tensor<T> constant;  // [1, C0, base, base]
    std::vector<StyleLayer<T>> layers;
    ad::Tensor<T> out_w, out_b;

    static GeneratorWeights init(const GeneratorConfig& cfg, std::uint64_t seed) {
        cfg.validate();
        std::mt19937_64 rng(seed);
        std::normal_distribution<double> nd(0.0, 1.0);
        auto randn = [&](ad::Shape s, double stddev) {
            std::vector<T> v(s.size());
            for (auto& x : v) x = T(nd(rng) * stddev);
            return ad::Tensor<T>::from(s, std::move(v), true);
        };
        GeneratorWeights g;
        g.config = cfg;
        const int d = cfg.latent_dim;
        for (int i = 0; i < cfg.mapping_depth; ++i) {
            g.mapping_w.push_back(randn({d, d, 1, 1}, 1.0 / cfg.mapping_lr_mul));
            g.mapping_b.push_back(ad::Tensor<T>::zeros({1, d, 1, 1}, true));
        }
        const int r0 = cfg.base_resolution;
        g.constant = randn({1, cfg.channels[0], r0, r0}, 1.0);
        for (int slot = 0; slot < cfg.style_slots(); ++slot) {
            int block = slot / 2;
            int out_c = cfg.channels[block];
            int in_c = (slot == 0) ? cfg.channels[0] : (slot % 2 == 0 ? cfg.channels[block - 1] : out_c);
            StyleLayer<T> l;
            l.weight = randn({out_c, in_c, 3, 3}, 1.0);
            l.affine_w = randn({in_c, d, 1, 1}, 1.0);
            l.affine_b = ad::Tensor<T>::full({1, in_c, 1, 1}, T(1), true);
            l.bias = ad::Tensor<T>::zeros({1, out_c, 1, 1}, true);
            l.noise_gain = ad::Tensor<T>::full({1, 1, 1, 1}, T(0.1), true);
            g.layers.push_back(std::move(l));
        }
        g.out_w = randn({9, cfg.channels.back(), 1, 1}, 1.0);
        g.out_b = ad::Tensor<T>::zeros({1, 9, 1, 1}, true);
        return g;
    }

    std::vector<ad::Tensor<T>> parameters() const {
        std::vector<ad::Tensor<T>> p;
        for (std::size_t i = 0; i < mapping_w.size(); ++i) {
            p.push_back(mapping_w[i]);
            p.push_back(mapping_b[i]);
        }
        p.push_back(constant);
        for (const auto& l : layers)
            for (const auto& t : {l.weight, l.affine_w, l.affine_b, l.bias, l.noise_gain}) p.push_back(t);
        p.push_back(out_w);
        p.push_back(out_b);
        return p;
    }

    std::vector<std::string> parameter_names() const {
        std::vector<std::string> n;
        for (std::size_t i = 0; i < mapping_w.size(); ++i) {
            n.push_back("mapping." + std::to_string(i) + ".weight");
            n.push_back("mapping." + std::to_string(i) + ".bias");
        }
        n.push_back("synthesis.constant");
        for (std::size_t i = 0; i < layers.size(); ++i) {
            std::string pre = "synthesis.layer" + std::to_string(i) + ".";
            for (const char* s : {"weight", "affine_weight", "affine_bias", "bias", "noise_gain"}) n.push_back(pre + s);
        }
        n.push_back("synthesis.out.weight");
        n.push_back("synthesis.out.bias");
        return n;
    }

    void set_requires_grad(bool r) const {
        for (auto t : parameters()) t.set_requires_grad(r);
    }

    void save(ad::Archive& a, const std::string& prefix = "") const {
        auto params = parameters();
        auto names = parameter_names();
        for (std::size_t i = 0; i < params.size(); ++i) a.put(prefix + names[i], params[i]);
    }

    void load(const ad::Archive& a, const std::string& prefix = "") {
        auto params = parameters();
        auto names = parameter_names();
        for (std::size_t i = 0; i < params.size(); ++i) a.load_into(prefix + names[i], params[i]);
    }

    /// Writes `<path>` (named tensors) and `<path>.cfg` (config manifest).
    void save_files(const std::string& path) const {
        ad::Archive a;
        save(a);
        a.save(path);
        std::ofstream os(path + ".cfg");
        if (!os) throw std::runtime_error("cannot write " + path + ".cfg");
        os << config.to_text();
    }

    static GeneratorWeights load_files(const std::string& path) {
        std::ifstream is(path + ".cfg");
        if (!is) throw std::runtime_error("missing generator config " + path + ".cfg");
        std::stringstream ss;
        ss << is.rdbuf();
        GeneratorWeights g = init(GeneratorConfig::from_text(ss.str()), 0);
        g.load(ad::Archive::load(path));
        return g;
    }

    template <typename U>
    GeneratorWeights<U> cast() const {
        GeneratorWeights<U> g = GeneratorWeights<U>::init(config, 0);
        auto src = parameters();
        auto dst = g.parameters();
        for (std::size_t i = 0; i < src.size(); ++i)
            std::copy(src[i].data().begin(), src[i].data().end(), dst[i].mutable_data().begin());
        return g;
    }
};

/// Optimization variables of the prior: per-slot styles and per-layer noise.
template <typename T>
struct LatentState {
    ad::Tensor<T> w_plus;               // [slots, D, 1, 1]
    std::vector<ad::Tensor<T>> noise;   // per slot, [1, 1, res, res]

    int slots() const { return w_plus.shape().n; }

    void validate(const GeneratorConfig& cfg) const {
        if (w_plus.shape() != ad::Shape{cfg.style_slots(), cfg.latent_dim, 1, 1})
            throw ad::ShapeError("LatentState: w_plus " + w_plus.shape().str() + " does not match config");
        if (static_cast<int>(noise.size()) != cfg.style_slots())
            throw ad::ShapeError("LatentState: expected " + std::to_string(cfg.style_slots()) + " noise maps");
        for (int i = 0; i < cfg.style_slots(); ++i) {
            int r = cfg.layer_resolution(i);
            if (noise[i].shape() != ad::Shape{1, 1, r, r})
                throw ad::ShapeError("LatentState: noise " + std::to_string(i) + " has shape " +
                                     noise[i].shape().str());
        }
    }

    LatentState clone() const {
        LatentState s{w_plus.detach(), {}};
        for (const auto& n : noise) s.noise.push_back(n.detach());
        return s;
    }

    void save(ad::Archive& a) const {
        a.put("latent.w_plus", w_plus);
        for (std::size_t i = 0; i < noise.size(); ++i) a.put("latent.noise" + std::to_string(i), noise[i]);
    }

    static LatentState load(const ad::Archive& a) {
        LatentState s;
        s.w_plus = a.tensor<T>("latent.w_plus");
        for (int i = 0; a.contains("latent.noise" + std::to_string(i)); ++i)
            s.noise.push_back(a.tensor<T>("latent.noise" + std::to_string(i)));
        return s;
    }

    void save_file(const std::string& path) const {
        ad::Archive a;
        save(a);
        a.save(path);
    }
    static LatentState load_file(const std::string& path) { return load(ad::Archive::load(path)); }
};

template <typename T>
ad::Tensor<T> mapping_forward(const GeneratorWeights<T>& g, const ad::Tensor<T>& z) {
    const GeneratorConfig& cfg = g.config;
    if (static_cast<int>(z.shape().sample()) != cfg.latent_dim)
        throw ad::ShapeError("mapping_forward: z " + z.shape().str() + " vs latent_dim " +
                             std::to_string(cfg.latent_dim));
    const T wgain = T(cfg.mapping_lr_mul / std::sqrt(static_cast<double>(cfg.latent_dim)));
    const T bgain = T(cfg.mapping_lr_mul);
    ad::Tensor<T> x = ad::normalize_2nd_moment(ad::reshape(z, {z.shape().n, cfg.latent_dim, 1, 1}));
    for (int i = 0; i < cfg.mapping_depth; ++i)
        x = ad::leaky_relu(ad::linear(x, ad::scale(g.mapping_w[i], wgain), ad::scale(g.mapping_b[i], bgain)));
    return x;
}

/// [1,D,1,1] -> w+ with every column equal to w.
template <typename T>
ad::Tensor<T> replicate(const ad::Tensor<T>& w, int slots) {
    return ad::broadcast_batch(w, slots);
}

template <typename T>
std::vector<ad::Tensor<T>> styles_from_wplus(const ad::Tensor<T>& w_plus) {
    std::vector<ad::Tensor<T>> s;
    for (int i = 0; i < w_plus.shape().n; ++i) s.push_back(ad::select_batch(w_plus, i));
    return s;
}

/// Raw synthesis: one style input ([N or 1, D,1,1]) and one noise map
/// ([N or 1, 1, r, r]) per slot; returns [N,9,H,W] valid maps.
template <typename T>
ad::Tensor<T> synthesize(const GeneratorWeights<T>& g, const std::vector<ad::Tensor<T>>& styles,
                         const std::vector<ad::Tensor<T>>& noise) {
    const GeneratorConfig& cfg = g.config;
    const int slots = cfg.style_slots();
    if (static_cast<int>(styles.size()) != slots || static_cast<int>(noise.size()) != slots)
        throw ad::ShapeError("synthesize: expected " + std::to_string(slots) + " styles and noise maps");
    int batch = 1;
    for (int i = 0; i < slots; ++i) batch = std::max({batch, styles[i].shape().n, noise[i].shape().n});
    const T affine_gain = T(1.0 / std::sqrt(static_cast<double>(cfg.latent_dim)));

    ad::Tensor<T> x = ad::broadcast_batch(g.constant, batch);
    for (int slot = 0; slot < slots; ++slot) {
        if (slot > 0 && slot % 2 == 0) x = ad::upsample2x(x);
        const StyleLayer<T>& l = g.layers[slot];
        ad::Tensor<T> style = ad::linear(styles[slot], ad::scale(l.affine_w, affine_gain), l.affine_b);
        x = ad::modulated_conv2d(x, l.weight, style, true);
        x = ad::add_noise(x, noise[slot], l.noise_gain);
        x = ad::leaky_relu(ad::add_channel_bias(x, l.bias));
    }
    const T out_gain = T(1.0 / std::sqrt(static_cast<double>(cfg.channels.back())));
    ad::Tensor<T> raw = ad::conv2d(x, ad::scale(g.out_w, out_gain), g.out_b);
    return range_map(raw);
}

template <typename T>
ad::Tensor<T> synthesize(const GeneratorWeights<T>& g, const LatentState<T>& latent) {
    return synthesize(g, styles_from_wplus(latent.w_plus), latent.noise);
}

template <typename T>
std::vector<ad::Tensor<T>> zero_noise(const GeneratorConfig& cfg, int batch = 1) {
    std::vector<ad::Tensor<T>> n;
    for (int i = 0; i < cfg.style_slots(); ++i) {
        int r = cfg.layer_resolution(i);
        n.push_back(ad::Tensor<T>::zeros({batch, 1, r, r}));
    }
    return n;
}

template <typename T>
std::vector<ad::Tensor<T>> random_noise(const GeneratorConfig& cfg, std::mt19937_64& rng, int batch = 1) {
    std::normal_distribution<double> nd(0.0, 1.0);
    std::vector<ad::Tensor<T>> n;
    for (int i = 0; i < cfg.style_slots(); ++i) {
        int r = cfg.layer_resolution(i);
        std::vector<T> v(static_cast<std::size_t>(batch) * r * r);
        for (auto& x : v) x = T(nd(rng));
        n.push_back(ad::Tensor<T>::from({batch, 1, r, r}, std::move(v)));
    }
    return n;
}

template <typename T>
ad::Tensor<T> random_latent_z(const GeneratorConfig& cfg, std::mt19937_64& rng, int batch = 1) {
    std::normal_distribution<double> nd(0.0, 1.0);
    std::vector<T> v(static_cast<std::size_t>(batch) * cfg.latent_dim);
    for (auto& x : v) x = T(nd(rng));
    return ad::Tensor<T>::from({batch, cfg.latent_dim, 1, 1}, std::move(v));
}

template <typename T>
struct SampledMaterial {
    SvbrdfMaps<T> maps;
    LatentState<T> latent;
};

/// z ~ N(0, I) and noise ~ N(0, I) from a seeded generator.
template <typename T>
SampledMaterial<T> sample_material(const GeneratorWeights<T>& g, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    ad::Tensor<T> z = random_latent_z<T>(g.config, rng);
    ad::Tensor<T> w = mapping_forward(g, z).detach();
    LatentState<T> latent{replicate(w, g.config.style_slots()).detach(), random_noise<T>(g.config, rng)};
    return {to_maps(synthesize(g, latent)), std::move(latent)};
}

/// Average of the mapped latent over `num_samples` standard-normal draws.
template <typename T>
ad::Tensor<T> mean_w(const GeneratorWeights<T>& g, int num_samples = 10000, std::uint64_t seed = 0) {
    if (num_samples < 1) throw std::invalid_argument("mean_w: num_samples must be >= 1");
    std::mt19937_64 rng(seed);
    const int d = g.config.latent_dim;
    std::vector<double> acc(d, 0.0);
    for (int done = 0; done < num_samples;) {
        int b = std::min(1000, num_samples - done);
        ad::Tensor<T> w = mapping_forward(g, random_latent_z<T>(g.config, rng, b));
        for (int i = 0; i < b; ++i)
            for (int k = 0; k < d; ++k) acc[k] += static_cast<double>(w.data()[i * d + k]);
        done += b;
    }
    std::vector<T> out(d);
    for (int k = 0; k < d; ++k) out[k] = T(acc[k] / num_samples);
    return ad::Tensor<T>::from({1, d, 1, 1}, std::move(out));
}

template <typename T>
LatentState<T> lerp_latent(const LatentState<T>& a, const LatentState<T>& b, double t) {
    if (a.w_plus.shape() != b.w_plus.shape() || a.noise.size() != b.noise.size())
        throw ad::ShapeError("lerp_latent: latent shapes differ");
    auto lerp = [t](const ad::Tensor<T>& x, const ad::Tensor<T>& y) {
        if (x.shape() != y.shape()) throw ad::ShapeError("lerp_latent: noise shapes differ");
        std::vector<T> v(x.size());
        for (std::size_t i = 0; i < v.size(); ++i) v[i] = T((1.0 - t) * x.data()[i] + t * y.data()[i]);
        return ad::Tensor<T>::from(x.shape(), std::move(v));
    };
    LatentState<T> out{lerp(a.w_plus, b.w_plus), {}};
    for (std::size_t i = 0; i < a.noise.size(); ++i) out.noise.push_back(lerp(a.noise[i], b.noise[i]));
    return out;
}

}  // namespace svfit
