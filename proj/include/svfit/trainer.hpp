#pragma once

// Adversarial training of the generator on procedural maps.
//
// Non-saturating logistic losses with lazy R1 on real samples. The R1
// parameter gradient needs d/dtheta ||grad_x D||^2. With v = grad_x D(x)
// held fixed this equals 2 d/dtheta <grad_x D(x), v>, and the inner product is
// the directional derivative of D along v, computed by pushing a tangent
// through the network next to the primal pass. D is piecewise linear, so the
// tangent pass is linear in v with activation masks taken from the primal.

#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "svfit/autodiff/adam.hpp"
#include "svfit/autodiff/archive.hpp"
#include "svfit/autodiff/conv.hpp"
#include "svfit/autodiff/ops.hpp"
#include "svfit/generator.hpp"
#include "svfit/procedural.hpp"

namespace svfit {

struct DiscriminatorConfig {
    int resolution = 64;
    std::vector<int> channels{16, 32, 32, 64, 64};  // per level, finest first, ending at 4x4
    int hidden = 64;

    int levels() const { return static_cast<int>(channels.size()); }

    /// Channel schedule mirroring a generator config.
    static DiscriminatorConfig mirror(const GeneratorConfig& g) {
        DiscriminatorConfig d;
        d.resolution = g.resolution();
        d.channels.clear();
        for (int i = g.num_blocks - 1; i >= 0; --i) d.channels.push_back(std::max(16, g.channels[i]));
        d.hidden = std::max(16, g.channels[0]);
        return d;
    }

    void validate() const {
        if (channels.empty()) throw std::invalid_argument("DiscriminatorConfig: no levels");
        if ((4 << (levels() - 1)) != resolution)
            throw std::invalid_argument("DiscriminatorConfig: " + std::to_string(levels()) +
                                        " levels do not reach 4x4 from " + std::to_string(resolution));
    }
};

template <typename T>
struct DiscriminatorWeights {
    DiscriminatorConfig config;
    ad::Tensor<T> from_w, from_b;                   // 1x1, 9 -> channels[0]
    std::vector<ad::Tensor<T>> conv_w, conv_b;      // per level, 3x3
    ad::Tensor<T> fc_w, fc_b, out_w, out_b;

    static DiscriminatorWeights init(const DiscriminatorConfig& cfg, std::uint64_t seed) {
        cfg.validate();
        std::mt19937_64 rng(seed);
        std::normal_distribution<double> nd;
        auto randn = [&](ad::Shape s) {
            std::vector<T> v(s.size());
            for (auto& x : v) x = T(nd(rng));
            return ad::Tensor<T>::from(s, std::move(v), true);
        };
        auto zeros = [](int c) { return ad::Tensor<T>::zeros({1, c, 1, 1}, true); };
        DiscriminatorWeights d;
        d.config = cfg;
        d.from_w = randn({cfg.channels[0], 9, 1, 1});
        d.from_b = zeros(cfg.channels[0]);
        for (int i = 0; i < cfg.levels(); ++i) {
            int in = cfg.channels[i];
            int out = cfg.channels[std::min(i + 1, cfg.levels() - 1)];
            d.conv_w.push_back(randn({out, in, 3, 3}));
            d.conv_b.push_back(zeros(out));
        }
        d.fc_w = randn({cfg.hidden, cfg.channels.back() * 16, 1, 1});
        d.fc_b = zeros(cfg.hidden);
        d.out_w = randn({1, cfg.hidden, 1, 1});
        d.out_b = zeros(1);
        return d;
    }

    std::vector<ad::Tensor<T>> parameters() const {
        std::vector<ad::Tensor<T>> p{from_w, from_b};
        for (std::size_t i = 0; i < conv_w.size(); ++i) {
            p.push_back(conv_w[i]);
            p.push_back(conv_b[i]);
        }
        for (const auto& t : {fc_w, fc_b, out_w, out_b}) p.push_back(t);
        return p;
    }

    std::vector<std::string> parameter_names() const {
        std::vector<std::string> n{"disc.from.weight", "disc.from.bias"};
        for (std::size_t i = 0; i < conv_w.size(); ++i) {
            n.push_back("disc.level" + std::to_string(i) + ".weight");
            n.push_back("disc.level" + std::to_string(i) + ".bias");
        }
        for (const char* s : {"disc.fc.weight", "disc.fc.bias", "disc.out.weight", "disc.out.bias"}) n.push_back(s);
        return n;
    }

    void set_requires_grad(bool r) const {
        for (auto t : parameters()) t.set_requires_grad(r);
    }

    void save(ad::Archive& a) const {
        auto p = parameters();
        auto n = parameter_names();
        for (std::size_t i = 0; i < p.size(); ++i) a.put(n[i], p[i]);
    }
    void load(const ad::Archive& a) {
        auto p = parameters();
        auto n = parameter_names();
        for (std::size_t i = 0; i < p.size(); ++i) a.load_into(n[i], p[i]);
    }
};

/// [N,9,H,W] -> [N,1,1,1] logits. Equalized learning rate: raw N(0,1)
/// weights scaled by 1/sqrt(fan_in) at run time.
template <typename T>
ad::Tensor<T> disc_forward(const DiscriminatorWeights<T>& d, const ad::Tensor<T>& x) {
    const auto& cfg = d.config;
    const ad::Shape s = x.shape();
    if (s.c != 9 || s.h != cfg.resolution || s.w != cfg.resolution)
        throw ad::ShapeError("disc_forward: input " + s.str() + " does not match resolution " +
                             std::to_string(cfg.resolution));
    auto gain = [](const ad::Tensor<T>& w) {
        const ad::Shape ws = w.shape();
        return T(1.0 / std::sqrt(static_cast<double>(ws.c * ws.h * ws.w)));
    };
    ad::Tensor<T> h = ad::leaky_relu(ad::conv2d(x, ad::scale(d.from_w, gain(d.from_w)), d.from_b));
    for (int i = 0; i < cfg.levels(); ++i) {
        h = ad::leaky_relu(ad::conv2d(h, ad::scale(d.conv_w[i], gain(d.conv_w[i])), d.conv_b[i]));
        if (i + 1 < cfg.levels()) h = ad::avg_pool2x(h);
    }
    h = ad::reshape(h, {s.n, static_cast<int>(h.shape().sample()), 1, 1});
    h = ad::leaky_relu(ad::linear(h, ad::scale(d.fc_w, gain(d.fc_w)), d.fc_b));
    return ad::linear(h, ad::scale(d.out_w, gain(d.out_w)), d.out_b);
}

/// Directional derivative of D at x along v, per sample ([N,1,1,1]).
/// Differentiable with respect to the discriminator parameters.
template <typename T>
ad::Tensor<T> disc_directional(const DiscriminatorWeights<T>& d, const ad::Tensor<T>& x, const ad::Tensor<T>& v) {
    const auto& cfg = d.config;
    const ad::Shape s = x.shape();
    if (v.shape() != s) throw ad::ShapeError("disc_directional: direction shape differs from input");
    auto gain = [](const ad::Tensor<T>& w) {
        const ad::Shape ws = w.shape();
        return T(1.0 / std::sqrt(static_cast<double>(ws.c * ws.h * ws.w)));
    };
    // Leaky-relu derivative of a pre-activation, as a constant tensor.
    auto mask = [](const ad::Tensor<T>& z) {
        std::vector<T> m(z.size());
        for (std::size_t i = 0; i < m.size(); ++i) m[i] = z.data()[i] > T(0) ? T(1) : T(0.2);
        return ad::Tensor<T>::from(z.shape(), std::move(m));
    };
    auto step = [&](ad::Tensor<T>& h, ad::Tensor<T>& t, const ad::Tensor<T>& w, const ad::Tensor<T>& b, bool conv) {
        ad::Tensor<T> ws = ad::scale(w, gain(w));
        ad::Tensor<T> z = conv ? ad::conv2d(h, ws.detach(), b.detach()) : ad::linear(h, ws.detach(), b.detach());
        t = conv ? ad::conv2d(t, ws) : ad::linear(t, ws);
        return z;
    };
    ad::Tensor<T> h = x.detach(), t = v.detach();
    ad::Tensor<T> z = step(h, t, d.from_w, d.from_b, true);
    t = ad::mul(t, mask(z));
    h = ad::leaky_relu(z);
    for (int i = 0; i < cfg.levels(); ++i) {
        z = step(h, t, d.conv_w[i], d.conv_b[i], true);
        t = ad::mul(t, mask(z));
        h = ad::leaky_relu(z);
        if (i + 1 < cfg.levels()) {
            h = ad::avg_pool2x(h);
            t = ad::avg_pool2x(t);
        }
    }
    const ad::Shape flat{s.n, static_cast<int>(h.shape().sample()), 1, 1};
    h = ad::reshape(h, flat);
    t = ad::reshape(t, flat);
    z = step(h, t, d.fc_w, d.fc_b, false);
    t = ad::mul(t, mask(z));
    h = ad::leaky_relu(z);
    step(h, t, d.out_w, d.out_b, false);
    return t;
}

/// Returns E_n ||grad_x D(x_n)||^2 and, when `weight` is non-zero, accumulates
/// weight * d(R1)/d(theta) into the discriminator parameter gradients.
template <typename T>
T r1_penalty(const DiscriminatorWeights<T>& d, const ad::Tensor<T>& real, T weight) {
    const ad::Shape s = real.shape();
    d.set_requires_grad(false);
    ad::Tensor<T> x = real.detach(true);
    ad::backward(ad::sum(disc_forward(d, x)));
    d.set_requires_grad(true);
    ad::Tensor<T> v = ad::Tensor<T>::from(s, std::vector<T>(x.grad().begin(), x.grad().end()));
    double sq = 0;
    for (T g : v.data()) sq += static_cast<double>(g) * g;
    const T r1 = T(sq / s.n);
    if (weight == T(0)) return r1;
    ad::backward(ad::scale(ad::sum(disc_directional(d, real, v)), T(weight * 2.0 / s.n)));
    return r1;
}

struct TrainConfig {
    GeneratorConfig generator = GeneratorConfig::desk();
    DiscriminatorConfig discriminator = DiscriminatorConfig::mirror(GeneratorConfig::desk());
    ProceduralDatasetConfig dataset;
    int steps = 20000;
    int batch = 8;
    std::uint64_t seed = 7;
    double lr = 0.002;
    double beta1 = 0.0;
    double beta2 = 0.99;
    double r1_gamma = 10.0;
    int r1_interval = 8;       // lazy regularization; 1 = every step
    int checkpoint_every = 1000;
    std::string checkpoint_path;  // empty: no checkpoints
    std::string metrics_path;     // empty: no metrics file
    int log_every = 100;

    void validate() const {
        generator.validate();
        discriminator.validate();
        dataset.validate();
        if (generator.resolution() != discriminator.resolution || dataset.resolution != generator.resolution())
            throw std::invalid_argument("TrainConfig: generator, discriminator and dataset resolutions differ");
        if (steps < 0 || batch < 1 || r1_interval < 1)
            throw std::invalid_argument("TrainConfig: steps >= 0, batch >= 1, r1_interval >= 1 required");
        if (dataset.count < 1) throw std::invalid_argument("TrainConfig: dataset is empty");
    }
};

struct StepLog {
    long step = 0;
    double loss_g = 0, loss_d = 0, r1 = 0;
};

struct TrainState {
    GeneratorWeights<float> gen;
    DiscriminatorWeights<float> disc;
    ad::AdamState<float> gen_opt, disc_opt;
    std::mt19937_64 rng;
    long step = 0;
    double last_r1 = 0;

    static TrainState init(const TrainConfig& cfg) {
        TrainState s;
        s.gen = GeneratorWeights<float>::init(cfg.generator, cfg.seed);
        s.disc = DiscriminatorWeights<float>::init(cfg.discriminator, cfg.seed + 1);
        s.rng.seed(cfg.seed + 2);
        return s;
    }
};

namespace detail {

inline void save_adam(ad::Archive& a, const std::string& prefix, const ad::AdamState<float>& st,
                      const std::vector<ad::Tensor<float>>& params) {
    a.put_bytes(prefix + ".step", std::to_string(st.step));
    for (std::size_t i = 0; i < st.m.size(); ++i) {
        a.put_values<float>(prefix + ".m" + std::to_string(i), params[i].shape(), st.m[i]);
        a.put_values<float>(prefix + ".v" + std::to_string(i), params[i].shape(), st.v[i]);
    }
}

inline ad::AdamState<float> load_adam(const ad::Archive& a, const std::string& prefix, std::size_t count) {
    ad::AdamState<float> st;
    st.step = std::stol(a.bytes(prefix + ".step"));
    if (st.step == 0) return st;
    for (std::size_t i = 0; i < count; ++i) {
        st.m.push_back(a.values<float>(prefix + ".m" + std::to_string(i)));
        st.v.push_back(a.values<float>(prefix + ".v" + std::to_string(i)));
    }
    return st;
}

inline void check_finite(double v, const char* what, long step) {
    if (!std::isfinite(v))
        throw std::runtime_error(std::string("training diverged: ") + what + " is " + std::to_string(v) +
                                 " at step " + std::to_string(step));
}

}  // namespace detail

inline void save_checkpoint(const TrainState& s, const std::string& path) {
    ad::Archive a;
    s.gen.save(a, "gen.");
    s.disc.save(a);
    detail::save_adam(a, "opt.gen", s.gen_opt, s.gen.parameters());
    detail::save_adam(a, "opt.disc", s.disc_opt, s.disc.parameters());
    std::ostringstream rs;
    rs << s.rng;
    a.put_bytes("rng", rs.str());
    a.put_bytes("step", std::to_string(s.step));
    a.put_bytes("last_r1", std::to_string(s.last_r1));
    a.put_bytes("gen.config", s.gen.config.to_text());
    a.save(path);
}

inline TrainState load_checkpoint(const TrainConfig& cfg, const std::string& path) {
    ad::Archive a = ad::Archive::load(path);
    TrainState s = TrainState::init(cfg);
    s.gen.load(a, "gen.");
    s.disc.load(a);
    s.gen_opt = detail::load_adam(a, "opt.gen", s.gen.parameters().size());
    s.disc_opt = detail::load_adam(a, "opt.disc", s.disc.parameters().size());
    std::istringstream rs(a.bytes("rng"));
    rs >> s.rng;
    s.step = std::stol(a.bytes("step"));
    s.last_r1 = std::stod(a.bytes("last_r1"));
    return s;
}

/// Stacks `batch` real samples, each augmented (possibly blended with a
/// second random sample).
inline ad::Tensor<float> real_batch(const std::vector<ProceduralSample>& data, int batch, const AugmentConfig& aug,
                                    std::mt19937_64& rng) {
    const int res = data.front().maps.width();
    const std::size_t per = 9 * static_cast<std::size_t>(res) * res;
    std::vector<float> v(per * batch);
    std::uniform_int_distribution<std::size_t> pick(0, data.size() - 1);
    for (int n = 0; n < batch; ++n) {
        const auto& a = data[pick(rng)].maps;
        const auto& b = data[pick(rng)].maps;
        AugmentParams p = draw_augment(aug, rng, true);
        SvbrdfMaps<float> m = apply_augment(a, p, &b);
        std::copy(m.data().begin(), m.data().end(), v.begin() + n * per);
    }
    return ad::Tensor<float>::from({batch, 9, res, res}, std::move(v));
}

/// Generator forward for a batch of fresh z and noise draws.
inline ad::Tensor<float> generate_batch(const GeneratorWeights<float>& g, int batch, std::mt19937_64& rng) {
    ad::Tensor<float> w = mapping_forward(g, random_latent_z<float>(g.config, rng, batch));
    std::vector<ad::Tensor<float>> styles(g.config.style_slots(), w);
    return synthesize(g, styles, random_noise<float>(g.config, rng, batch));
}

/// One discriminator update followed by one generator update.
inline StepLog gan_train_step(TrainState& s, const TrainConfig& cfg, const ad::Tensor<float>& real) {
    if (real.shape().n < 1) throw std::invalid_argument("gan_train_step: empty batch");
    const int batch = real.shape().n;
    const ad::AdamConfig adam{cfg.lr, cfg.beta1, cfg.beta2, 1e-8};
    StepLog log;
    log.step = s.step;

    // Discriminator.
    auto dparams = s.disc.parameters();
    auto gparams = s.gen.parameters();
    for (auto& p : dparams) p.zero_grad();
    s.gen.set_requires_grad(false);
    ad::Tensor<float> fake = generate_batch(s.gen, batch, s.rng);
    s.gen.set_requires_grad(true);
    ad::Tensor<float> logits = disc_forward(s.disc, ad::concat_batch<float>({fake, real}));
    std::vector<float> sign(2 * batch, 1.0f);
    for (int n = batch; n < 2 * batch; ++n) sign[n] = -1.0f;
    // softplus(D(fake)) + softplus(-D(real)), averaged per half.
    ad::Tensor<float> loss_d = ad::scale(
        ad::sum(ad::softplus(ad::mul(logits, ad::Tensor<float>::from(logits.shape(), std::move(sign))))),
        1.0f / static_cast<float>(batch));
    log.loss_d = loss_d.item();
    detail::check_finite(log.loss_d, "loss_d", s.step);
    ad::backward(loss_d);
    if (cfg.r1_gamma > 0 && s.step % cfg.r1_interval == 0) {
        s.last_r1 = r1_penalty(s.disc, real, static_cast<float>(0.5 * cfg.r1_gamma * cfg.r1_interval));
        detail::check_finite(s.last_r1, "r1", s.step);
    }
    log.r1 = s.last_r1;
    ad::adam_step(dparams, s.disc_opt, adam);

    // Generator.
    for (auto& p : gparams) p.zero_grad();
    s.disc.set_requires_grad(false);
    ad::Tensor<float> gfake = generate_batch(s.gen, batch, s.rng);
    ad::Tensor<float> loss_g =
        ad::scale(ad::sum(ad::softplus(ad::scale(disc_forward(s.disc, gfake), -1.0f))), 1.0f / static_cast<float>(batch));
    s.disc.set_requires_grad(true);
    log.loss_g = loss_g.item();
    detail::check_finite(log.loss_g, "loss_g", s.step);
    ad::backward(loss_g);
    ad::adam_step(gparams, s.gen_opt, adam);
    for (auto& p : gparams) p.zero_grad();
    for (auto& p : dparams) p.zero_grad();

    ++s.step;
    return log;
}

/// Runs until `cfg.steps` total steps on `data` (cfg.dataset only supplies
/// the augmentation settings). Pass a state to resume.
inline TrainState train(const TrainConfig& cfg, const std::vector<ProceduralSample>& data, TrainState* resume = nullptr,
                        const std::function<void(const StepLog&)>& on_log = {}) {
    cfg.validate();
    if (data.empty()) throw std::invalid_argument("train: dataset is empty");
    const int res = cfg.generator.resolution();
    for (const auto& d : data)
        if (d.maps.width() != res || d.maps.height() != res)
            throw std::invalid_argument("train: dataset maps must be " + std::to_string(res) + "x" + std::to_string(res));
    TrainState s = resume ? std::move(*resume) : TrainState::init(cfg);
    std::ofstream metrics;
    if (!cfg.metrics_path.empty()) {
        metrics.open(cfg.metrics_path, std::ios::app);
        if (!metrics) throw std::runtime_error("cannot open metrics file " + cfg.metrics_path);
    }
    while (s.step < cfg.steps) {
        ad::Tensor<float> real = real_batch(data, cfg.batch, cfg.dataset.augment, s.rng);
        StepLog log = gan_train_step(s, cfg, real);
        if (metrics.is_open()) metrics << log.step << ',' << log.loss_g << ',' << log.loss_d << ',' << log.r1 << '\n';
        if (on_log && (log.step % cfg.log_every == 0 || s.step == cfg.steps)) on_log(log);
        if (!cfg.checkpoint_path.empty() && cfg.checkpoint_every > 0 && s.step % cfg.checkpoint_every == 0) {
            metrics.flush();
            save_checkpoint(s, cfg.checkpoint_path);
        }
    }
    return s;
}

/// Trains on the procedural dataset described by cfg.dataset.
inline TrainState train(const TrainConfig& cfg, TrainState* resume = nullptr,
                        const std::function<void(const StepLog&)>& on_log = {}) {
    cfg.validate();
    return train(cfg, generate_procedural_dataset(cfg.dataset), resume, on_log);
}

}  // namespace svfit
