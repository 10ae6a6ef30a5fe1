#pragma once

// Fitting material maps to photographs: directly in per-pixel map space, or
// through the generator in its latent space.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "svfit/autodiff/adam.hpp"
#include "svfit/generator.hpp"
#include "svfit/loss.hpp"
#include "svfit/maps_tensor.hpp"
#include "svfit/run_manifest.hpp"

namespace svfit {

enum class Strategy { s1, s2, s3 };
enum class LatentSpace { w, w_plus, w_plus_noise };
enum class InitKind { mean_w, low_rough, dual, file };

inline const char* strategy_name(Strategy s) {
    switch (s) {
        case Strategy::s1: return "s1";
        case Strategy::s2: return "s2";
        default: return "s3";
    }
}
inline Strategy parse_strategy(const std::string& s) {
    if (s == "s1") return Strategy::s1;
    if (s == "s2") return Strategy::s2;
    if (s == "s3") return Strategy::s3;
    throw std::invalid_argument("unknown strategy '" + s + "'");
}
inline const char* latent_space_name(LatentSpace s) {
    switch (s) {
        case LatentSpace::w: return "w";
        case LatentSpace::w_plus: return "wplus";
        default: return "wplus_noise";
    }
}
inline LatentSpace parse_latent_space(const std::string& s) {
    if (s == "w") return LatentSpace::w;
    if (s == "wplus") return LatentSpace::w_plus;
    if (s == "wplus_noise") return LatentSpace::w_plus_noise;
    throw std::invalid_argument("unknown latent space '" + s + "'");
}
inline const char* init_kind_name(InitKind k) {
    switch (k) {
        case InitKind::mean_w: return "mean";
        case InitKind::low_rough: return "lowrough";
        case InitKind::dual: return "dual";
        default: return "file";
    }
}
inline InitKind parse_init_kind(const std::string& s) {
    if (s == "mean") return InitKind::mean_w;
    if (s == "lowrough") return InitKind::low_rough;
    if (s == "dual") return InitKind::dual;
    if (s == "file") return InitKind::file;
    throw std::invalid_argument("unknown init '" + s + "'");
}

/// Collocated flash setup used for synthetic captures and the canonical
/// embedding view.
struct SyntheticCapture {
    double distance = 1.0;
    double intensity = 3.0;
    double spacing = 1.0 / 3.0;
};

struct FitConfig {
    Strategy strategy = Strategy::s3;
    LatentSpace space = LatentSpace::w_plus_noise;
    int period = 10;
    int iterations = 2000;
    double lr = 0.01;
    InitKind init = InitKind::mean_w;
    std::string init_file;      // for InitKind::file
    std::string preset_file;    // low-roughness preset; empty = bundled asset
    int mean_w_samples = 10000;
    std::uint64_t mean_w_seed = 0;
    bool post_refine = false;
    int refine_iterations = 500;

    void validate() const {
        if (iterations < 0) throw std::invalid_argument("FitConfig: iterations must be >= 0");
        if (period < 1) throw std::invalid_argument("FitConfig: period must be >= 1");
        if (!(lr > 0)) throw std::invalid_argument("FitConfig: learning rate must be positive");
        if (refine_iterations < 0) throw std::invalid_argument("FitConfig: refine iterations must be >= 0");
        if (init == InitKind::file && init_file.empty())
            throw std::invalid_argument("FitConfig: init=file needs a latent file");
    }
};

#ifdef SVFIT_ASSET_DIR
inline std::string asset_path(const std::string& name) { return std::string(SVFIT_ASSET_DIR) + "/" + name; }
#else
inline std::string asset_path(const std::string& name) { return "assets/" + name; }
#endif
inline std::string default_preset_path() { return asset_path("low_rough.svt"); }
/// Bundled 64x64 prior (weights; its config sits next to it as .cfg).
inline std::string default_prior_path() { return asset_path("desk_prior.svt"); }

/// The first `n` of `views` in spread order: the camera nearest the mean
/// position first, then repeatedly the one farthest from all chosen so far
/// (lowest index on ties). On the 3x3 grid: center, then the corners.
inline std::vector<CaptureView> select_views(const std::vector<CaptureView>& views, std::size_t n) {
    if (n < 1 || n > views.size())
        throw std::invalid_argument("select_views: need 1.." + std::to_string(views.size()) + " views");
    Vec3d mean{0, 0, 0};
    for (const auto& v : views) mean = mean + v.camera_position * (1.0 / views.size());
    std::vector<std::size_t> order;
    std::vector<bool> used(views.size(), false);
    std::size_t first = 0;
    for (std::size_t i = 1; i < views.size(); ++i)
        if (length(views[i].camera_position - mean) < length(views[first].camera_position - mean) - 1e-12) first = i;
    order.push_back(first);
    used[first] = true;
    while (order.size() < n) {
        std::size_t best = 0;
        double best_d = -1;
        for (std::size_t i = 0; i < views.size(); ++i) {
            if (used[i]) continue;
            double d = std::numeric_limits<double>::infinity();
            for (std::size_t j : order) d = std::min(d, length(views[i].camera_position - views[j].camera_position));
            if (d > best_d + 1e-12) {
                best = i;
                best_d = d;
            }
        }
        order.push_back(best);
        used[best] = true;
    }
    std::vector<CaptureView> out;
    for (std::size_t i : order) out.push_back(views[i]);
    return out;
}

/// Best-so-far record: `total` never increases along a trace.
struct TraceEntry {
    int iter = 0;
    double total = 0;
    double pixel = 0;
    double percept = 0;
};

inline void write_trace(const std::string& path, const std::vector<TraceEntry>& trace) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot write " + path);
    os.precision(9);
    for (const auto& e : trace) os << e.iter << "," << e.total << "," << e.pixel << "," << e.percept << "\n";
}

template <typename T>
ad::Tensor<T> image_tensor(const Image<float>& img) {
    return ad::Tensor<T>::from({1, img.channels, img.height, img.width},
                               std::vector<T>(img.data.begin(), img.data.end()));
}

/// Sum over views of the per-view loss, with target features cached.
template <typename T>
class Objective {
public:
    Objective(std::vector<CaptureView> views, const FeatureExtractor<T>& fx, const LossConfig& cfg)
        : views_(std::move(views)), fx_(&fx), cfg_(cfg) {
        cfg_.validate();
        if (views_.empty()) throw std::invalid_argument("Objective: at least one view is required");
        for (const auto& v : views_) {
            v.validate();
            if (v.image.empty()) throw std::invalid_argument("Objective: view '" + v.id + "' has no image");
            targets_.push_back(LossTarget<T>::make(image_tensor<T>(v.image), fx, cfg_.space));
        }
    }

    LossTerms<T> terms(const ad::Tensor<T>& maps) const {
        LossTerms<T> acc;
        for (std::size_t i = 0; i < views_.size(); ++i) {
            auto t = loss_terms(render_op(maps, views_[i]), targets_[i], *fx_, cfg_.space);
            if (i == 0)
                acc = t;
            else
                acc += t;
        }
        return acc;
    }

    const LossConfig& config() const { return cfg_; }
    const std::vector<CaptureView>& views() const { return views_; }

private:
    std::vector<CaptureView> views_;
    std::vector<LossTarget<T>> targets_;
    const FeatureExtractor<T>* fx_;
    LossConfig cfg_;
};

/// Direct mode: sum_i L(R(maps; view_i), I_i) with the canonical layer weights.
template <typename T>
ad::Tensor<T> total_objective(const ad::Tensor<T>& maps, const std::vector<CaptureView>& views,
                              const LossConfig& cfg, const FeatureExtractor<T>& fx) {
    return Objective<T>(views, fx, cfg).terms(maps).total(cfg, cfg.latent_weights);
}

/// Latent mode: sum_i L(R(G(w+, noise); view_i), I_i).
template <typename T>
ad::Tensor<T> total_objective(const GeneratorWeights<T>& g, const LatentState<T>& latent,
                              const std::vector<CaptureView>& views, const LossConfig& cfg,
                              const FeatureExtractor<T>& fx) {
    return total_objective(synthesize(g, latent), views, cfg, fx);
}

template <typename T>
struct DirectFitResult {
    SvbrdfMaps<T> maps;
    std::vector<TraceEntry> trace;
    double initial_loss = 0;
    double final_loss = 0;
    bool diverged = false;
};

template <typename T>
struct LatentFitResult {
    SvbrdfMaps<T> maps;
    LatentState<T> latent;
    std::vector<TraceEntry> trace;
    double initial_loss = 0;
    double final_loss = 0;
    bool diverged = false;
    std::string init;
    bool refined = false;
};

namespace detail {

template <typename T>
bool finite_terms(const LossTerms<T>& t) {
    if (!std::isfinite(static_cast<double>(t.pixel.item()))) return false;
    for (const auto& p : t.percept)
        if (!std::isfinite(static_cast<double>(p.item()))) return false;
    return true;
}

struct Phase {
    bool latent = true;
    bool noise = true;
};

inline Phase phase_at(const FitConfig& cfg, int it, bool has_noise) {
    if (!has_noise) return {true, false};
    switch (cfg.strategy) {
        case Strategy::s1: return it < cfg.iterations / 2 ? Phase{true, false} : Phase{false, true};
        case Strategy::s2: return {true, true};
        default: return (it / cfg.period) % 2 == 0 ? Phase{true, false} : Phase{false, true};
    }
}

/// Shared latent optimization loop. `eval` maps a [1,9,H,W] maps tensor to
/// loss terms; the phase decides the layer weights used for the gradient,
/// while the recorded loss always uses the canonical weights.
template <typename T, typename Eval>
LatentFitResult<T> optimize_latent(const GeneratorWeights<T>& g, const LatentState<T>& init, const FitConfig& cfg,
                                   const LossConfig& loss, Eval&& eval) {
    cfg.validate();
    init.validate(g.config);
    g.set_requires_grad(false);
    const int slots = g.config.style_slots();
    const bool has_noise = cfg.space == LatentSpace::w_plus_noise;

    ad::Tensor<T> w_var;
    if (cfg.space == LatentSpace::w) {
        // Tied columns start from the column average.
        const int d = g.config.latent_dim;
        std::vector<T> avg(d, T(0));
        for (int s = 0; s < slots; ++s)
            for (int k = 0; k < d; ++k) avg[k] += init.w_plus.data()[s * d + k] / T(slots);
        w_var = ad::Tensor<T>::from({1, d, 1, 1}, std::move(avg), true);
    } else {
        w_var = init.w_plus.detach(true);
    }
    std::vector<ad::Tensor<T>> noise_vars;
    for (const auto& n : init.noise) noise_vars.push_back(n.detach(has_noise));

    ad::AdamConfig acfg;
    acfg.lr = cfg.lr;
    ad::Adam<T> latent_opt({w_var}, acfg);
    ad::Adam<T> noise_opt(noise_vars, acfg);

    auto current = [&]() {
        LatentState<T> s{cfg.space == LatentSpace::w ? replicate(w_var, slots) : w_var, noise_vars};
        return s;
    };
    auto snapshot = [&]() {
        LatentState<T> s{cfg.space == LatentSpace::w ? replicate(w_var.detach(), slots) : w_var.detach(), {}};
        for (const auto& n : noise_vars) s.noise.push_back(n.detach());
        return s;
    };

    LatentFitResult<T> r;
    double best = std::numeric_limits<double>::infinity();
    for (int it = 0; it <= cfg.iterations; ++it) {
        const Phase ph = phase_at(cfg, std::min(it, std::max(cfg.iterations - 1, 0)), has_noise);
        w_var.set_requires_grad(ph.latent);
        for (auto& n : noise_vars) n.set_requires_grad(ph.noise);

        ad::Tensor<T> maps = synthesize(g, current());
        LossTerms<T> terms = eval(maps);
        if (!finite_terms(terms)) {
            r.diverged = true;
            break;
        }
        const double total = terms.total_value(loss, loss.latent_weights);
        if (it == 0) r.initial_loss = total;
        if (total < best) {
            best = total;
            r.latent = snapshot();
            r.maps = to_maps(maps);
            r.trace.push_back({it, total, static_cast<double>(terms.pixel.item()),
                               terms.percept_value(loss.latent_weights)});
        } else {
            TraceEntry e = r.trace.back();
            e.iter = it;
            r.trace.push_back(e);
        }
        if (it == cfg.iterations) break;

        const LayerWeights& lw = (ph.noise && !ph.latent) ? loss.noise_weights : loss.latent_weights;
        latent_opt.zero_grad();
        noise_opt.zero_grad();
        ad::backward(terms.total(loss, lw));
        if (ph.latent) latent_opt.step();
        if (ph.noise) noise_opt.step();
    }
    if (r.trace.empty()) throw std::runtime_error("fit: objective is not finite at the initial point");
    r.final_loss = best;
    return r;
}

}  // namespace detail

/// Adam on unbounded raw maps pushed through the generator's range mapping,
/// so every iterate is a valid material. Returns the best iterate seen.
template <typename T>
DirectFitResult<T> fit_direct(const Objective<T>& obj, const SvbrdfMaps<T>& init, int iterations, double lr) {
    if (iterations < 0) throw std::invalid_argument("fit_direct: iterations must be >= 0");
    const LossConfig& loss = obj.config();
    ad::Tensor<T> raw = inverse_range_map(init).detach(true);
    ad::AdamConfig acfg;
    acfg.lr = lr;
    ad::Adam<T> opt({raw}, acfg);

    DirectFitResult<T> r;
    double best = std::numeric_limits<double>::infinity();
    for (int it = 0; it <= iterations; ++it) {
        ad::Tensor<T> maps = range_map(raw);
        LossTerms<T> terms = obj.terms(maps);
        if (!detail::finite_terms(terms)) {
            r.diverged = true;
            break;
        }
        const double total = terms.total_value(loss, loss.latent_weights);
        if (it == 0) r.initial_loss = total;
        if (total < best) {
            best = total;
            r.maps = to_maps(maps);
            r.trace.push_back({it, total, static_cast<double>(terms.pixel.item()),
                               terms.percept_value(loss.latent_weights)});
        } else {
            TraceEntry e = r.trace.back();
            e.iter = it;
            r.trace.push_back(e);
        }
        if (it == iterations) break;
        opt.zero_grad();
        ad::backward(terms.total(loss, loss.latent_weights));
        opt.step();
    }
    if (r.trace.empty()) throw std::runtime_error("fit_direct: objective is not finite at the initial point");
    r.final_loss = best;
    return r;
}

template <typename T>
DirectFitResult<T> fit_direct(const std::vector<CaptureView>& views, const SvbrdfMaps<T>& init,
                              const FitConfig& cfg, const LossConfig& loss, const FeatureExtractor<T>& fx) {
    cfg.validate();
    return fit_direct(Objective<T>(views, fx, loss), init, cfg.iterations, cfg.lr);
}

/// Neutral starting point for direct fits: mid-gray albedo, flat normal,
/// roughness 0.5, specular 0.04.
template <typename T>
SvbrdfMaps<T> neutral_maps(int width, int height) {
    return SvbrdfMaps<T>::constant(width, height, {T(0.5), T(0.5), T(0.5)}, T(0), T(0), T(0.5),
                                   {T(0.04), T(0.04), T(0.04)});
}

template <typename T>
LatentFitResult<T> fit_latent(const Objective<T>& obj, const GeneratorWeights<T>& g, const LatentState<T>& init,
                              const FitConfig& cfg) {
    return detail::optimize_latent(g, init, cfg, obj.config(),
                                   [&obj](const ad::Tensor<T>& maps) { return obj.terms(maps); });
}

template <typename T>
LatentFitResult<T> fit_latent(const std::vector<CaptureView>& views, const GeneratorWeights<T>& g,
                              const LatentState<T>& init, const FitConfig& cfg, const LossConfig& loss,
                              const FeatureExtractor<T>& fx) {
    return fit_latent(Objective<T>(views, fx, loss), g, init, cfg);
}

/// Latent state reproducing `target`: map-space mean squared error plus the
/// perceptual term on one on-axis rendering.
template <typename T>
LatentFitResult<T> embed_maps(const SvbrdfMaps<T>& target, const GeneratorWeights<T>& g, const LatentState<T>& init,
                              const FitConfig& cfg, const LossConfig& loss, const FeatureExtractor<T>& fx,
                              const SyntheticCapture& cap = {}) {
    std::string why;
    if (!check_invariants(target, &why)) throw std::invalid_argument("embed_maps: invalid target: " + why);
    const int res = g.config.resolution();
    if (target.width() != res || target.height() != res)
        throw ad::ShapeError("embed_maps: target is " + std::to_string(target.width()) + "x" +
                             std::to_string(target.height()) + ", generator makes " + std::to_string(res));
    const CaptureView view = make_collocated_view(cap.distance, cap.intensity, res);
    const ad::Tensor<T> tmaps = to_tensor(target);
    const LossTarget<T> tview = LossTarget<T>::make(render_op(tmaps, view), fx, loss.space);
    return detail::optimize_latent(g, init, cfg, loss, [&](const ad::Tensor<T>& maps) {
        LossTerms<T> t = loss_terms(render_op(maps, view), tview, fx, loss.space);
        t.pixel = ad::scale(ad::squared_distance(maps, tmaps), T(1) / static_cast<T>(maps.size()));
        return t;
    });
}

template <typename T>
LatentState<T> mean_latent(const GeneratorWeights<T>& g, int samples = 10000, std::uint64_t seed = 0) {
    return {replicate(mean_w(g, samples, seed), g.config.style_slots()).detach(), zero_noise<T>(g.config)};
}

/// Starting latent for `kind` (dual resolves to mean_w here; `fit` runs both).
template <typename T>
LatentState<T> resolve_init(InitKind kind, const GeneratorWeights<T>& g, const FitConfig& cfg) {
    auto load = [&](const std::string& path, const char* what) {
        if (path.empty() || !std::filesystem::exists(path))
            throw std::runtime_error(std::string(what) + " not found: '" + path + "'");
        LatentState<T> s = LatentState<T>::load_file(path);
        s.validate(g.config);
        return s;
    };
    switch (kind) {
        case InitKind::low_rough:
            return load(cfg.preset_file.empty() ? default_preset_path() : cfg.preset_file, "low-roughness preset");
        case InitKind::file: return load(cfg.init_file, "init latent");
        default: return mean_latent(g, cfg.mean_w_samples, cfg.mean_w_seed);
    }
}

/// Latent fit with init resolution, the two-start runner for InitKind::dual
/// (lower final loss wins) and optional pixel-space refinement.
template <typename T>
LatentFitResult<T> fit(const std::vector<CaptureView>& views, const GeneratorWeights<T>& g, const FitConfig& cfg,
                       const LossConfig& loss, const FeatureExtractor<T>& fx) {
    cfg.validate();
    Objective<T> obj(views, fx, loss);
    auto run = [&](InitKind k) {
        LatentFitResult<T> r = fit_latent(obj, g, resolve_init(k, g, cfg), cfg);
        r.init = init_kind_name(k);
        return r;
    };
    LatentFitResult<T> r;
    if (cfg.init == InitKind::dual) {
        r = run(InitKind::mean_w);
        LatentFitResult<T> b = run(InitKind::low_rough);
        if (b.final_loss < r.final_loss || r.diverged) r = std::move(b);
    } else {
        r = run(cfg.init);
    }
    if (cfg.post_refine && !r.diverged && cfg.refine_iterations > 0) {
        DirectFitResult<T> d = fit_direct(obj, r.maps, cfg.refine_iterations, cfg.lr);
        const int offset = r.trace.back().iter + 1;
        for (auto e : d.trace) {
            e.iter += offset;
            e.total = std::min(e.total, r.final_loss);
            r.trace.push_back(e);
        }
        if (d.final_loss < r.final_loss) {
            r.maps = d.maps;
            r.final_loss = d.final_loss;
        }
        r.diverged = d.diverged;
        r.refined = true;
    }
    return r;
}

inline void record(RunManifest& m, const FitConfig& f, const LossConfig& l) {
    m.set_text("fit.strategy", strategy_name(f.strategy));
    m.set_text("fit.space", latent_space_name(f.space));
    m.set("fit.period", f.period);
    m.set("fit.iterations", f.iterations);
    m.set("fit.lr", f.lr);
    m.set_text("fit.init", init_kind_name(f.init));
    if (!f.init_file.empty()) m.set_text("fit.init_file", f.init_file);
    m.set_text("fit.preset_file", f.preset_file.empty() ? default_preset_path() : f.preset_file);
    m.set("fit.mean_w_samples", f.mean_w_samples);
    m.set("fit.mean_w_seed", f.mean_w_seed);
    m.set("fit.post_refine", f.post_refine ? 1 : 0);
    m.set("fit.refine_iterations", f.refine_iterations);
    m.set("loss.lambda_pixel", l.lambda_pixel);
    m.set("loss.lambda_percept", l.lambda_percept);
    for (int j = 0; j < 4; ++j) {
        m.set("loss.latent_weight" + std::to_string(j), l.latent_weights[j]);
        m.set("loss.noise_weight" + std::to_string(j), l.noise_weights[j]);
    }
    m.set_text("loss.space", compare_space_name(l.space));
}

}  // namespace svfit
