#pragma once

// Error metrics for fitted materials and latent-space morphing.

#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "svfit/generator.hpp"
#include "svfit/loss.hpp"
#include "svfit/maps_tensor.hpp"
#include "svfit/render.hpp"

namespace svfit {

struct MapErrors {
    double albedo = 0;          // channel RMSE
    double normal_deg = 0;      // RMS angle between decoded normals, degrees
    double normal_channel = 0;  // channel RMSE of the stored xy
    double roughness = 0;
    double specular = 0;
    double overall = 0;         // channel RMSE over all 9 channels
};

template <typename T>
MapErrors map_rmse(const SvbrdfMaps<T>& a, const SvbrdfMaps<T>& b) {
    if (a.width() != b.width() || a.height() != b.height())
        throw std::invalid_argument("map_rmse: map sizes differ");
    const std::size_t n = a.pixels();
    auto channels = [&](int c0, int count) {
        double s = 0;
        for (int c = c0; c < c0 + count; ++c)
            for (std::size_t i = 0; i < n; ++i) {
                double d = static_cast<double>(a.plane(c)[i]) - static_cast<double>(b.plane(c)[i]);
                s += d * d;
            }
        return s;
    };
    MapErrors e;
    e.albedo = std::sqrt(channels(SvbrdfMaps<T>::kAlbedo, 3) / (3.0 * n));
    e.normal_channel = std::sqrt(channels(SvbrdfMaps<T>::kNormal, 2) / (2.0 * n));
    e.roughness = std::sqrt(channels(SvbrdfMaps<T>::kRoughness, 1) / n);
    e.specular = std::sqrt(channels(SvbrdfMaps<T>::kSpecular, 3) / (3.0 * n));
    e.overall = std::sqrt(channels(0, 9) / (9.0 * n));
    double s = 0;
    for (std::size_t i = 0; i < n; ++i) {
        Vec3<double> na = decode_normal<double>(a.plane(SvbrdfMaps<T>::kNormal)[i], a.plane(SvbrdfMaps<T>::kNormal + 1)[i]);
        Vec3<double> nb = decode_normal<double>(b.plane(SvbrdfMaps<T>::kNormal)[i], b.plane(SvbrdfMaps<T>::kNormal + 1)[i]);
        if (na.x == nb.x && na.y == nb.y && na.z == nb.z) continue;
        Vec3<double> c{na.y * nb.z - na.z * nb.y, na.z * nb.x - na.x * nb.z, na.x * nb.y - na.y * nb.x};
        double ang = std::atan2(length(c), dot(na, nb));
        s += ang * ang;
    }
    e.normal_deg = std::sqrt(s / n) * 180.0 / kPi;
    return e;
}

/// RMSE between a rendering and a photo after clamping to [0,1] and gamma 1/2.2.
template <typename T>
double display_rmse(const Image<T>& a, const Image<float>& b) {
    if (a.width != b.width || a.height != b.height || a.channels != b.channels)
        throw std::invalid_argument("display_rmse: image sizes differ");
    auto enc = [](double v) { return std::pow(std::min(std::max(v, 0.0), 1.0), 1.0 / 2.2); };
    double s = 0;
    for (std::size_t i = 0; i < a.data.size(); ++i) {
        double d = enc(static_cast<double>(a.data[i])) - enc(static_cast<double>(b.data[i]));
        s += d * d;
    }
    return std::sqrt(s / a.data.size());
}

struct EvalReport {
    bool has_ground_truth = false;
    MapErrors maps;
    std::vector<std::pair<std::string, double>> fit_view_rmse;
    std::vector<std::pair<std::string, double>> novel_view_rmse;
    double novel_feature_distance = 0;

    static double mean(const std::vector<std::pair<std::string, double>>& v) {
        if (v.empty()) return 0;
        double s = 0;
        for (const auto& p : v) s += p.second;
        return s / v.size();
    }
    double fit_rmse() const { return mean(fit_view_rmse); }
    double novel_rmse() const { return mean(novel_view_rmse); }

    std::string to_text() const {
        std::ostringstream os;
        os.precision(10);
        if (has_ground_truth) {
            os << "map.albedo_rmse=" << maps.albedo << "\n"
               << "map.normal_deg=" << maps.normal_deg << "\n"
               << "map.normal_rmse=" << maps.normal_channel << "\n"
               << "map.roughness_rmse=" << maps.roughness << "\n"
               << "map.specular_rmse=" << maps.specular << "\n"
               << "map.overall_rmse=" << maps.overall << "\n";
        }
        for (const auto& [id, v] : fit_view_rmse) os << "fit_view." << id << "=" << v << "\n";
        for (const auto& [id, v] : novel_view_rmse) os << "novel_view." << id << "=" << v << "\n";
        os << "fit_view.mean=" << fit_rmse() << "\n";
        os << "novel_view.mean=" << novel_rmse() << "\n";
        os << "novel_feature_distance=" << novel_feature_distance << "\n";
        return os.str();
    }

    static EvalReport from_text(const std::string& text) {
        EvalReport r;
        std::istringstream is(text);
        std::string line;
        while (std::getline(is, line)) {
            if (line.empty()) continue;
            auto eq = line.find('=');
            if (eq == std::string::npos) throw std::runtime_error("EvalReport: malformed line '" + line + "'");
            const std::string k = line.substr(0, eq);
            const double v = std::stod(line.substr(eq + 1));
            auto starts = [&](const char* p) { return k.rfind(p, 0) == 0; };
            if (starts("map.")) r.has_ground_truth = true;
            if (k == "map.albedo_rmse") r.maps.albedo = v;
            else if (k == "map.normal_deg") r.maps.normal_deg = v;
            else if (k == "map.normal_rmse") r.maps.normal_channel = v;
            else if (k == "map.roughness_rmse") r.maps.roughness = v;
            else if (k == "map.specular_rmse") r.maps.specular = v;
            else if (k == "map.overall_rmse") r.maps.overall = v;
            else if (k == "novel_feature_distance") r.novel_feature_distance = v;
            else if (k == "fit_view.mean" || k == "novel_view.mean") continue;
            else if (starts("fit_view.")) r.fit_view_rmse.emplace_back(k.substr(9), v);
            else if (starts("novel_view.")) r.novel_view_rmse.emplace_back(k.substr(11), v);
            else throw std::runtime_error("EvalReport: unknown metric '" + k + "'");
        }
        return r;
    }

    void save(const std::string& path) const {
        std::ofstream os(path);
        if (!os) throw std::runtime_error("cannot write " + path);
        os << to_text();
    }
};

/// Scores `maps` on the views it was fitted to and on held-out views. View
/// sets are matched by id and must be disjoint.
template <typename T>
EvalReport eval_fit(const SvbrdfMaps<T>& maps, const SvbrdfMaps<T>* ground_truth,
                    const std::vector<CaptureView>& fit_views, const std::vector<CaptureView>& novel_views,
                    const FeatureExtractor<T>& fx, const LossConfig& loss = {}) {
    std::set<std::string> ids;
    for (const auto& v : fit_views) ids.insert(v.id);
    for (const auto& v : novel_views)
        if (ids.count(v.id)) throw std::invalid_argument("eval_fit: view '" + v.id + "' is in both view sets");
    EvalReport r;
    if (ground_truth) {
        r.maps = map_rmse(maps, *ground_truth);
        r.has_ground_truth = true;
    }
    auto score = [&](const CaptureView& v) {
        if (v.image.empty()) throw std::invalid_argument("eval_fit: view '" + v.id + "' has no image");
        return display_rmse(render(maps, v), v.image);
    };
    for (const auto& v : fit_views) r.fit_view_rmse.emplace_back(v.id, score(v));
    const ad::Tensor<T> mt = to_tensor(maps);
    for (const auto& v : novel_views) {
        r.novel_view_rmse.emplace_back(v.id, score(v));
        auto target = LossTarget<T>::make(ad::Tensor<T>::from({1, 3, v.height, v.width},
                                                              std::vector<T>(v.image.data.begin(), v.image.data.end())),
                                          fx, loss.space);
        r.novel_feature_distance += loss_terms(render_op(mt, v), target, fx, loss.space).percept_value(loss.latent_weights);
    }
    return r;
}

template <typename T>
struct MorphResult {
    std::vector<SvbrdfMaps<T>> latent;   // decoded lerp_latent(a, b, t_i)
    std::vector<SvbrdfMaps<T>> pixel;    // per-pixel lerp of the decoded parents
    std::vector<Image<T>> latent_renders;
    std::vector<Image<T>> pixel_renders;
};

template <typename T>
MorphResult<T> morph(const GeneratorWeights<T>& g, const LatentState<T>& a, const LatentState<T>& b, int steps,
                     const CaptureView& view) {
    if (steps < 2) throw std::invalid_argument("morph: steps must be >= 2");
    a.validate(g.config);
    b.validate(g.config);
    MorphResult<T> r;
    const SvbrdfMaps<T> pa = to_maps(synthesize(g, a)), pb = to_maps(synthesize(g, b));
    for (int i = 0; i < steps; ++i) {
        const double t = static_cast<double>(i) / (steps - 1);
        r.latent.push_back(i == 0 ? pa : (i == steps - 1 ? pb : to_maps(synthesize(g, lerp_latent(a, b, t)))));
        SvbrdfMaps<T> p(pa.width(), pa.height());
        for (std::size_t k = 0; k < p.data().size(); ++k)
            p.data()[k] = T((1.0 - t) * pa.data()[k] + t * pb.data()[k]);
        r.pixel.push_back(std::move(p));
        r.latent_renders.push_back(render(r.latent.back(), view));
        r.pixel_renders.push_back(render(r.pixel.back(), view));
    }
    return r;
}

}  // namespace svfit
