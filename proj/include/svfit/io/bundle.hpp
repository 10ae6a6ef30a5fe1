#pragma once

// Map bundle: a directory holding albedo.png, normal.png, roughness.png and
// specular.png as 16-bit PNGs. Albedo and specular are linear RGB, roughness
// is gray, normal stores (x+1)/2, (y+1)/2 in R and G; B holds (z+1)/2 for
// viewing and is ignored on load. Normal codes are 32768 + round(32767 v), so
// that 0 and +-1 are exact.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

#include "svfit/io/png.hpp"
#include "svfit/material.hpp"

namespace svfit::io {

inline constexpr const char* kBundleFiles[4] = {"albedo.png", "normal.png", "roughness.png", "specular.png"};

inline double encode_normal_component(double v) {
    v = std::min(std::max(v, -1.0), 1.0);
    return (32768.0 + std::round(32767.0 * v)) / 65535.0;
}

inline double decode_normal_component(double stored) {
    return (std::round(stored * 65535.0) - 32768.0) / 32767.0;
}

template <typename T>
void save_bundle(const SvbrdfMaps<T>& maps, const std::string& dir) {
    std::filesystem::create_directories(dir);
    const int w = maps.width(), h = maps.height();
    const std::size_t n = maps.pixels();
    auto rgb = [&](int c0) {
        std::vector<double> v(3 * n);
        for (int c = 0; c < 3; ++c)
            for (std::size_t i = 0; i < n; ++i) v[c * n + i] = maps.plane(c0 + c)[i];
        return v;
    };
    write_png16(dir + "/albedo.png", w, h, 3, rgb(SvbrdfMaps<T>::kAlbedo));
    write_png16(dir + "/specular.png", w, h, 3, rgb(SvbrdfMaps<T>::kSpecular));
    std::vector<double> r(maps.plane(SvbrdfMaps<T>::kRoughness).begin(), maps.plane(SvbrdfMaps<T>::kRoughness).end());
    write_png16(dir + "/roughness.png", w, h, 1, r);
    std::vector<double> nv(3 * n);
    for (std::size_t i = 0; i < n; ++i) {
        double x = maps.plane(SvbrdfMaps<T>::kNormal)[i], y = maps.plane(SvbrdfMaps<T>::kNormal + 1)[i];
        double z = std::sqrt(std::max(0.0, 1.0 - x * x - y * y));
        nv[i] = encode_normal_component(x);
        nv[n + i] = encode_normal_component(y);
        nv[2 * n + i] = encode_normal_component(z);
    }
    write_png16(dir + "/normal.png", w, h, 3, nv);
}

/// Decodes a bundle. Values are taken as stored; normals that quantization
/// pushed just outside the unit disk are projected back.
template <typename T>
SvbrdfMaps<T> load_bundle(const std::string& dir) {
    for (const char* f : kBundleFiles)
        if (!std::filesystem::exists(dir + "/" + f)) throw std::runtime_error("bundle " + dir + ": missing " + f);
    PngData a = read_png(dir + "/albedo.png"), nm = read_png(dir + "/normal.png"),
            r = read_png(dir + "/roughness.png"), s = read_png(dir + "/specular.png");
    for (const PngData* p : {&nm, &r, &s})
        if (p->width != a.width || p->height != a.height)
            throw std::runtime_error("bundle " + dir + ": map sizes differ");
    if (a.channels != 3 || s.channels != 3 || nm.channels != 3)
        throw std::runtime_error("bundle " + dir + ": albedo, normal and specular must be RGB");
    SvbrdfMaps<T> m(a.width, a.height);
    const std::size_t n = m.pixels();
    for (int c = 0; c < 3; ++c)
        for (std::size_t i = 0; i < n; ++i) {
            m.plane(SvbrdfMaps<T>::kAlbedo + c)[i] = T(a.planes[c * n + i]);
            m.plane(SvbrdfMaps<T>::kSpecular + c)[i] = T(s.planes[c * n + i]);
        }
    for (std::size_t i = 0; i < n; ++i) {
        m.plane(SvbrdfMaps<T>::kRoughness)[i] = T(r.planes[i]);  // gray, or R of an RGB file
        T x = T(decode_normal_component(nm.planes[i])), y = T(decode_normal_component(nm.planes[n + i]));
        project_to_disk(x, y);
        m.plane(SvbrdfMaps<T>::kNormal)[i] = x;
        m.plane(SvbrdfMaps<T>::kNormal + 1)[i] = y;
    }
    return m;
}

}  // namespace svfit::io
