#pragma once

// Point-light renderer for a planar sample with hand-derived adjoints.
//
// The sample occupies the square [-size/2, size/2]^2 on the z = 0 plane. Pixel
// (row i, column j) maps orthographically to its plane point; the camera
// position only enters through the view direction.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include "svfit/material.hpp"

namespace svfit {

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Planar multi-channel image (channel-major).
template <typename T>
struct Image {
    int width = 0;
    int height = 0;
    int channels = 0;
    std::vector<T> data;

    Image() = default;
    Image(int w, int h, int c, T fill = T(0))
        : width(w), height(h), channels(c), data(static_cast<std::size_t>(w) * h * c, fill) {}

    T& at(int c, int y, int x) { return data[(static_cast<std::size_t>(c) * height + y) * width + x]; }
    T at(int c, int y, int x) const { return data[(static_cast<std::size_t>(c) * height + y) * width + x]; }
    bool empty() const { return data.empty(); }

    template <typename U>
    Image<U> cast() const {
        Image<U> out(width, height, channels);
        std::transform(data.begin(), data.end(), out.data.begin(),
                       [](T v) { return static_cast<U>(v); });
        return out;
    }
};

enum class Projection { orthographic };

/// One measurement: flash/camera configuration plus (optionally) the photo.
struct CaptureView {
    std::string id;
    Vec3d camera_position{0, 0, 1};
    Vec3d light_position{0, 0, 1};
    double light_intensity = 1.0;
    double plane_size = 1.0;
    int width = 0;
    int height = 0;
    Projection projection = Projection::orthographic;
    Image<float> image;  // linear radiance, may be empty for synthetic views

    void validate() const {
        if (!(camera_position.z > 0)) throw ConfigError("view '" + id + "': camera must be above the plane");
        if (width <= 0 || height <= 0) throw ConfigError("view '" + id + "': resolution must be positive");
        if (!image.empty()) {
            if (image.width != width || image.height != height || image.channels != 3)
                throw ConfigError("view '" + id + "': image size does not match view resolution");
            for (float v : image.data)
                if (!(v >= 0.0f) || !std::isfinite(v))
                    throw ConfigError("view '" + id + "': image values must be finite and non-negative");
        }
    }
};

inline Vec3d pixel_position(const CaptureView& view, int row, int col) {
    double s = view.plane_size;
    return {((col + 0.5) / view.width - 0.5) * s, (0.5 - (row + 0.5) / view.height) * s, 0.0};
}

/// Camera and flash collocated at (offset, distance), square image.
inline CaptureView make_collocated_view(double distance, double intensity, int resolution,
                                        double offset_x = 0.0, double offset_y = 0.0) {
    if (!(distance > 0)) throw ConfigError("make_collocated_view: distance must be positive");
    CaptureView v;
    v.camera_position = {offset_x, offset_y, distance};
    v.light_position = v.camera_position;
    v.light_intensity = intensity;
    v.width = v.height = resolution;
    return v;
}

/// 3x3 grid of collocated views spaced `spacing` apart, row-major from top-left.
inline std::vector<CaptureView> capture_grid(double distance, double intensity, int resolution,
                                             double spacing = 1.0 / 3.0) {
    std::vector<CaptureView> views;
    for (int gy = 1; gy >= -1; --gy)
        for (int gx = -1; gx <= 1; ++gx) {
            CaptureView v = make_collocated_view(distance, intensity, resolution, gx * spacing, gy * spacing);
            v.id = "grid_" + std::to_string(views.size());
            views.push_back(std::move(v));
        }
    return views;
}

namespace detail {

template <typename T>
struct PixelGeometry {
    Vec3<T> wi, wo, h;
    T falloff;  // intensity / squared light distance
};

template <typename T>
PixelGeometry<T> pixel_geometry(const CaptureView& view, int row, int col) {
    Vec3d p = pixel_position(view, row, col);
    Vec3d to_light = view.light_position - p;
    Vec3d to_cam = view.camera_position - p;
    double d2 = dot(to_light, to_light);
    Vec3d wi = normalize(to_light);
    Vec3d wo = normalize(to_cam);
    Vec3d h = normalize(wi + wo);
    auto cv = [](const Vec3d& v) { return Vec3<T>{T(v.x), T(v.y), T(v.z)}; };
    return {cv(wi), cv(wo), cv(h), T(view.light_intensity / d2)};
}

template <typename T>
void check_sizes(const SvbrdfMaps<T>& maps, const CaptureView& view) {
    if (maps.width() != view.width || maps.height() != view.height)
        throw ConfigError("render: maps are " + std::to_string(maps.width()) + "x" +
                          std::to_string(maps.height()) + " but view '" + view.id + "' expects " +
                          std::to_string(view.width) + "x" + std::to_string(view.height));
}

}  // namespace detail

template <typename T>
Image<T> render(const SvbrdfMaps<T>& maps, const CaptureView& view) {
    detail::check_sizes(maps, view);
    Image<T> out(view.width, view.height, 3);
    for (int y = 0; y < view.height; ++y)
        for (int x = 0; x < view.width; ++x) {
            auto g = detail::pixel_geometry<T>(view, y, x);
            ShadingPoint<T> sp{maps.albedo(y, x),
                               decode_normal(maps.at(SvbrdfMaps<T>::kNormal, y, x),
                                             maps.at(SvbrdfMaps<T>::kNormal + 1, y, x)),
                               maps.roughness(y, x), maps.specular(y, x), g.wi, g.wo};
            T cos_i = dot(sp.normal, sp.wi);
            if (cos_i <= T(0)) continue;
            Vec3<T> f = brdf_eval(sp);
            for (int c = 0; c < 3; ++c) out.at(c, y, x) = f[c] * cos_i * g.falloff;
        }
    return out;
}

/// Adjoint of `render`: given dL/d(image), returns dL/d(maps).
///
/// Per channel, out_c = K (a_c n.wi / pi + D G1(n.wi) G1(n.wo) F_c / (4 n.wo)),
/// which is differentiated in closed form; normals are chained through the
/// xy -> unit-vector decoding.
template <typename T>
SvbrdfMaps<T> render_backward(const SvbrdfMaps<T>& maps, const CaptureView& view, const Image<T>& d_out) {
    detail::check_sizes(maps, view);
    if (d_out.width != view.width || d_out.height != view.height || d_out.channels != 3)
        throw ConfigError("render_backward: adjoint image has the wrong shape");
    using M = SvbrdfMaps<T>;
    M grad(maps.width(), maps.height());
    const T inv_pi = T(1.0 / kPi);
    for (int y = 0; y < view.height; ++y)
        for (int x = 0; x < view.width; ++x) {
            T dr = d_out.at(0, y, x), dg = d_out.at(1, y, x), db = d_out.at(2, y, x);
            if (dr == T(0) && dg == T(0) && db == T(0)) continue;
            Vec3<T> dcol{dr, dg, db};

            // Normal decoding with its Jacobian w.r.t. the stored xy.
            T sx = maps.at(M::kNormal, y, x), sy = maps.at(M::kNormal + 1, y, x);
            T r2 = sx * sx + sy * sy;
            T px = sx, py = sy;
            // J = d(px,py)/d(sx,sy)
            T j00 = 1, j01 = 0, j10 = 0, j11 = 1;
            if (r2 > T(1)) {
                T r = std::sqrt(r2), r3 = r2 * r;
                px = sx / r;
                py = sy / r;
                j00 = sy * sy / r3;
                j01 = -sx * sy / r3;
                j10 = -sx * sy / r3;
                j11 = sx * sx / r3;
            }
            // Projected normals lie on the horizon: z is identically zero there.
            T zz = r2 > T(1) ? T(0) : std::max(T(0), T(1) - px * px - py * py);
            T nz = std::sqrt(zz);
            Vec3<T> n = normalize(Vec3<T>{px, py, nz});

            auto g = detail::pixel_geometry<T>(view, y, x);
            T n_i = dot(n, g.wi), n_o = dot(n, g.wo);
            if (n_i <= T(0) || n_o <= T(0)) continue;
            T n_h = std::max(T(0), dot(n, g.h));
            T K = g.falloff;

            T rough = maps.roughness(y, x);
            T alpha = rough * rough, a2 = alpha * alpha;
            T q = n_h * n_h * (a2 - T(1)) + T(1);
            T D = a2 / (T(kPi) * q * q);
            T dD_dalpha = T(2) * alpha / (T(kPi) * q * q * q) * (q - T(2) * a2 * n_h * n_h);
            T dD_dnh = T(-4) * a2 * n_h * (a2 - T(1)) / (T(kPi) * q * q * q);

            auto g1 = [&](T c, T& dg_dc, T& dg_dalpha) {
                T t = std::sqrt(a2 + (T(1) - a2) * c * c);
                T s = c + t;
                T val = T(2) * c / s;
                T dt_dc = (T(1) - a2) * c / t;
                T dt_da = alpha * (T(1) - c * c) / t;
                dg_dc = T(2) * (t - c * dt_dc) / (s * s);
                dg_dalpha = T(-2) * c / (s * s) * dt_da;
                return val;
            };
            T dGi_dc, dGi_da, dGo_dc, dGo_da;
            T Gi = g1(n_i, dGi_dc, dGi_da);
            T Go = g1(n_o, dGo_dc, dGo_da);
            T G = Gi * Go;
            T dG_dalpha = dGi_da * Go + Gi * dGo_da;

            T vh = std::clamp(dot(g.wo, g.h), T(0), T(1));
            T m = T(1) - vh;
            T m5 = m * m * m * m * m;
            Vec3<T> s = maps.specular(y, x);
            Vec3<T> F{s.x + (T(1) - s.x) * m5, s.y + (T(1) - s.y) * m5, s.z + (T(1) - s.z) * m5};

            // Adjoint-weighted Fresnel sum: sum_c dcol_c F_c.
            T wF = dcol.x * F.x + dcol.y * F.y + dcol.z * F.z;
            T wA = 0;
            for (int c = 0; c < 3; ++c) {
                grad.at(M::kAlbedo + c, y, x) = dcol[c] * K * n_i * inv_pi;
                grad.at(M::kSpecular + c, y, x) = dcol[c] * K * D * G / (T(4) * n_o) * (T(1) - m5);
                wA += dcol[c] * maps.at(M::kAlbedo + c, y, x);
            }
            T dL_dalpha = K * wF / (T(4) * n_o) * (dD_dalpha * G + D * dG_dalpha);
            grad.at(M::kRoughness, y, x) = dL_dalpha * T(2) * rough;

            T dL_dni = K * (wA * inv_pi + D * dGi_dc * Go * wF / (T(4) * n_o));
            T dL_dno = K * D * Gi * wF / T(4) * (dGo_dc / n_o - Go / (n_o * n_o));
            T dL_dnh = K * dD_dnh * G * wF / (T(4) * n_o);
            Vec3<T> dn = g.wi * dL_dni + g.wo * dL_dno + g.h * dL_dnh;

            // n = (px, py, sqrt(1 - px^2 - py^2)) lies on the sphere, so the
            // renormalization contributes nothing to first order.
            T dpx = dn.x, dpy = dn.y;
            if (zz > T(0)) {
                T zsafe = std::max(nz, T(1e-6));
                dpx -= dn.z * px / zsafe;
                dpy -= dn.z * py / zsafe;
            }
            grad.at(M::kNormal, y, x) = j00 * dpx + j10 * dpy;
            grad.at(M::kNormal + 1, y, x) = j01 * dpx + j11 * dpy;
        }
    return grad;
}

}  // namespace svfit
