#pragma once

// Per-pixel SVBRDF model: map storage plus the scalar GGX microfacet terms.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace svfit {

inline constexpr double kPi = 3.14159265358979323846;

/// Lower bound of the stored roughness map. GGX width is roughness squared.
inline constexpr double kRoughnessMin = 0.02;

template <typename T>
struct Vec3 {
    T x{}, y{}, z{};

    constexpr Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
    constexpr Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
    constexpr Vec3 operator*(T s) const { return {x * s, y * s, z * s}; }
    constexpr Vec3& operator+=(const Vec3& o) {
        x += o.x;
        y += o.y;
        z += o.z;
        return *this;
    }
    constexpr T operator[](int i) const { return i == 0 ? x : (i == 1 ? y : z); }
    constexpr T& operator[](int i) { return i == 0 ? x : (i == 1 ? y : z); }
};

template <typename T>
constexpr T dot(const Vec3<T>& a, const Vec3<T>& b) {
    return a.x * b.x + a.y * b.y + a.z * b.z;
}

template <typename T>
T length(const Vec3<T>& v) {
    return std::sqrt(dot(v, v));
}

template <typename T>
Vec3<T> normalize(const Vec3<T>& v) {
    T len = length(v);
    return len > T(0) ? v * (T(1) / len) : v;
}

using Vec3d = Vec3<double>;

/// Stacked 9-channel material maps, planar layout:
/// albedo RGB (0-2), normal xy (3-4), roughness (5), specular RGB (6-8).
template <typename T>
class SvbrdfMaps {
public:
    static constexpr int kChannels = 9;
    static constexpr int kAlbedo = 0;
    static constexpr int kNormal = 3;
    static constexpr int kRoughness = 5;
    static constexpr int kSpecular = 6;

    SvbrdfMaps() = default;
    SvbrdfMaps(int width, int height)
        : width_(width), height_(height),
          data_(static_cast<std::size_t>(kChannels) * width * height, T(0)) {
        if (width <= 0 || height <= 0)
            throw std::invalid_argument("SvbrdfMaps: dimensions must be positive");
    }

    static SvbrdfMaps constant(int width, int height, Vec3<T> albedo, T nx, T ny, T roughness,
                               Vec3<T> specular) {
        SvbrdfMaps m(width, height);
        for (int y = 0; y < height; ++y)
            for (int x = 0; x < width; ++x) {
                m.set_albedo(y, x, albedo);
                m.at(kNormal, y, x) = nx;
                m.at(kNormal + 1, y, x) = ny;
                m.at(kRoughness, y, x) = roughness;
                m.set_specular(y, x, specular);
            }
        return m;
    }

    int width() const { return width_; }
    int height() const { return height_; }
    std::size_t pixels() const { return static_cast<std::size_t>(width_) * height_; }
    bool empty() const { return data_.empty(); }

    T& at(int c, int y, int x) { return data_[(static_cast<std::size_t>(c) * height_ + y) * width_ + x]; }
    T at(int c, int y, int x) const { return data_[(static_cast<std::size_t>(c) * height_ + y) * width_ + x]; }

    std::span<T> plane(int c) { return {data_.data() + c * pixels(), pixels()}; }
    std::span<const T> plane(int c) const { return {data_.data() + c * pixels(), pixels()}; }
    std::span<T> data() { return data_; }
    std::span<const T> data() const { return data_; }

    Vec3<T> albedo(int y, int x) const {
        return {at(kAlbedo, y, x), at(kAlbedo + 1, y, x), at(kAlbedo + 2, y, x)};
    }
    Vec3<T> specular(int y, int x) const {
        return {at(kSpecular, y, x), at(kSpecular + 1, y, x), at(kSpecular + 2, y, x)};
    }
    T roughness(int y, int x) const { return at(kRoughness, y, x); }
    void set_albedo(int y, int x, Vec3<T> v) {
        for (int c = 0; c < 3; ++c) at(kAlbedo + c, y, x) = v[c];
    }
    void set_specular(int y, int x, Vec3<T> v) {
        for (int c = 0; c < 3; ++c) at(kSpecular + c, y, x) = v[c];
    }

    template <typename U>
    SvbrdfMaps<U> cast() const {
        SvbrdfMaps<U> out(width_, height_);
        std::transform(data_.begin(), data_.end(), out.data().begin(),
                       [](T v) { return static_cast<U>(v); });
        return out;
    }

private:
    int width_ = 0;
    int height_ = 0;
    std::vector<T> data_;
};

/// Checks every map invariant. On failure returns false and, if `why` is
/// given, stores a short description of the first violation.
template <typename T>
bool check_invariants(const SvbrdfMaps<T>& m, std::string* why = nullptr, double tol = 1e-6) {
    auto fail = [&](const std::string& msg) {
        if (why) *why = msg;
        return false;
    };
    if (m.empty()) return fail("empty maps");
    for (T v : m.data())
        if (!std::isfinite(static_cast<double>(v))) return fail("non-finite value");
    for (int y = 0; y < m.height(); ++y)
        for (int x = 0; x < m.width(); ++x) {
            for (int c = 0; c < 3; ++c) {
                double a = m.at(SvbrdfMaps<T>::kAlbedo + c, y, x);
                double s = m.at(SvbrdfMaps<T>::kSpecular + c, y, x);
                if (a < -tol || a > 1 + tol) return fail("albedo out of [0,1]");
                if (s < -tol || s > 1 + tol) return fail("specular out of [0,1]");
            }
            double r = m.roughness(y, x);
            if (r < kRoughnessMin - tol || r > 1 + tol) return fail("roughness out of [r_min,1]");
            double nx = m.at(SvbrdfMaps<T>::kNormal, y, x);
            double ny = m.at(SvbrdfMaps<T>::kNormal + 1, y, x);
            if (nx * nx + ny * ny > 1 + tol) return fail("normal_xy outside unit disk");
        }
    return true;
}

/// Radially projects (x, y) onto the closed unit disk.
template <typename T>
void project_to_disk(T& x, T& y) {
    T r2 = x * x + y * y;
    if (r2 > T(1)) {
        T inv = T(1) / std::sqrt(r2);
        x *= inv;
        y *= inv;
    }
}

/// Reconstructs a unit normal from its stored tangent-space xy.
template <typename T>
Vec3<T> decode_normal(T x, T y) {
    const bool outside = x * x + y * y > T(1);
    project_to_disk(x, y);
    T z = outside ? T(0) : std::sqrt(std::max(T(0), T(1) - x * x - y * y));
    return normalize(Vec3<T>{x, y, z});
}

template <typename T>
T ggx_ndf(T n_dot_h, T alpha) {
    T a2 = alpha * alpha;
    T q = n_dot_h * n_dot_h * (a2 - T(1)) + T(1);
    return a2 / (T(kPi) * q * q);
}

template <typename T>
T smith_g1(T cos_theta, T alpha) {
    T a2 = alpha * alpha;
    return T(2) * cos_theta / (cos_theta + std::sqrt(a2 + (T(1) - a2) * cos_theta * cos_theta));
}

/// Separable Smith shadowing-masking: G1(n.wi) * G1(n.wo).
template <typename T>
T smith_g(T n_dot_i, T n_dot_o, T alpha) {
    return smith_g1(n_dot_i, alpha) * smith_g1(n_dot_o, alpha);
}

template <typename T>
Vec3<T> fresnel_schlick(T cos_theta, const Vec3<T>& f0) {
    T m = T(1) - cos_theta;
    T m5 = m * m * m * m * m;
    return {f0.x + (T(1) - f0.x) * m5, f0.y + (T(1) - f0.y) * m5, f0.z + (T(1) - f0.z) * m5};
}

template <typename T>
struct ShadingPoint {
    Vec3<T> albedo;
    Vec3<T> normal;
    T roughness{};
    Vec3<T> specular;
    Vec3<T> wi;  // towards the light
    Vec3<T> wo;  // towards the viewer
};

/// Lambertian diffuse plus GGX specular lobe. Black below either horizon.
template <typename T>
Vec3<T> brdf_eval(const ShadingPoint<T>& p) {
    T n_i = dot(p.normal, p.wi);
    T n_o = dot(p.normal, p.wo);
    if (n_i <= T(0) || n_o <= T(0)) return {};
    Vec3<T> h = normalize(p.wi + p.wo);
    T alpha = p.roughness * p.roughness;
    T d = ggx_ndf(std::max(T(0), dot(p.normal, h)), alpha);
    T g = smith_g(n_i, n_o, alpha);
    Vec3<T> f = fresnel_schlick(std::clamp(dot(p.wo, h), T(0), T(1)), p.specular);
    T spec = d * g / (T(4) * n_i * n_o);
    Vec3<T> out;
    for (int c = 0; c < 3; ++c) out[c] = std::max(T(0), p.albedo[c] / T(kPi) + spec * f[c]);
    return out;
}

}  // namespace svfit
