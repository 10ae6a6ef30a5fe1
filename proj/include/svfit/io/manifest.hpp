#pragma once

// Capture manifest (JSON) and its conversion into frontal CaptureViews.
//
//   {
//     "size_m": 0.2,               sample edge length; positions use the same unit
//     "resolution": 64,            frontal view is resolution x resolution
//     "views": [ {
//       "id": "v0",                optional, defaults to "view<i>"
//       "image": "v0.png",         relative to the manifest's directory
//       "camera": [x, y, z],       camera position over the sample center
//       "light": [x, y, z],        optional, defaults to "camera"
//       "intensity": 3.0,
//       "exposure": 1.0,           optional multiplier on linear pixel values
//       and at most one of
//       "homography": [9 numbers]  row-major, frontal pixel -> photo pixel
//       "pose": {"intrinsics": [fx, fy, cx, cy], "rotation": [9], "translation": [3]}
//       "markers": [[px, py, u, v], ...]   plane point (px, py) seen at photo pixel (u, v)
//     } ]
//   }
//
// With none of the three the photo must already be frontal at the target
// resolution. With "pose", "camera" may be omitted (taken as -R^T t).
// 8-bit photos are inverse-gamma'd (2.2); 16-bit photos are read as linear.

#include <cmath>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "svfit/io/homography.hpp"
#include "svfit/io/png.hpp"
#include "svfit/render.hpp"

namespace svfit::io {

struct ManifestView {
    std::string id;
    std::string image;
    std::optional<Vec3d> camera;
    std::optional<Vec3d> light;
    double intensity = 1.0;
    double exposure = 1.0;
    std::optional<Mat3> homography;  // frontal pixel -> photo pixel
    struct Pose {
        Eigen::Vector4d intrinsics;
        Mat3 rotation;
        Eigen::Vector3d translation;
    };
    std::optional<Pose> pose;
    std::vector<Correspondence> markers;  // plane -> photo pixel
};

struct CaptureManifest {
    double size_m = 1.0;
    int resolution = 64;
    std::vector<ManifestView> views;
    std::string base_dir = ".";

    /// Frontal pixel -> photo pixel mapping of view `i`.
    Mat3 view_homography(std::size_t i) const {
        const ManifestView& v = views.at(i);
        if (v.homography) return *v.homography;
        const Mat3 P = frontal_to_plane(resolution, size_m);
        if (v.pose) {
            Mat3 K;
            K << v.pose->intrinsics(0), 0, v.pose->intrinsics(2), 0, v.pose->intrinsics(1), v.pose->intrinsics(3),
                0, 0, 1;
            return plane_to_image(K, v.pose->rotation, v.pose->translation) * P;
        }
        if (!v.markers.empty()) return estimate_homography(v.markers).H * P;
        return Mat3::Identity();
    }

    Vec3d camera_position(std::size_t i) const {
        const ManifestView& v = views.at(i);
        if (v.camera) return *v.camera;
        Eigen::Vector3d c = -v.pose->rotation.transpose() * v.pose->translation;
        return {c.x(), c.y(), c.z()};
    }

    void validate() const {
        if (!(size_m > 0)) throw ConfigError("manifest: size_m must be positive");
        if (resolution < 1) throw ConfigError("manifest: resolution must be positive");
        if (views.empty()) throw ConfigError("manifest: at least one view is required");
        for (std::size_t i = 0; i < views.size(); ++i) {
            const ManifestView& v = views[i];
            const std::string who = "manifest view '" + v.id + "'";
            int geo = (v.homography ? 1 : 0) + (v.pose ? 1 : 0) + (v.markers.empty() ? 0 : 1);
            if (geo > 1) throw ConfigError(who + ": give only one of homography, pose, markers");
            if (!v.camera && !v.pose) throw ConfigError(who + ": camera position is required");
            if (!(v.intensity > 0) || !(v.exposure > 0))
                throw ConfigError(who + ": intensity and exposure must be positive");
            if (v.image.empty()) throw ConfigError(who + ": image path is required");
            try {
                check_invertible(view_homography(i));
            } catch (const GeometryError& e) {
                throw ConfigError(who + ": " + e.what());
            }
        }
    }
};

namespace detail {

inline Vec3d vec3(const nlohmann::json& j, const char* what) {
    if (!j.is_array() || j.size() != 3) throw ConfigError(std::string("manifest: ") + what + " needs 3 numbers");
    return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

inline Mat3 mat3(const nlohmann::json& j, const char* what) {
    if (!j.is_array() || j.size() != 9) throw ConfigError(std::string("manifest: ") + what + " needs 9 numbers");
    Mat3 m;
    for (int k = 0; k < 9; ++k) m(k / 3, k % 3) = j[k].get<double>();
    return m;
}

inline nlohmann::json to_json(const Vec3d& v) { return {v.x, v.y, v.z}; }
inline nlohmann::json to_json(const Mat3& m) {
    nlohmann::json j = nlohmann::json::array();
    for (int k = 0; k < 9; ++k) j.push_back(m(k / 3, k % 3));
    return j;
}

}  // namespace detail

inline CaptureManifest parse_manifest(const std::string& text, const std::string& base_dir = ".") {
    CaptureManifest m;
    m.base_dir = base_dir;
    try {
        auto j = nlohmann::json::parse(text);
        m.size_m = j.at("size_m").get<double>();
        m.resolution = j.at("resolution").get<int>();
        int i = 0;
        for (const auto& jv : j.at("views")) {
            ManifestView v;
            v.id = jv.value("id", "view" + std::to_string(i));
            v.image = jv.at("image").get<std::string>();
            if (jv.contains("camera")) v.camera = detail::vec3(jv["camera"], "camera");
            if (jv.contains("light")) v.light = detail::vec3(jv["light"], "light");
            v.intensity = jv.at("intensity").get<double>();
            v.exposure = jv.value("exposure", 1.0);
            if (jv.contains("homography")) v.homography = detail::mat3(jv["homography"], "homography");
            if (jv.contains("pose")) {
                const auto& p = jv["pose"];
                ManifestView::Pose pose;
                const auto& in = p.at("intrinsics");
                if (!in.is_array() || in.size() != 4) throw ConfigError("manifest: intrinsics needs 4 numbers");
                for (int k = 0; k < 4; ++k) pose.intrinsics(k) = in[k].get<double>();
                pose.rotation = detail::mat3(p.at("rotation"), "rotation");
                Vec3d t = detail::vec3(p.at("translation"), "translation");
                pose.translation = {t.x, t.y, t.z};
                v.pose = pose;
            }
            if (jv.contains("markers"))
                for (const auto& mk : jv["markers"]) {
                    if (!mk.is_array() || mk.size() != 4)
                        throw ConfigError("manifest: each marker needs [px, py, u, v]");
                    v.markers.push_back({{mk[0].get<double>(), mk[1].get<double>()},
                                         {mk[2].get<double>(), mk[3].get<double>()}});
                }
            m.views.push_back(std::move(v));
            ++i;
        }
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("manifest: ") + e.what());
    }
    m.validate();
    return m;
}

inline CaptureManifest load_manifest(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot read manifest " + path);
    std::stringstream ss;
    ss << is.rdbuf();
    auto dir = std::filesystem::path(path).parent_path().string();
    return parse_manifest(ss.str(), dir.empty() ? "." : dir);
}

inline std::string manifest_to_json(const CaptureManifest& m) {
    nlohmann::json j;
    j["size_m"] = m.size_m;
    j["resolution"] = m.resolution;
    j["views"] = nlohmann::json::array();
    for (const auto& v : m.views) {
        nlohmann::json jv;
        jv["id"] = v.id;
        jv["image"] = v.image;
        if (v.camera) jv["camera"] = detail::to_json(*v.camera);
        if (v.light) jv["light"] = detail::to_json(*v.light);
        jv["intensity"] = v.intensity;
        jv["exposure"] = v.exposure;
        if (v.homography) jv["homography"] = detail::to_json(*v.homography);
        if (v.pose) {
            const auto& p = *v.pose;
            jv["pose"] = {{"intrinsics", {p.intrinsics(0), p.intrinsics(1), p.intrinsics(2), p.intrinsics(3)}},
                          {"rotation", detail::to_json(p.rotation)},
                          {"translation", {p.translation.x(), p.translation.y(), p.translation.z()}}};
        }
        if (!v.markers.empty()) {
            jv["markers"] = nlohmann::json::array();
            for (const auto& c : v.markers) jv["markers"].push_back({c.src.x(), c.src.y(), c.dst.x(), c.dst.y()});
        }
        j["views"].push_back(jv);
    }
    return j.dump(2);
}

/// Linear radiance of a photograph: 8-bit inverse gamma 2.2, 16-bit as is,
/// then times `exposure`. Gray images are replicated to RGB.
inline Image<float> load_linear_image(const std::string& path, double exposure = 1.0) {
    PngData p = read_png(path);
    Image<float> img(p.width, p.height, 3);
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < p.height; ++y)
            for (int x = 0; x < p.width; ++x) {
                double v = p.at(p.channels == 3 ? c : 0, y, x);
                if (p.bit_depth == 8) v = std::pow(v, 2.2);
                img.at(c, y, x) = static_cast<float>(v * exposure);
            }
    return img;
}

/// Reads, linearizes and rectifies every view. The frontal region must lie
/// inside each photograph.
inline std::vector<CaptureView> load_views(const CaptureManifest& m) {
    m.validate();
    std::vector<CaptureView> out;
    for (std::size_t i = 0; i < m.views.size(); ++i) {
        const ManifestView& v = m.views[i];
        Image<float> photo = load_linear_image((std::filesystem::path(m.base_dir) / v.image).string(), v.exposure);
        Rectified r = rectify(photo, m.view_homography(i), m.resolution, m.resolution);
        if (r.valid_count() != r.valid.size())
            throw ConfigError("view '" + v.id + "': " + std::to_string(r.valid.size() - r.valid_count()) +
                              " frontal pixels fall outside the photograph");
        CaptureView cv;
        cv.id = v.id;
        cv.camera_position = m.camera_position(i);
        cv.light_position = v.light ? *v.light : cv.camera_position;
        cv.light_intensity = v.intensity;
        cv.plane_size = m.size_m;
        cv.width = cv.height = m.resolution;
        cv.image = std::move(r.image);
        cv.validate();
        out.push_back(std::move(cv));
    }
    return out;
}

/// Writes frontal views (images as 16-bit linear PNG, clamped to [0,1]) and
/// a manifest.json describing them into `dir`.
inline CaptureManifest save_capture(const std::string& dir, const std::vector<CaptureView>& views) {
    if (views.empty()) throw std::invalid_argument("save_capture: no views");
    std::filesystem::create_directories(dir);
    CaptureManifest m;
    m.base_dir = dir;
    m.size_m = views[0].plane_size;
    m.resolution = views[0].width;
    for (const auto& cv : views) {
        if (cv.width != m.resolution || cv.height != m.resolution || cv.image.empty())
            throw std::invalid_argument("save_capture: views must be square, equal-sized and carry images");
        ManifestView v;
        v.id = cv.id;
        v.image = cv.id + ".png";
        v.camera = cv.camera_position;
        v.light = cv.light_position;
        v.intensity = cv.light_intensity;
        std::vector<double> planes(cv.image.data.begin(), cv.image.data.end());
        write_png16(dir + "/" + v.image, cv.width, cv.height, 3, planes);
        m.views.push_back(std::move(v));
    }
    std::ofstream os(dir + "/manifest.json");
    if (!os) throw std::runtime_error("cannot write " + dir + "/manifest.json");
    os << manifest_to_json(m) << "\n";
    return m;
}

}  // namespace svfit::io
