#pragma once

// Planar homographies: normalized DLT estimation and inverse-warp
// rectification. Pixel coordinates put pixel centers at integers, x = column,
// y = row.

#include <Eigen/Dense>

#include <cmath>
#include <stdexcept>
#include <vector>

#include "svfit/render.hpp"

namespace svfit::io {

using Mat3 = Eigen::Matrix3d;
using Pt2 = Eigen::Vector2d;

class GeometryError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct Correspondence {
    Pt2 src;  // e.g. plane or frontal coordinates
    Pt2 dst;  // e.g. photo pixel coordinates
};

struct HomographyFit {
    Mat3 H;             // dst ~ H * src, scaled so that ||H||_F = 1 and H(2,2) >= 0
    double rmse = 0;    // reprojection error in dst units
};

inline Pt2 apply(const Mat3& H, const Pt2& p) {
    Eigen::Vector3d q = H * Eigen::Vector3d(p.x(), p.y(), 1.0);
    return {q.x() / q.z(), q.y() / q.z()};
}

/// Scale-normalized copy (unit Frobenius norm, non-negative H(2,2) or first
/// non-zero entry) for comparing homographies up to scale.
inline Mat3 canonical(const Mat3& H) {
    Mat3 n = H / H.norm();
    double ref = n(2, 2);
    if (std::abs(ref) < 1e-12)
        for (int i = 0; i < 9 && std::abs(ref) < 1e-12; ++i) ref = n(i / 3, i % 3);
    return ref < 0 ? Mat3(-n) : n;
}

inline void check_invertible(const Mat3& H) {
    if (!H.allFinite() || std::abs(canonical(H).determinant()) <= 1e-9)
        throw GeometryError("homography is singular");
}

namespace detail {

/// Similarity taking the points to zero mean and mean distance sqrt(2).
inline Mat3 normalizer(const std::vector<Pt2>& pts) {
    Pt2 c = Pt2::Zero();
    for (const auto& p : pts) c += p;
    c /= static_cast<double>(pts.size());
    double d = 0;
    for (const auto& p : pts) d += (p - c).norm();
    d /= static_cast<double>(pts.size());
    if (d < 1e-12) throw GeometryError("degenerate correspondences: points coincide");
    const double s = std::sqrt(2.0) / d;
    Mat3 T;
    T << s, 0, -s * c.x(), 0, s, -s * c.y(), 0, 0, 1;
    return T;
}

inline bool collinear(const std::vector<Pt2>& pts, const Mat3& T) {
    Eigen::Matrix2d cov = Eigen::Matrix2d::Zero();
    for (const auto& p : pts) {
        Pt2 q = apply(T, p);
        cov += q * q.transpose();
    }
    cov /= static_cast<double>(pts.size());
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(cov);
    return es.eigenvalues()(0) < 1e-10;
}

}  // namespace detail

inline HomographyFit estimate_homography(const std::vector<Correspondence>& cs) {
    if (cs.size() < 4) throw GeometryError("estimate_homography: need at least 4 correspondences");
    std::vector<Pt2> src, dst;
    for (const auto& c : cs) {
        src.push_back(c.src);
        dst.push_back(c.dst);
    }
    const Mat3 Ts = detail::normalizer(src), Td = detail::normalizer(dst);
    if (detail::collinear(src, Ts) || detail::collinear(dst, Td))
        throw GeometryError("degenerate correspondences: points are collinear");

    Eigen::MatrixXd A(2 * cs.size(), 9);
    for (std::size_t i = 0; i < cs.size(); ++i) {
        Pt2 p = apply(Ts, src[i]), q = apply(Td, dst[i]);
        const double x = p.x(), y = p.y(), u = q.x(), v = q.y();
        A.row(2 * i) << -x, -y, -1, 0, 0, 0, u * x, u * y, u;
        A.row(2 * i + 1) << 0, 0, 0, -x, -y, -1, v * x, v * y, v;
    }
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(A, Eigen::ComputeFullV);
    Eigen::VectorXd h = svd.matrixV().col(8);
    Mat3 Hn;
    Hn << h(0), h(1), h(2), h(3), h(4), h(5), h(6), h(7), h(8);
    HomographyFit fit;
    fit.H = canonical(Td.inverse() * Hn * Ts);
    check_invertible(fit.H);
    double se = 0;
    for (const auto& c : cs) se += (apply(fit.H, c.src) - c.dst).squaredNorm();
    fit.rmse = std::sqrt(se / static_cast<double>(cs.size()));
    return fit;
}

/// Inverse warp: output pixel (x, y) samples `src` bilinearly at H * (x, y).
/// Samples whose footprint leaves the source are zero and flagged false.
struct Rectified {
    Image<float> image;
    std::vector<bool> valid;  // per output pixel, row-major
    std::size_t valid_count() const {
        std::size_t n = 0;
        for (bool b : valid) n += b;
        return n;
    }
};

inline Rectified rectify(const Image<float>& src, const Mat3& H, int out_width, int out_height) {
    check_invertible(H);
    if (out_width <= 0 || out_height <= 0) throw std::invalid_argument("rectify: output size must be positive");
    Rectified r{Image<float>(out_width, out_height, src.channels), {}};
    r.valid.assign(static_cast<std::size_t>(out_width) * out_height, false);
    const double eps = 1e-9;
    for (int y = 0; y < out_height; ++y)
        for (int x = 0; x < out_width; ++x) {
            Eigen::Vector3d q = H * Eigen::Vector3d(x, y, 1.0);
            if (!(q.z() > 0 || q.z() < 0)) continue;
            double sx = q.x() / q.z(), sy = q.y() / q.z();
            if (!(sx >= -eps && sy >= -eps && sx <= src.width - 1 + eps && sy <= src.height - 1 + eps)) continue;
            sx = std::min(std::max(sx, 0.0), src.width - 1.0);
            sy = std::min(std::max(sy, 0.0), src.height - 1.0);
            int x0 = std::min(static_cast<int>(std::floor(sx)), src.width - 1);
            int y0 = std::min(static_cast<int>(std::floor(sy)), src.height - 1);
            int x1 = std::min(x0 + 1, src.width - 1), y1 = std::min(y0 + 1, src.height - 1);
            double fx = sx - x0, fy = sy - y0;
            for (int c = 0; c < src.channels; ++c) {
                double top = (1 - fx) * src.at(c, y0, x0) + fx * src.at(c, y0, x1);
                double bot = (1 - fx) * src.at(c, y1, x0) + fx * src.at(c, y1, x1);
                r.image.at(c, y, x) = static_cast<float>((1 - fy) * top + fy * bot);
            }
            r.valid[static_cast<std::size_t>(y) * out_width + x] = true;
        }
    return r;
}

/// Maps frontal output pixels (x = column, y = row) of a `res` x `res` view
/// of a `size` x `size` sample to plane coordinates, matching pixel_position.
inline Mat3 frontal_to_plane(int res, double size) {
    const double s = size / res;
    Mat3 P;
    P << s, 0, (0.5 - res / 2.0) * s, 0, -s, (res / 2.0 - 0.5) * s, 0, 0, 1;
    return P;
}

/// Plane -> photo pixel homography of a pinhole camera K [R | t] looking at z = 0.
inline Mat3 plane_to_image(const Mat3& K, const Mat3& R, const Eigen::Vector3d& t) {
    Mat3 M;
    M.col(0) = R.col(0);
    M.col(1) = R.col(1);
    M.col(2) = t;
    return K * M;
}

}  // namespace svfit::io
