#pragma once

// 3D/2D box types, orientation codecs, pinhole projection and overlap
// primitives.
//
// Frame conventions (camera frame, KITTI style):
//   x right, y down, z forward (optical axis).
//   Yaw rotates about the vertical y axis; yaw 0 points the box length along +x.
//   Local box axes before rotation: length l -> x, height h -> y, width w -> z.
//
// Corner ordering of corners_3d (local coordinates before rotation):
//   0 (+l/2, +h/2, +w/2)   4 (+l/2, -h/2, +w/2)
//   1 (+l/2, +h/2, -w/2)   5 (+l/2, -h/2, -w/2)
//   2 (-l/2, +h/2, -w/2)   6 (-l/2, -h/2, -w/2)
//   3 (-l/2, +h/2, +w/2)   7 (-l/2, -h/2, +w/2)
// Corners 0-3 form the bottom face (y points down), 4-7 the top face.

#include <algorithm>
#include <array>
#include <cmath>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>

#include "mono3d/core.hpp"

namespace mono3d {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Vec2 = Eigen::Vector2d;

// ============================================================================
// Domain types
// ============================================================================

struct Box2D {
  double x1 = 0, y1 = 0, x2 = 0, y2 = 0;

  double width() const { return x2 - x1; }
  double height() const { return y2 - y1; }
  double area() const { return std::max(0.0, width()) * std::max(0.0, height()); }
  bool valid() const {
    return std::isfinite(x1) && std::isfinite(y1) && std::isfinite(x2) && std::isfinite(y2) &&
           x2 >= x1 && y2 >= y1;
  }
  bool operator==(const Box2D&) const = default;
};

// Proper rotation matrix. Construction through from_matrix() validates
// orthonormality (|R^T R - I|_inf <= 1e-9) and det = 1 +- 1e-9.
class Rotation {
 public:
  static constexpr double kTolerance = 1e-9;

  Rotation() : m_(Mat3::Identity()) {}

  static Rotation identity() { return Rotation(); }

  static Rotation from_matrix(const Mat3& m) {
    if (!m.allFinite()) throw InvalidArgument("rotation has non-finite entries");
    if (orthonormality_error(m) > kTolerance || std::abs(m.determinant() - 1.0) > kTolerance)
      throw InvalidArgument("matrix is not a proper rotation");
    return Rotation(m);
  }

  static double orthonormality_error(const Mat3& m) {
    return (m.transpose() * m - Mat3::Identity()).cwiseAbs().maxCoeff();
  }

  const Mat3& matrix() const { return m_; }
  double operator()(int r, int c) const { return m_(r, c); }

  Rotation operator*(const Rotation& o) const { return Rotation(m_ * o.m_); }
  Vec3 operator*(const Vec3& v) const { return m_ * v; }
  Rotation inverse() const { return Rotation(m_.transpose()); }

  bool operator==(const Rotation& o) const { return m_ == o.m_; }

 private:
  explicit Rotation(const Mat3& m) : m_(m) {}
  Mat3 m_;
};

struct Dims3 {
  double h = 1, w = 1, l = 1;
  bool operator==(const Dims3&) const = default;
};

struct Box3D {
  Vec3 center = Vec3::Zero();  // geometric center, meters
  Dims3 dims;
  Rotation rotation;

  bool valid() const {
    return center.allFinite() && dims.h > 0 && dims.w > 0 && dims.l > 0;
  }
};

struct CameraIntrinsics {
  double fx = 1, fy = 1, cx = 0, cy = 0;

  bool valid() const { return fx > 0 && fy > 0 && std::isfinite(cx) && std::isfinite(cy); }
  bool operator==(const CameraIntrinsics&) const = default;
};

// ============================================================================
// Yaw
// ============================================================================

inline Rotation yaw_to_rotation(double theta) {
  const double c = std::cos(theta), s = std::sin(theta);
  Mat3 m;
  m << c, 0, s,
       0, 1, 0,
      -s, 0, c;
  return Rotation::from_matrix(m);
}

// Inverse of yaw_to_rotation for pure-yaw matrices; result in (-pi, pi].
inline double rotation_to_yaw(const Rotation& r) { return std::atan2(r(0, 2), r(0, 0)); }

inline bool is_yaw_only(const Rotation& r, double tol = 1e-9) {
  return std::abs(r(1, 1) - 1.0) <= tol && std::abs(r(0, 1)) <= tol && std::abs(r(2, 1)) <= tol &&
         std::abs(r(1, 0)) <= tol && std::abs(r(1, 2)) <= tol;
}

// ============================================================================
// Gram-Schmidt 6D rotation
// ============================================================================

// Builds a rotation from two (non-parallel) 3-vectors. The columns are
// b1 = a1/|a1|, b2 = normalized component of a2 orthogonal to b1, b3 = b1 x b2.
// Both inputs are normalized first so the degeneracy threshold (1e-12) is
// scale invariant.
inline Rotation gram_schmidt_6d(const std::array<double, 6>& v) {
  const Vec3 a1(v[0], v[1], v[2]);
  const Vec3 a2(v[3], v[4], v[5]);
  if (!a1.allFinite() || !a2.allFinite()) throw InvalidArgument("gram_schmidt_6d: non-finite input");
  const double n1 = a1.norm(), n2 = a2.norm();
  if (n1 < 1e-12 || n2 < 1e-12) throw InvalidArgument("gram_schmidt_6d: zero subvector");
  const Vec3 b1 = a1 / n1;
  const Vec3 a2n = a2 / n2;
  const Vec3 u2 = a2n - b1.dot(a2n) * b1;
  const double r = u2.norm();
  if (r < 1e-12) throw InvalidArgument("gram_schmidt_6d: parallel subvectors");
  const Vec3 b2 = u2 / r;
  const Vec3 b3 = b1.cross(b2);
  Mat3 m;
  m.col(0) = b1;
  m.col(1) = b2;
  m.col(2) = b3;
  return Rotation::from_matrix(m);
}

// ============================================================================
// Allocentric / egocentric
// ============================================================================

// Minimal rotation taking the optical axis (0,0,1) onto the ray through
// `center`.
inline Rotation viewing_ray_rotation(const Vec3& center) {
  const double n = center.norm();
  if (!(n > 0) || !std::isfinite(n)) throw InvalidArgument("viewing ray: zero-norm center");
  const Vec3 d = center / n;
  const Vec3 z = Vec3::UnitZ();
  const Vec3 axis = z.cross(d);
  const double s = axis.norm();
  const double c = z.dot(d);
  if (s < 1e-15) {
    if (c > 0) return Rotation::identity();
    return yaw_to_rotation(kPi);  // antiparallel: half turn about vertical
  }
  const Mat3 m = Eigen::AngleAxisd(std::atan2(s, c), axis / s).toRotationMatrix();
  return Rotation::from_matrix(m);
}

inline Rotation allocentric_to_egocentric(const Rotation& r_alloc, const Vec3& center) {
  return viewing_ray_rotation(center) * r_alloc;
}

inline Rotation egocentric_to_allocentric(const Rotation& r_ego, const Vec3& center) {
  return viewing_ray_rotation(center).inverse() * r_ego;
}

// Yaw-only variant used with multi-bin heads (KITTI observation angle):
// the ray angle is measured in the x-z plane only.
inline double allocentric_yaw_to_egocentric(double alpha, const Vec3& center) {
  return wrap_angle(alpha + std::atan2(center.x(), center.z()));
}

inline double egocentric_yaw_to_allocentric(double yaw, const Vec3& center) {
  return wrap_angle(yaw - std::atan2(center.x(), center.z()));
}

// ============================================================================
// Multi-bin orientation
// ============================================================================

inline constexpr int kNumOrientationBins = 12;
inline constexpr double kBinWidth = kTwoPi / kNumOrientationBins;

struct OrientationMultiBin {
  int bin_index = 0;
  double residual = 0;
};

inline double bin_center(int i) { return -kPi + (i + 0.5) * kBinWidth; }

inline OrientationMultiBin multibin_encode(double theta) {
  if (!std::isfinite(theta)) throw InvalidArgument("multibin_encode: non-finite angle");
  const double t = wrap_angle(theta);
  int bin = static_cast<int>(std::floor((t + kPi) / kBinWidth));
  bin = std::clamp(bin, 0, kNumOrientationBins - 1);
  return {bin, wrap_angle(t - bin_center(bin))};
}

inline double multibin_decode(const OrientationMultiBin& mb) {
  if (mb.bin_index < 0 || mb.bin_index >= kNumOrientationBins)
    throw InvalidArgument("multibin_decode: bin index out of range");
  return wrap_angle(bin_center(mb.bin_index) + mb.residual);
}

// ============================================================================
// Corners and footprint
// ============================================================================

inline std::array<Vec3, 8> corners_3d(const Box3D& box) {
  const double l = box.dims.l / 2, h = box.dims.h / 2, w = box.dims.w / 2;
  static constexpr int sx[8] = {1, 1, -1, -1, 1, 1, -1, -1};
  static constexpr int sy[8] = {1, 1, 1, 1, -1, -1, -1, -1};
  static constexpr int sz[8] = {1, -1, -1, 1, 1, -1, -1, 1};
  std::array<Vec3, 8> out;
  for (int i = 0; i < 8; ++i)
    out[i] = box.rotation * Vec3(sx[i] * l, sy[i] * h, sz[i] * w) + box.center;
  return out;
}

// Footprint in the (x, z) plane, counter-clockwise under the shoelace
// formula with x as first and z as second coordinate.
inline std::array<Vec2, 4> bev_polygon(const Box3D& box) {
  const auto c = corners_3d(box);
  // Corners 0..3 run clockwise in (x, z); emit them reversed.
  return {Vec2(c[3].x(), c[3].z()), Vec2(c[2].x(), c[2].z()), Vec2(c[1].x(), c[1].z()),
          Vec2(c[0].x(), c[0].z())};
}

// ============================================================================
// Pinhole projection
// ============================================================================

inline Vec2 project(const Vec3& p, const CameraIntrinsics& k) {
  if (!(p.z() > 0)) throw InvalidArgument("project: point not in front of camera");
  return {k.fx * p.x() / p.z() + k.cx, k.fy * p.y() / p.z() + k.cy};
}

inline Vec3 backproject(const Vec2& pixel, double depth, const CameraIntrinsics& k) {
  if (!(depth > 0)) throw InvalidArgument("backproject: non-positive depth");
  return {(pixel.x() - k.cx) * depth / k.fx, (pixel.y() - k.cy) * depth / k.fy, depth};
}

// Axis-aligned hull of the projected corners (not clipped to the image).
inline Box2D projected_box(const Box3D& box, const CameraIntrinsics& k) {
  Box2D b{INFINITY, INFINITY, -INFINITY, -INFINITY};
  for (const auto& c : corners_3d(box)) {
    const Vec2 uv = project(c, k);
    b.x1 = std::min(b.x1, uv.x());
    b.y1 = std::min(b.y1, uv.y());
    b.x2 = std::max(b.x2, uv.x());
    b.y2 = std::max(b.y2, uv.y());
  }
  return b;
}

// ============================================================================
// Overlap
// ============================================================================

inline double iou_2d(const Box2D& a, const Box2D& b) {
  const double iw = std::min(a.x2, b.x2) - std::max(a.x1, b.x1);
  const double ih = std::min(a.y2, b.y2) - std::max(a.y1, b.y1);
  if (iw <= 0 || ih <= 0) return 0.0;
  const double inter = iw * ih;
  const double uni = a.area() + b.area() - inter;
  if (uni <= 0) return 0.0;
  return std::clamp(inter / uni, 0.0, 1.0);
}

namespace polygon {

inline constexpr double kEps = 1e-12;

inline double cross(const Vec2& o, const Vec2& a, const Vec2& b) {
  return (a.x() - o.x()) * (b.y() - o.y()) - (a.y() - o.y()) * (b.x() - o.x());
}

inline double area(const std::vector<Vec2>& p) {
  double s = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const Vec2& a = p[i];
    const Vec2& b = p[(i + 1) % p.size()];
    s += a.x() * b.y() - a.y() * b.x();
  }
  return 0.5 * s;
}

// Sutherland-Hodgman: clips `subject` against the convex CCW polygon `clip`.
inline std::vector<Vec2> clip_convex(std::vector<Vec2> subject, const std::vector<Vec2>& clip) {
  for (std::size_t e = 0; e < clip.size() && !subject.empty(); ++e) {
    const Vec2& a = clip[e];
    const Vec2& b = clip[(e + 1) % clip.size()];
    std::vector<Vec2> out;
    out.reserve(subject.size() + 2);
    for (std::size_t i = 0; i < subject.size(); ++i) {
      const Vec2& p = subject[i];
      const Vec2& q = subject[(i + 1) % subject.size()];
      const double cp = cross(a, b, p);
      const double cq = cross(a, b, q);
      const bool p_in = cp >= -kEps;
      const bool q_in = cq >= -kEps;
      if (p_in) out.push_back(p);
      if (p_in != q_in) {
        const double t = cp / (cp - cq);
        out.push_back(p + t * (q - p));
      }
    }
    subject = std::move(out);
  }
  return subject;
}

}  // namespace polygon

inline double bev_intersection_area(const Box3D& a, const Box3D& b) {
  const auto pa = bev_polygon(a);
  const auto pb = bev_polygon(b);
  std::vector<Vec2> subj(pa.begin(), pa.end());
  std::vector<Vec2> clip(pb.begin(), pb.end());
  const auto inter = polygon::clip_convex(std::move(subj), clip);
  if (inter.size() < 3) return 0.0;
  return std::max(0.0, polygon::area(inter));
}

namespace detail {
inline void require_yaw_only(const Box3D& a, const Box3D& b) {
  if (!is_yaw_only(a.rotation) || !is_yaw_only(b.rotation))
    throw InvalidArgument("evaluation IoU requires yaw-only rotations");
}
}  // namespace detail

inline double rotated_iou_bev(const Box3D& a, const Box3D& b) {
  detail::require_yaw_only(a, b);
  const double inter = bev_intersection_area(a, b);
  const double uni = a.dims.l * a.dims.w + b.dims.l * b.dims.w - inter;
  if (uni <= 0) return 0.0;
  return std::clamp(inter / uni, 0.0, 1.0);
}

inline double iou_3d(const Box3D& a, const Box3D& b) {
  detail::require_yaw_only(a, b);
  const double top = std::max(a.center.y() - a.dims.h / 2, b.center.y() - b.dims.h / 2);
  const double bottom = std::min(a.center.y() + a.dims.h / 2, b.center.y() + b.dims.h / 2);
  const double dy = bottom - top;
  if (dy <= 0) return 0.0;
  const double inter = bev_intersection_area(a, b) * dy;
  const double va = a.dims.l * a.dims.w * a.dims.h;
  const double vb = b.dims.l * b.dims.w * b.dims.h;
  const double uni = va + vb - inter;
  if (uni <= 0) return 0.0;
  return std::clamp(inter / uni, 0.0, 1.0);
}

}  // namespace mono3d
