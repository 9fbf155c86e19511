#pragma once

// Marginalized generalized IoU between oriented 3D boxes.
//
// Both corner sets are projected onto each of the six principal axes (three
// per box). On every axis the two projections form 1D intervals whose GIoU is
// computed; the result is the mean of the six values. Each 1D term is a
// ratio of lengths, so the score is invariant to a uniform rescaling of the
// scene, and it stays informative (negative, shrinking towards -1) for
// disjoint boxes.

#include <algorithm>
#include <array>

#include "mono3d/geometry.hpp"

namespace mono3d {

struct Interval {
  double lo = 0, hi = 0;
  double length() const { return hi - lo; }
};

// GIoU of two intervals: IoU - |C \ (a u b)| / |C|, C the enclosing interval.
// Degenerate cases: two identical points give 1, two distinct points give -1
// (empty union, the whole enclosing span is gap), a point against a proper
// interval gives IoU 0 minus its relative gap.
inline double giou_1d(const Interval& a, const Interval& b) {
  require(a.hi >= a.lo && b.hi >= b.lo, "giou_1d: interval with hi < lo");
  const double inter = std::max(0.0, std::min(a.hi, b.hi) - std::max(a.lo, b.lo));
  const double uni = a.length() + b.length() - inter;
  const double span = std::max(a.hi, b.hi) - std::min(a.lo, b.lo);
  if (span <= 0) return 1.0;  // identical points
  const double iou = uni > 0 ? inter / uni : 0.0;
  return iou - (span - uni) / span;
}

namespace detail {
inline Interval project_onto(const std::array<Vec3, 8>& corners, const Vec3& axis) {
  Interval iv{corners[0].dot(axis), corners[0].dot(axis)};
  for (std::size_t i = 1; i < corners.size(); ++i) {
    const double t = corners[i].dot(axis);
    iv.lo = std::min(iv.lo, t);
    iv.hi = std::max(iv.hi, t);
  }
  return iv;
}
}  // namespace detail

inline double mgiou_3d(const Box3D& a, const Box3D& b) {
  const auto ca = corners_3d(a);
  const auto cb = corners_3d(b);
  auto axis_sum = [&](const Box3D& owner) {
    double s = 0;
    for (int k = 0; k < 3; ++k) {
      const Vec3 axis = owner.rotation.matrix().col(k);
      s += giou_1d(detail::project_onto(ca, axis), detail::project_onto(cb, axis));
    }
    return s;
  };
  // Per-box partial sums keep the result bitwise symmetric in (a, b).
  return (axis_sum(a) + axis_sum(b)) / 6.0;
}

inline double mgiou_clamped(const Box3D& a, const Box3D& b) { return std::max(0.0, mgiou_3d(a, b)); }

}  // namespace mono3d
