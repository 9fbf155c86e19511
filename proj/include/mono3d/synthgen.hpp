#pragma once

// Seeded synthetic scenes and detections for tests and demos.

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "mono3d/eval.hpp"
#include "mono3d/geometry.hpp"

namespace mono3d {

struct ClassSpec {
  std::string name;
  Dims3 min_dims;
  Dims3 max_dims;
};

struct NoiseSpec {
  double sigma_z = 0;       // meters
  double sigma_dims = 0;    // meters, per dimension
  double sigma_yaw = 0;     // radians
  double sigma_center = 0;  // meters, lateral (x) and vertical (y)
  double fp_rate = 0;       // probability of one extra false positive per object
  double fn_rate = 0;       // probability of dropping an object

  void validate() const {
    require(sigma_z >= 0 && sigma_dims >= 0 && sigma_yaw >= 0 && sigma_center >= 0, "NoiseSpec: negative sigma");
    require(fp_rate >= 0 && fp_rate <= 1 && fn_rate >= 0 && fn_rate <= 1, "NoiseSpec: rate outside [0, 1]");
  }
};

inline std::vector<ClassSpec> default_class_specs() {
  return {{"Car", {1.4, 1.5, 3.5}, {1.7, 1.8, 4.5}},
          {"Pedestrian", {1.6, 0.5, 0.6}, {1.9, 0.8, 1.0}},
          {"Cyclist", {1.6, 0.5, 1.5}, {1.9, 0.7, 1.9}}};
}

struct SceneSpec {
  std::uint64_t seed = 0;
  int n_objects = 6;
  double z_min = 5, z_max = 45;
  std::vector<ClassSpec> classes = default_class_specs();
  double yaw_min = -kPi, yaw_max = kPi;
  int image_width = 1242, image_height = 375;
  CameraIntrinsics intrinsics{721.5377, 721.5377, 609.5593, 172.854};
  double camera_height = 1.65;  // ground plane at y = camera_height
  NoiseSpec noise;

  void validate() const {
    require(n_objects >= 0, "SceneSpec: negative object count");
    require(z_min > 1 && z_max >= z_min, "SceneSpec: depth range must satisfy 1 < z_min <= z_max");
    require(!classes.empty(), "SceneSpec: no classes");
    require(yaw_max >= yaw_min, "SceneSpec: empty yaw range");
    require(image_width > 0 && image_height > 0 && intrinsics.valid(), "SceneSpec: bad camera");
    for (const auto& c : classes)
      require(c.min_dims.h > 0 && c.min_dims.w > 0 && c.min_dims.l > 0 && c.max_dims.h >= c.min_dims.h &&
                  c.max_dims.w >= c.min_dims.w && c.max_dims.l >= c.min_dims.l,
              "SceneSpec: bad dimension range");
    noise.validate();
  }
};

struct Scene {
  std::vector<GroundTruthObject> objects;
  CameraIntrinsics intrinsics;
};

namespace detail {
inline bool all_corners_ahead(const Box3D& b, double min_z) {
  for (const auto& c : corners_3d(b))
    if (!(c.z() > min_z)) return false;
  return true;
}

inline double truncation_of(const Box2D& b, int width, int height) {
  const double area = b.area();
  if (area <= 0) return 1.0;
  const double iw = std::max(0.0, std::min(b.x2, double(width)) - std::max(b.x1, 0.0));
  const double ih = std::max(0.0, std::min(b.y2, double(height)) - std::max(b.y1, 0.0));
  return std::clamp(1.0 - iw * ih / area, 0.0, 1.0);
}
}  // namespace detail

// Objects stand on the ground plane, do not overlap in bird's-eye view and
// have every corner at z > 1 m. The 2D box is the (unclipped) hull of the
// projected corners.
inline Scene generate_scene(const SceneSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(spec.seed);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * u01(rng); };

  Scene s;
  s.intrinsics = spec.intrinsics;
  for (int n = 0; n < spec.n_objects; ++n) {
    for (int attempt = 0; attempt < 100; ++attempt) {
      const auto& cs = spec.classes[static_cast<std::size_t>(u01(rng) * spec.classes.size()) % spec.classes.size()];
      Box3D b;
      b.dims = {uniform(cs.min_dims.h, cs.max_dims.h), uniform(cs.min_dims.w, cs.max_dims.w),
                uniform(cs.min_dims.l, cs.max_dims.l)};
      const double z = uniform(spec.z_min, spec.z_max);
      const double u = uniform(0.1 * spec.image_width, 0.9 * spec.image_width);
      const double x = (u - spec.intrinsics.cx) * z / spec.intrinsics.fx;
      b.center = Vec3(x, spec.camera_height - b.dims.h / 2, z);
      b.rotation = yaw_to_rotation(uniform(spec.yaw_min, spec.yaw_max));
      if (!detail::all_corners_ahead(b, 1.0)) continue;
      bool clash = false;
      for (const auto& o : s.objects)
        if (bev_intersection_area(o.box3d, b) > 0) clash = true;
      if (clash) continue;
      GroundTruthObject g;
      g.cls = cs.name;
      g.box3d = b;
      g.box2d = projected_box(b, spec.intrinsics);
      g.truncation = detail::truncation_of(g.box2d, spec.image_width, spec.image_height);
      g.occlusion = 0;
      s.objects.push_back(std::move(g));
      break;
    }
  }
  return s;
}

// Confidence model: 2 * sigmoid(-e) with e the norm of the injected error,
// so an exact copy scores 1 and confidence falls monotonically with error.
inline double confidence_from_error(double e) { return 2.0 / (1.0 + std::exp(e)); }

inline std::vector<EvalDetection> perturb(std::span<const GroundTruthObject> gts, const NoiseSpec& noise,
                                          const CameraIntrinsics& k, std::uint64_t seed, double z_min = 5,
                                          double z_max = 45) {
  noise.validate();
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  std::normal_distribution<double> n01(0.0, 1.0);
  std::vector<EvalDetection> out;
  for (const auto& g : gts) {
    const bool drop = u01(rng) < noise.fn_rate;
    const double dz = noise.sigma_z * n01(rng);
    const double dh = noise.sigma_dims * n01(rng), dw = noise.sigma_dims * n01(rng), dl = noise.sigma_dims * n01(rng);
    const double dyaw = noise.sigma_yaw * n01(rng);
    const double dx = noise.sigma_center * n01(rng), dy = noise.sigma_center * n01(rng);
    const bool add_fp = u01(rng) < noise.fp_rate;
    const double fp_u = u01(rng), fp_z = u01(rng), fp_e = u01(rng), fp_yaw = u01(rng);

    if (!drop) {
      EvalDetection d;
      d.cls = g.cls;
      d.box3d = g.box3d;
      d.box3d.center += Vec3(dx, dy, dz);
      d.box3d.center.z() = std::max(d.box3d.center.z(), 1.5);
      d.box3d.dims = {std::max(0.1, g.box3d.dims.h + dh), std::max(0.1, g.box3d.dims.w + dw),
                      std::max(0.1, g.box3d.dims.l + dl)};
      if (dyaw != 0) d.box3d.rotation = yaw_to_rotation(rotation_to_yaw(g.box3d.rotation) + dyaw);
      d.box2d = detail::all_corners_ahead(d.box3d, 0.1) ? projected_box(d.box3d, k) : g.box2d;
      if (dx == 0 && dy == 0 && dz == 0 && dh == 0 && dw == 0 && dl == 0) d.box2d = g.box2d;
      const double e = std::sqrt(dz * dz + dh * dh + dw * dw + dl * dl + dyaw * dyaw + dx * dx + dy * dy);
      d.confidence = confidence_from_error(e);
      out.push_back(std::move(d));
    }
    if (add_fp) {
      EvalDetection f;
      f.cls = g.cls;
      f.box3d = g.box3d;
      const double z = z_min + (z_max - z_min) * fp_z;
      const double x = (fp_u - 0.5) * z;
      f.box3d.center = Vec3(x, g.box3d.center.y(), z);
      f.box3d.rotation = yaw_to_rotation(-kPi + kTwoPi * fp_yaw);
      f.box2d = detail::all_corners_ahead(f.box3d, 0.1) ? projected_box(f.box3d, k) : g.box2d;
      f.confidence = confidence_from_error(1.0 + 4.0 * fp_e);
      out.push_back(std::move(f));
    }
  }
  return out;
}

}  // namespace mono3d
