#pragma once

// Seeded scene builders shared by the unit suites and the acceptance run.

#include <random>
#include <string>
#include <vector>

#include "mono3d/assign.hpp"
#include "mono3d/kitti_io.hpp"

namespace fixture {

using namespace mono3d;

inline Box3D yaw_box(Vec3 c, Dims3 d, double yaw) {
  Box3D b;
  b.center = c;
  b.dims = d;
  b.rotation = yaw_to_rotation(yaw);
  return b;
}

struct AssignScene {
  std::vector<GroundTruth> gts;
  std::vector<Prediction> preds;
  std::vector<AnchorPoint> anchors;
};

// Small image so that <=100 anchors cover it; boxes large enough to contain
// several anchor centers each.
inline AssignScene random_assign_scene(std::uint64_t seed, int max_gt, double min_size = 8, double size_span = 24) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u01(0, 1);
  AssignScene s;
  s.anchors = make_anchor_grid(64, 64);  // 64 + 16 anchors
  const int n_gt = 1 + static_cast<int>(u01(rng) * max_gt) % max_gt;
  for (int j = 0; j < n_gt; ++j) {
    GroundTruth g;
    g.class_id = static_cast<int>(u01(rng) * 3) % 3;
    const double x1 = 40 * u01(rng), y1 = 40 * u01(rng);
    g.box2d = {x1, y1, x1 + min_size + size_span * u01(rng), y1 + min_size + size_span * u01(rng)};
    g.box3d = yaw_box(Vec3(4 * u01(rng) - 2, 1, 10 + 10 * u01(rng)), {1.5, 1.6, 3.9}, kPi * (2 * u01(rng) - 1));
    s.gts.push_back(g);
  }
  for (std::size_t a = 0; a < s.anchors.size(); ++a) {
    Prediction p;
    p.class_probs = {u01(rng), u01(rng), u01(rng)};
    const auto& g = s.gts[static_cast<std::size_t>(u01(rng) * n_gt) % n_gt];
    const double jitter = 6 * u01(rng);
    p.box2d = {g.box2d.x1 - jitter, g.box2d.y1 + jitter / 2, g.box2d.x2 + jitter / 3, g.box2d.y2 - jitter / 4};
    p.box3d = g.box3d;
    p.box3d.center += Vec3(u01(rng) - 0.5, 0.2 * (u01(rng) - 0.5), 3 * (u01(rng) - 0.5));
    p.box3d.rotation = yaw_to_rotation(rotation_to_yaw(g.box3d.rotation) + 0.5 * (u01(rng) - 0.5));
    s.preds.push_back(p);
  }
  return s;
}


// Random byte-level and token-level edits of a valid KITTI label line.
inline std::string mutate_label_line(std::string s, std::mt19937_64& rng) {
  std::uniform_int_distribution<int> op(0, 6);
  static const std::string junk = "abcXYZ.-+eE0123456789 \t,;nanINF\x01\xff";
  std::uniform_int_distribution<std::size_t> pick_junk(0, junk.size() - 1);
  const int rounds = 1 + static_cast<int>(rng() % 3);
  for (int r = 0; r < rounds; ++r) {
    if (s.empty()) s = "x";
    std::uniform_int_distribution<std::size_t> pos(0, s.size() - 1);
    switch (op(rng)) {
      case 0: s.erase(pos(rng), 1); break;
      case 1: s.insert(pos(rng), 1, junk[pick_junk(rng)]); break;
      case 2: s[pos(rng)] = junk[pick_junk(rng)]; break;
      case 3: {  // drop a token
        auto t = detail::split_ws(s);
        if (t.empty()) break;
        std::string out;
        const std::size_t skip = rng() % t.size();
        for (std::size_t i = 0; i < t.size(); ++i)
          if (i != skip) out += std::string(t[i]) + " ";
        s = out;
        break;
      }
      case 4: s += " " + std::to_string(static_cast<int>(rng() % 1000)); break;
      case 5: s = s.substr(0, pos(rng)); break;
      default: s.insert(pos(rng), "1e999"); break;
    }
  }
  return s;
}

}  // namespace fixture
