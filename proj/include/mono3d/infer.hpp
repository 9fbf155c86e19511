#pragma once

// Confidence-gated inference and its dense reference.
//
// Gated path:
//   1. run the classification head densely on both pyramid levels,
//   2. concatenate the flattened per-location scores (stride 8 first, then
//      stride 16) and keep the top-k locations,
//   3. cut a zero-padded 3x3xC patch around each selected location,
//   4. evaluate every regression head on those patches only,
//   5. decode boxes (no suppression stage).
// Dense path: run every head on every location, then pick the same top-k
// locations. Both paths share the accumulation routine of nnforward.hpp and
// so produce bit-identical detections.

#include <algorithm>
#include <array>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "mono3d/assign.hpp"
#include "mono3d/geometry.hpp"
#include "mono3d/nnforward.hpp"

namespace mono3d {

// ============================================================================
// Types
// ============================================================================

struct FeatureLevel {
  int stride = 8;
  Tensor3 map;
};

struct FeatureMapSet {
  std::vector<FeatureLevel> levels;  // exactly {stride 8, stride 16}

  int channels() const { return levels.empty() ? 0 : levels[0].map.c; }

  void validate() const {
    if (levels.size() != 2 || levels[0].stride != 8 || levels[1].stride != 16)
      throw InvalidArgument("FeatureMapSet: levels must be strides {8, 16}");
    for (const auto& l : levels) {
      if (l.map.c != levels[0].map.c) throw InvalidArgument("FeatureMapSet: channel count differs between levels");
      if (l.map.h <= 0 || l.map.w <= 0) throw InvalidArgument("FeatureMapSet: empty level");
      for (float v : l.map.data)
        if (!std::isfinite(v)) throw InvalidArgument("FeatureMapSet: non-finite activation");
    }
  }

  std::size_t num_locations() const {
    std::size_t n = 0;
    for (const auto& l : levels) n += static_cast<std::size_t>(l.map.h) * l.map.w;
    return n;
  }
};

inline FeatureMapSet random_features(int channels, int h8, int w8, std::uint64_t seed, float scale = 1.0f) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> n(0.0f, scale);
  FeatureMapSet f;
  for (int s : {8, 16}) {
    const int h = s == 8 ? h8 : (h8 + 1) / 2;
    const int w = s == 8 ? w8 : (w8 + 1) / 2;
    FeatureLevel l{s, Tensor3(channels, h, w)};
    for (auto& v : l.map.data) v = n(rng);
    f.levels.push_back(std::move(l));
  }
  return f;
}

struct SelectedCenter {
  int level = 0;  // index into FeatureMapSet::levels
  int stride = 8;
  int row = 0, col = 0;
  int class_id = 0;
  float score = 0;
  std::size_t flat_index = 0;  // into the concatenated score vector
  bool operator==(const SelectedCenter&) const = default;
};

// Raw head outputs at one location, regression heads in HeadSet order.
struct RawOutput {
  std::vector<std::vector<float>> heads;
  std::vector<float> depth_feature;  // 64-d input of the depth head's last conv
  bool operator==(const RawOutput&) const = default;
};

struct Detection {
  int class_id = 0;
  double confidence = 0;
  Box2D box2d;
  Box3D box3d;
  double sigma = 1;
  Vec2 projected_center = Vec2::Zero();
};

using DetectionSet = std::vector<Detection>;

struct DecodeConfig {
  CameraIntrinsics intrinsics{721.5377, 721.5377, 609.5593, 172.854};
  std::vector<Dims3> class_mean_dims{{1.526, 1.629, 3.883}, {1.763, 0.661, 0.844}, {1.737, 0.597, 1.763}};
  double min_depth = 0.01;  // meters; raw depth is floored here
  double min_dim = 0.01;    // meters; decoded sizes are floored here
};

// ============================================================================
// Stages
// ============================================================================

inline float sigmoid(float x) { return 1.0f / (1.0f + std::exp(-x)); }

// Sigmoid class scores per level, [classes][h][w].
inline std::vector<Tensor3> dense_classify(const FeatureMapSet& features, const Head& cls) {
  std::vector<Tensor3> out;
  for (const auto& l : features.levels) {
    Tensor3 s = head_forward(l.map, cls);
    for (auto& v : s.data) v = sigmoid(v);
    out.push_back(std::move(s));
  }
  return out;
}

// Per-location score = max over classes (ties to the lower class). Locations
// are ranked by score descending, ties to the lower concatenated index.
inline std::vector<SelectedCenter> topk_select(std::span<const Tensor3> scores, std::span<const int> strides,
                                               std::size_t k) {
  require(k >= 1, "topk_select: k must be >= 1");
  require(scores.size() == strides.size(), "topk_select: one stride per level required");
  std::vector<SelectedCenter> all;
  std::size_t flat = 0;
  for (std::size_t l = 0; l < scores.size(); ++l) {
    const Tensor3& s = scores[l];
    for (int r = 0; r < s.h; ++r)
      for (int c = 0; c < s.w; ++c, ++flat) {
        int best = 0;
        for (int ch = 1; ch < s.c; ++ch)
          if (s.at(ch, r, c) > s.at(best, r, c)) best = ch;
        all.push_back({static_cast<int>(l), strides[l], r, c, best, s.at(best, r, c), flat});
      }
  }
  const std::size_t n = std::min(k, all.size());
  std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(n), all.end(),
                    [](const SelectedCenter& a, const SelectedCenter& b) {
                      return a.score != b.score ? a.score > b.score : a.flat_index < b.flat_index;
                    });
  all.resize(n);
  return all;
}

inline std::vector<Patch> extract_patches(const FeatureMapSet& features, std::span<const SelectedCenter> centers) {
  std::vector<Patch> out;
  out.reserve(centers.size());
  for (const auto& ctr : centers) {
    const Tensor3& m = features.levels.at(ctr.level).map;
    if (!m.in_bounds(ctr.row, ctr.col)) throw InvalidArgument("extract_patches: center out of bounds");
    Patch p{m.c, std::vector<float>(static_cast<std::size_t>(m.c) * 9, 0.0f)};
    for (int ch = 0; ch < m.c; ++ch)
      for (int dy = 0; dy < 3; ++dy)
        for (int dx = 0; dx < 3; ++dx) {
          const int y = ctr.row + dy - 1, x = ctr.col + dx - 1;
          if (m.in_bounds(y, x)) p.values[(static_cast<std::size_t>(ch) * 3 + dy) * 3 + dx] = m.at(ch, y, x);
        }
    out.push_back(std::move(p));
  }
  return out;
}

inline std::vector<RawOutput> gated_heads(std::span<const Patch> patches, const HeadSet& heads) {
  const int depth_idx = heads.index_of("depth");
  std::vector<RawOutput> out(patches.size());
  for (std::size_t i = 0; i < patches.size(); ++i) {
    for (std::size_t h = 0; h < heads.regression.size(); ++h) {
      PatchOutput po = head_on_patch(patches[i], heads.regression[h]);
      if (static_cast<int>(h) == depth_idx) out[i].depth_feature = po.hidden;
      out[i].heads.push_back(std::move(po.out));
    }
  }
  return out;
}

// Every regression head over every location of every level.
struct DenseHeadMaps {
  std::vector<std::vector<HeadOutput>> per_level;  // [level][head]
};

inline DenseHeadMaps dense_heads(const FeatureMapSet& features, const HeadSet& heads) {
  DenseHeadMaps d;
  for (const auto& l : features.levels) {
    std::vector<HeadOutput> hs;
    for (const auto& h : heads.regression) hs.push_back(head_forward_with_hidden(l.map, h));
    d.per_level.push_back(std::move(hs));
  }
  return d;
}

inline std::vector<RawOutput> gather_dense(const DenseHeadMaps& d, const HeadSet& heads,
                                           std::span<const SelectedCenter> centers) {
  const int depth_idx = heads.index_of("depth");
  std::vector<RawOutput> out(centers.size());
  for (std::size_t i = 0; i < centers.size(); ++i) {
    const auto& lvl = d.per_level.at(centers[i].level);
    for (std::size_t h = 0; h < lvl.size(); ++h) {
      const Tensor3& t = lvl[h].out;
      std::vector<float> v(t.c);
      for (int ch = 0; ch < t.c; ++ch) v[ch] = t.at(ch, centers[i].row, centers[i].col);
      out[i].heads.push_back(std::move(v));
      if (static_cast<int>(h) == depth_idx) {
        const Tensor3& hid = lvl[h].hidden;
        out[i].depth_feature.resize(hid.c);
        for (int ch = 0; ch < hid.c; ++ch) out[i].depth_feature[ch] = hid.at(ch, centers[i].row, centers[i].col);
      }
    }
  }
  return out;
}

// Anchor pixel = stride * (index + 0.5). Offsets and 2D sizes are in grid
// cells scaled by the stride; 2D sizes are floored at zero. 3D size is the
// class mean plus the predicted offset (h, w, l). Multi-bin orientation is
// an allocentric yaw; the SO(3) head yields an allocentric rotation via
// Gram-Schmidt. Both are converted to the camera frame along the viewing ray.
inline DetectionSet decode_detections(std::span<const RawOutput> raw, std::span<const SelectedCenter> centers,
                                      const HeadSet& heads, const DecodeConfig& cfg) {
  if (raw.size() != centers.size()) throw InvalidArgument("decode_detections: raw/center count mismatch");
  const int i_o2d = heads.index_of("offset2d"), i_s2d = heads.index_of("size2d");
  const int i_o3d = heads.index_of("offset3d"), i_s3d = heads.index_of("size3d");
  const int i_z = heads.index_of("depth"), i_u = heads.index_of("uncertainty");
  const bool multibin = heads.orientation == OrientationMode::kMultiBin;
  const int i_rot = heads.index_of(multibin ? "multibin" : "so3");

  DetectionSet out;
  out.reserve(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i) {
    for (const auto& h : raw[i].heads)
      for (float v : h)
        if (!std::isfinite(v)) throw InvalidArgument("decode_detections: non-finite raw output");
    const auto& c = centers[i];
    const double s = c.stride;
    const double ax = s * (c.col + 0.5), ay = s * (c.row + 0.5);
    const auto& o2 = raw[i].heads[i_o2d];
    const auto& s2 = raw[i].heads[i_s2d];
    const auto& o3 = raw[i].heads[i_o3d];
    const auto& s3 = raw[i].heads[i_s3d];

    Detection d;
    d.class_id = c.class_id;
    d.confidence = c.score;
    const double bx = ax + o2[0] * s, by = ay + o2[1] * s;
    const double bh = std::max(0.0, static_cast<double>(s2[0])) * s;
    const double bw = std::max(0.0, static_cast<double>(s2[1])) * s;
    d.box2d = {bx - bw / 2, by - bh / 2, bx + bw / 2, by + bh / 2};

    d.projected_center = Vec2(ax + o3[0] * s, ay + o3[1] * s);
    const double depth = std::max(cfg.min_depth, static_cast<double>(raw[i].heads[i_z][0]));
    d.sigma = std::exp(static_cast<double>(raw[i].heads[i_u][0]));
    d.box3d.center = backproject(d.projected_center, depth, cfg.intrinsics);

    Dims3 mean{1, 1, 1};
    if (c.class_id >= 0 && static_cast<std::size_t>(c.class_id) < cfg.class_mean_dims.size())
      mean = cfg.class_mean_dims[c.class_id];
    d.box3d.dims = {std::max(cfg.min_dim, mean.h + s3[0]), std::max(cfg.min_dim, mean.w + s3[1]),
                    std::max(cfg.min_dim, mean.l + s3[2])};

    const auto& ro = raw[i].heads[i_rot];
    if (multibin) {
      int bin = 0;
      for (int b = 1; b < kNumOrientationBins; ++b)
        if (ro[b] > ro[bin]) bin = b;
      const double alpha = multibin_decode({bin, static_cast<double>(ro[kNumOrientationBins + bin])});
      d.box3d.rotation = yaw_to_rotation(allocentric_yaw_to_egocentric(alpha, d.box3d.center));
    } else {
      std::array<double, 6> v;
      for (int k = 0; k < 6; ++k) v[k] = ro[k];
      d.box3d.rotation = allocentric_to_egocentric(gram_schmidt_6d(v), d.box3d.center);
    }
    out.push_back(d);
  }
  return out;
}

// ============================================================================
// End to end
// ============================================================================

enum class InferMode { kDense, kGated };

struct StageReport {
  std::uint64_t cls_macs = 0;
  std::uint64_t regression_macs = 0;
  std::uint64_t patch_values = 0;  // floats copied by patch extraction
  double cls_ms = 0, patch_ms = 0, regression_ms = 0, decode_ms = 0;
};

struct InferenceResult {
  DetectionSet detections;
  std::vector<SelectedCenter> centers;
  std::vector<RawOutput> raw;
  StageReport stages;
};

inline std::uint64_t regression_macs_dense(const HeadSet& heads, const FeatureMapSet& f) {
  std::uint64_t m = 0;
  for (const auto& l : f.levels)
    for (const auto& h : heads.regression) m += flop_count_dense(h, l.map.h, l.map.w);
  return m;
}

inline std::uint64_t regression_macs_gated(const HeadSet& heads, std::uint64_t k) {
  std::uint64_t m = 0;
  for (const auto& h : heads.regression) m += flop_count_gated(h, k);
  return m;
}

inline InferenceResult infer(const FeatureMapSet& features, const HeadSet& heads, std::size_t k, InferMode mode,
                             const DecodeConfig& cfg = {}) {
  using clock = std::chrono::steady_clock;
  auto ms_since = [](clock::time_point t0) {
    return std::chrono::duration<double, std::milli>(clock::now() - t0).count();
  };
  features.validate();
  heads.validate();
  if (features.channels() != heads.in_channels) throw InvalidArgument("infer: feature channels do not match heads");

  InferenceResult r;
  std::vector<int> strides;
  for (const auto& l : features.levels) strides.push_back(l.stride);

  if (mode == InferMode::kDense) {
    auto t0 = clock::now();
    auto scores = dense_classify(features, heads.cls);
    r.centers = topk_select(scores, strides, k);
    r.stages.cls_ms = ms_since(t0);
    t0 = clock::now();
    DenseHeadMaps dense = dense_heads(features, heads);
    r.stages.regression_ms = ms_since(t0);
    r.raw = gather_dense(dense, heads, r.centers);
    r.stages.regression_macs = regression_macs_dense(heads, features);
  } else {
    auto t0 = clock::now();
    auto scores = dense_classify(features, heads.cls);
    r.centers = topk_select(scores, strides, k);
    r.stages.cls_ms = ms_since(t0);
    t0 = clock::now();
    const auto patches = extract_patches(features, r.centers);
    r.stages.patch_ms = ms_since(t0);
    r.stages.patch_values = static_cast<std::uint64_t>(patches.size()) * 9 * features.channels();
    t0 = clock::now();
    r.raw = gated_heads(patches, heads);
    r.stages.regression_ms = ms_since(t0);
    r.stages.regression_macs = regression_macs_gated(heads, r.centers.size());
  }
  for (const auto& l : features.levels) r.stages.cls_macs += flop_count_dense(heads.cls, l.map.h, l.map.w);
  auto t0 = clock::now();
  r.detections = decode_detections(r.raw, r.centers, heads, cfg);
  r.stages.decode_ms = ms_since(t0);
  return r;
}

// ============================================================================
// Equivalence
// ============================================================================

namespace detail {
inline bool same_bits(double a, double b) { return std::bit_cast<std::uint64_t>(a) == std::bit_cast<std::uint64_t>(b); }
}  // namespace detail

inline bool bitwise_equal(const Detection& a, const Detection& b) {
  using detail::same_bits;
  if (a.class_id != b.class_id || !same_bits(a.confidence, b.confidence) || !same_bits(a.sigma, b.sigma)) return false;
  for (auto [x, y] : {std::pair{a.box2d.x1, b.box2d.x1}, std::pair{a.box2d.y1, b.box2d.y1},
                      std::pair{a.box2d.x2, b.box2d.x2}, std::pair{a.box2d.y2, b.box2d.y2},
                      std::pair{a.box3d.dims.h, b.box3d.dims.h}, std::pair{a.box3d.dims.w, b.box3d.dims.w},
                      std::pair{a.box3d.dims.l, b.box3d.dims.l}})
    if (!same_bits(x, y)) return false;
  for (int i = 0; i < 3; ++i)
    if (!same_bits(a.box3d.center[i], b.box3d.center[i])) return false;
  for (int i = 0; i < 2; ++i)
    if (!same_bits(a.projected_center[i], b.projected_center[i])) return false;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      if (!same_bits(a.box3d.rotation(i, j), b.box3d.rotation(i, j))) return false;
  return true;
}

inline bool bitwise_equal(const DetectionSet& a, const DetectionSet& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (!bitwise_equal(a[i], b[i])) return false;
  return true;
}

}  // namespace mono3d
