#pragma once

// KITTI object label/prediction text records, calibration files and
// depth-feature dumps.
//
// Label line (whitespace separated):
//   type truncated occluded alpha x1 y1 x2 y2 h w l x y z rotation_y [score]
// Location (x, y, z) is the bottom-center of the box in camera coordinates.
// The writer prints every real field with %.2f and occluded with %d, so
// format(parse(format(parse(line)))) == format(parse(line)).

#include <array>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "mono3d/container.hpp"
#include "mono3d/distill.hpp"
#include "mono3d/geometry.hpp"

namespace mono3d {

struct KittiObject {
  std::string type;
  double truncated = 0;
  int occluded = 0;
  double alpha = 0;
  Box2D bbox;
  double h = 0, w = 0, l = 0;
  double x = 0, y = 0, z = 0;
  double rotation_y = 0;
  std::optional<double> score;

  bool operator==(const KittiObject&) const = default;
};

namespace detail {

inline std::vector<std::string_view> split_ws(std::string_view s) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && std::isspace(static_cast<unsigned char>(s[i]))) ++i;
    const std::size_t j = i;
    while (i < s.size() && !std::isspace(static_cast<unsigned char>(s[i]))) ++i;
    if (i > j) out.push_back(s.substr(j, i - j));
  }
  return out;
}

inline double parse_real(std::string_view tok, std::size_t line, const char* field) {
  double v = 0;
  const char* b = tok.data();
  const char* e = tok.data() + tok.size();
  if (b != e && *b == '+') ++b;
  auto [p, ec] = std::from_chars(b, e, v);
  if (ec != std::errc() || p != e || !std::isfinite(v))
    throw ParseError(std::string("invalid number for ") + field + ": '" + std::string(tok) + "'", line);
  return v;
}

inline int parse_int(std::string_view tok, std::size_t line, const char* field) {
  int v = 0;
  auto [p, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (ec != std::errc() || p != tok.data() + tok.size())
    throw ParseError(std::string("invalid integer for ") + field + ": '" + std::string(tok) + "'", line);
  return v;
}

}  // namespace detail

inline KittiObject parse_kitti_label(std::string_view text, std::size_t line = 1) {
  const auto t = detail::split_ws(text);
  if (t.size() != 15 && t.size() != 16)
    throw ParseError("expected 15 or 16 fields, got " + std::to_string(t.size()), line);
  using detail::parse_real;
  KittiObject o;
  o.type = std::string(t[0]);
  o.truncated = parse_real(t[1], line, "truncated");
  o.occluded = detail::parse_int(t[2], line, "occluded");
  if (o.occluded < -1 || o.occluded > 3) throw ParseError("occluded must be in [-1, 3]", line);
  o.alpha = parse_real(t[3], line, "alpha");
  o.bbox = {parse_real(t[4], line, "x1"), parse_real(t[5], line, "y1"), parse_real(t[6], line, "x2"),
            parse_real(t[7], line, "y2")};
  o.h = parse_real(t[8], line, "h");
  o.w = parse_real(t[9], line, "w");
  o.l = parse_real(t[10], line, "l");
  o.x = parse_real(t[11], line, "x");
  o.y = parse_real(t[12], line, "y");
  o.z = parse_real(t[13], line, "z");
  o.rotation_y = parse_real(t[14], line, "rotation_y");
  if (t.size() == 16) o.score = parse_real(t[15], line, "score");
  return o;
}

namespace detail {
inline std::string fixed2(double v) {
  const int n = std::snprintf(nullptr, 0, "%.2f", v);
  std::string s(static_cast<std::size_t>(n), '\0');
  std::snprintf(s.data(), s.size() + 1, "%.2f", v);
  return s;
}
}  // namespace detail

inline std::string format_kitti_label(const KittiObject& o) {
  using detail::fixed2;
  std::string s = o.type;
  s += ' ' + fixed2(o.truncated) + ' ' + std::to_string(o.occluded);
  for (double v : {o.alpha, o.bbox.x1, o.bbox.y1, o.bbox.x2, o.bbox.y2, o.h, o.w, o.l, o.x, o.y, o.z, o.rotation_y})
    s += ' ' + fixed2(v);
  if (o.score) s += ' ' + fixed2(*o.score);
  return s;
}

// Blank lines are skipped; line numbers in errors are 1-based file lines.
inline std::vector<KittiObject> parse_kitti_labels(std::istream& in) {
  std::vector<KittiObject> out;
  std::string line;
  std::size_t no = 0;
  while (std::getline(in, line)) {
    ++no;
    if (detail::split_ws(line).empty()) continue;
    out.push_back(parse_kitti_label(line, no));
  }
  return out;
}

inline std::vector<KittiObject> read_kitti_label_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open '" + path.string() + "'");
  try {
    return parse_kitti_labels(in);
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

inline void write_kitti_label_file(const std::filesystem::path& path, const std::vector<KittiObject>& objs) {
  std::ofstream out(path);
  if (!out) throw InvalidArgument("cannot write '" + path.string() + "'");
  for (const auto& o : objs) out << format_kitti_label(o) << '\n';
}

// Box conversion: KITTI stores the bottom center, Box3D the geometric center.
inline Box3D kitti_to_box3d(const KittiObject& o) {
  Box3D b;
  b.center = Vec3(o.x, o.y - o.h / 2, o.z);
  b.dims = {o.h, o.w, o.l};
  b.rotation = yaw_to_rotation(o.rotation_y);
  return b;
}

inline KittiObject box3d_to_kitti(const std::string& type, const Box2D& box2d, const Box3D& b,
                                  std::optional<double> score = std::nullopt, double truncated = 0,
                                  int occluded = 0) {
  KittiObject o;
  o.type = type;
  o.truncated = truncated;
  o.occluded = occluded;
  o.rotation_y = rotation_to_yaw(b.rotation);
  o.alpha = egocentric_yaw_to_allocentric(o.rotation_y, b.center);
  o.bbox = box2d;
  o.h = b.dims.h;
  o.w = b.dims.w;
  o.l = b.dims.l;
  o.x = b.center.x();
  o.y = b.center.y() + b.dims.h / 2;
  o.z = b.center.z();
  o.score = score;
  return o;
}

// ============================================================================
// Calibration
// ============================================================================

struct CalibResult {
  CameraIntrinsics intrinsics;
  std::array<double, 12> p2{};
  bool has_baseline_offset = false;  // P2 translation column nonzero
};

inline CalibResult parse_kitti_calib(std::istream& in) {
  std::string line;
  std::size_t no = 0;
  while (std::getline(in, line)) {
    ++no;
    const auto t = detail::split_ws(line);
    if (t.empty() || t[0] != "P2:") continue;
    if (t.size() != 13) throw ParseError("P2 row must have 12 numbers", no);
    CalibResult r;
    for (int i = 0; i < 12; ++i) r.p2[i] = detail::parse_real(t[i + 1], no, "P2");
    r.intrinsics = {r.p2[0], r.p2[5], r.p2[2], r.p2[6]};
    if (!r.intrinsics.valid()) throw ParseError("P2 focal lengths must be positive", no);
    r.has_baseline_offset = r.p2[3] != 0 || r.p2[7] != 0 || r.p2[11] != 0;
    return r;
  }
  throw ParseError("calibration has no P2 row");
}

inline CalibResult parse_kitti_calib(const std::string& text) {
  std::istringstream in(text);
  return parse_kitti_calib(in);
}

inline CalibResult read_kitti_calib_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open '" + path.string() + "'");
  return parse_kitti_calib(in);
}

inline std::string format_kitti_calib(const CameraIntrinsics& k) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "P2: %.12e 0.000000000000e+00 %.12e 0.000000000000e+00 0.000000000000e+00 %.12e %.12e "
                "0.000000000000e+00 0.000000000000e+00 0.000000000000e+00 1.000000000000e+00 0.000000000000e+00\n",
                k.fx, k.cx, k.fy, k.cy);
  return buf;
}

// ============================================================================
// Depth-feature dumps
// ============================================================================
//
// Container kind "depth_features" with tensors
//   index      [N, 2]   (image, instance), integral values
//   features   [N, 64]  depth-head features
//   pred_depth [N]      depth predicted by the model that produced the features
//   gt_depth   [N]      ground-truth depth of the instance

struct FeatureRecord {
  int image = 0;
  int instance = 0;
  std::array<float, kDepthFeatureDim> feature{};
  float pred_depth = 0;
  float gt_depth = 0;
  bool operator==(const FeatureRecord&) const = default;
};

inline TensorContainer features_to_container(const std::vector<FeatureRecord>& recs) {
  const auto n = static_cast<std::int64_t>(recs.size());
  NamedTensor idx{"index", {n, 2}, {}}, feat{"features", {n, kDepthFeatureDim}, {}};
  NamedTensor pd{"pred_depth", {n}, {}}, gd{"gt_depth", {n}, {}};
  for (const auto& r : recs) {
    idx.data.push_back(static_cast<float>(r.image));
    idx.data.push_back(static_cast<float>(r.instance));
    feat.data.insert(feat.data.end(), r.feature.begin(), r.feature.end());
    pd.data.push_back(r.pred_depth);
    gd.data.push_back(r.gt_depth);
  }
  TensorContainer c;
  c.kind = "depth_features";
  c.meta = {{"feature_dim", kDepthFeatureDim}};
  c.tensors = {std::move(idx), std::move(feat), std::move(pd), std::move(gd)};
  return c;
}

inline std::vector<FeatureRecord> features_from_container(const TensorContainer& c) {
  if (c.kind != "depth_features") throw ParseError("features: container kind is '" + c.kind + "'");
  const auto& idx = c.at("index");
  const auto& feat = c.at("features");
  const auto& pd = c.at("pred_depth");
  const auto& gd = c.at("gt_depth");
  if (feat.shape.size() != 2 || feat.shape[1] != kDepthFeatureDim)
    throw ParseError("features: expected feature vectors of length 64");
  const auto n = feat.shape[0];
  if (idx.shape != std::vector<std::int64_t>{n, 2} || pd.shape != std::vector<std::int64_t>{n} ||
      gd.shape != std::vector<std::int64_t>{n})
    throw ParseError("features: tensor shapes disagree on instance count");
  std::vector<FeatureRecord> out(static_cast<std::size_t>(n));
  for (std::int64_t i = 0; i < n; ++i) {
    const float im = idx.data[2 * i], in = idx.data[2 * i + 1];
    if (im != std::floor(im) || in != std::floor(in) || im < 0 || in < 0)
      throw ParseError("features: index entries must be non-negative integers");
    auto& r = out[i];
    r.image = static_cast<int>(im);
    r.instance = static_cast<int>(in);
    std::copy_n(feat.data.begin() + i * kDepthFeatureDim, kDepthFeatureDim, r.feature.begin());
    r.pred_depth = pd.data[i];
    r.gt_depth = gd.data[i];
  }
  return out;
}

inline void write_features(const std::string& path, const std::vector<FeatureRecord>& recs) {
  write_container(path, features_to_container(recs));
}

inline std::vector<FeatureRecord> read_features(const std::string& path) {
  return features_from_container(read_container(path));
}

}  // namespace mono3d
