#pragma once

// KITTI-protocol average precision (AP_3D|R40 and AP_BEV|R40).
//
// Difficulty thresholds and the 40-point recall sampling follow the official
// KITTI object devkit:
//   Easy:     2D height >= 40 px, occlusion <= 0, truncation <= 0.15
//   Moderate: 2D height >= 25 px, occlusion <= 1, truncation <= 0.30
//   Hard:     2D height >= 25 px, occlusion <= 2, truncation <= 0.50
// Evaluating at difficulty d counts every object whose own level is d or
// easier; everything else of that class is ignored (neither TP nor FP when
// matched). Neighbouring classes (Van for Car, Person_sitting for
// Pedestrian) and DontCare regions are not modelled.

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>  // nlohmann/json (vendor/)

#include "mono3d/geometry.hpp"

namespace mono3d {

enum class Difficulty { kEasy = 0, kModerate = 1, kHard = 2, kIgnored = 3 };
enum class IouMetric { k3D, kBEV };

inline constexpr std::array<double, 3> kMinHeight = {40, 25, 25};
inline constexpr std::array<int, 3> kMaxOcclusion = {0, 1, 2};
inline constexpr std::array<double, 3> kMaxTruncation = {0.15, 0.30, 0.50};
inline constexpr int kRecallPoints = 40;

inline const char* difficulty_name(Difficulty d) {
  switch (d) {
    case Difficulty::kEasy: return "Easy";
    case Difficulty::kModerate: return "Moderate";
    case Difficulty::kHard: return "Hard";
    default: return "Ignored";
  }
}

inline const char* metric_name(IouMetric m) { return m == IouMetric::k3D ? "3D" : "BEV"; }

struct GroundTruthObject {
  std::string cls;
  Box2D box2d;
  Box3D box3d;
  double truncation = 0;
  int occlusion = 0;
};

struct EvalDetection {
  std::string cls;
  double confidence = 0;
  Box2D box2d;
  Box3D box3d;
};

// Strictest level whose thresholds the object meets.
inline Difficulty difficulty_filter(const GroundTruthObject& gt) {
  const double height = gt.box2d.height();
  for (int d = 0; d < 3; ++d)
    if (height >= kMinHeight[d] && gt.occlusion <= kMaxOcclusion[d] && gt.truncation <= kMaxTruncation[d])
      return static_cast<Difficulty>(d);
  return Difficulty::kIgnored;
}

// ============================================================================
// Matching
// ============================================================================

enum class PrFlag { kTP, kFP, kIgnored };

// dets must be sorted by confidence (descending). Each detection takes the
// highest-IoU unmatched eligible GT with IoU > threshold (TP). Failing that,
// a match against any ineligible GT discards it (kIgnored); otherwise FP.
template <typename IouFn>
std::vector<PrFlag> match_for_pr(std::span<const EvalDetection> dets, std::span<const GroundTruthObject> gts,
                                 std::span<const char> eligible, IouFn&& iou, double threshold) {
  require(eligible.size() == gts.size(), "match_for_pr: one eligibility flag per GT");
  for (std::size_t i = 1; i < dets.size(); ++i)
    require(dets[i - 1].confidence >= dets[i].confidence, "match_for_pr: detections not sorted by confidence");
  std::vector<char> taken(gts.size(), 0);
  std::vector<PrFlag> flags(dets.size(), PrFlag::kFP);
  for (std::size_t i = 0; i < dets.size(); ++i) {
    int best = -1;
    double best_iou = threshold;
    bool hits_ignored = false;
    for (std::size_t j = 0; j < gts.size(); ++j) {
      const double v = iou(dets[i], gts[j]);
      if (!(v > threshold)) continue;
      if (!eligible[j]) {
        hits_ignored = true;
        continue;
      }
      if (!taken[j] && (best < 0 || v > best_iou)) {
        best = static_cast<int>(j);
        best_iou = v;
      }
    }
    if (best >= 0) {
      taken[best] = 1;
      flags[i] = PrFlag::kTP;
    } else if (hits_ignored) {
      flags[i] = PrFlag::kIgnored;
    }
  }
  return flags;
}

// ============================================================================
// AP at 40 recall points
// ============================================================================

struct ApResult {
  double ap = 0;                                 // percent
  std::array<double, kRecallPoints> precision{};  // interpolated, at recall i/40
  bool no_gt = false;
};

// flags: TP/FP in descending confidence order (ignored entries are skipped).
inline ApResult ap_r40(std::span<const PrFlag> flags, std::size_t n_gt) {
  ApResult r;
  if (n_gt == 0) {
    r.no_gt = true;
    return r;
  }
  std::vector<double> rec, prec;
  std::size_t tp = 0, fp = 0;
  for (PrFlag f : flags) {
    if (f == PrFlag::kIgnored) continue;
    (f == PrFlag::kTP ? tp : fp) += 1;
    rec.push_back(static_cast<double>(tp) / static_cast<double>(n_gt));
    prec.push_back(static_cast<double>(tp) / static_cast<double>(tp + fp));
  }
  // Suffix maximum gives max precision at recall >= r.
  for (std::size_t i = prec.size(); i-- > 1;) prec[i - 1] = std::max(prec[i - 1], prec[i]);
  double sum = 0;
  std::size_t j = 0;
  for (int i = 1; i <= kRecallPoints; ++i) {
    const double target = static_cast<double>(i) / kRecallPoints;
    while (j < rec.size() && rec[j] < target - 1e-12) ++j;
    r.precision[i - 1] = j < rec.size() ? prec[j] : 0.0;
    sum += r.precision[i - 1];
  }
  r.ap = 100.0 * sum / kRecallPoints;
  return r;
}

// ============================================================================
// Full evaluation
// ============================================================================

struct EvalConfig {
  std::vector<std::string> classes{"Car", "Pedestrian", "Cyclist"};
  std::vector<double> iou_thresholds{0.7, 0.5, 0.5};  // aligned with classes
  int jobs = 1;
};

struct EvalEntry {
  std::string cls;
  Difficulty difficulty = Difficulty::kModerate;
  IouMetric metric = IouMetric::k3D;
  ApResult result;
  std::size_t n_gt = 0;
  std::size_t n_det = 0;
};

struct EvalReport {
  std::vector<EvalEntry> entries;
  std::size_t n_images = 0;

  const EvalEntry& get(const std::string& cls, Difficulty d, IouMetric m) const {
    for (const auto& e : entries)
      if (e.cls == cls && e.difficulty == d && e.metric == m) return e;
    throw InvalidArgument("EvalReport: no entry for " + cls);
  }
  double ap(const std::string& cls, Difficulty d, IouMetric m) const { return get(cls, d, m).result.ap; }
};

namespace detail {

struct ScoredFlag {
  double confidence;
  std::size_t image;
  std::size_t index;
  PrFlag flag;
};

struct ImageStats {
  std::vector<ScoredFlag> flags;
  std::size_t n_gt = 0;
};

inline ImageStats evaluate_image(std::size_t image, std::span<const EvalDetection> all_dets,
                                 std::span<const GroundTruthObject> all_gts, const std::string& cls,
                                 Difficulty diff, IouMetric metric, double threshold) {
  ImageStats st;
  std::vector<GroundTruthObject> gts;
  std::vector<char> eligible;
  for (const auto& g : all_gts) {
    if (g.cls != cls) continue;
    const Difficulty lvl = difficulty_filter(g);
    const bool ok = lvl != Difficulty::kIgnored && static_cast<int>(lvl) <= static_cast<int>(diff);
    gts.push_back(g);
    eligible.push_back(ok ? 1 : 0);
    st.n_gt += ok;
  }
  std::vector<std::size_t> order;
  for (std::size_t i = 0; i < all_dets.size(); ++i)
    if (all_dets[i].cls == cls) order.push_back(i);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return all_dets[a].confidence > all_dets[b].confidence; });
  std::vector<EvalDetection> dets;
  for (auto i : order) dets.push_back(all_dets[i]);

  auto iou = [&](const EvalDetection& d, const GroundTruthObject& g) {
    return metric == IouMetric::k3D ? iou_3d(d.box3d, g.box3d) : rotated_iou_bev(d.box3d, g.box3d);
  };
  auto flags = match_for_pr(dets, gts, eligible, iou, threshold);
  const double min_h = kMinHeight[static_cast<int>(diff)];
  for (std::size_t i = 0; i < dets.size(); ++i) {
    // Unmatched detections too small for this difficulty do not count.
    if (flags[i] == PrFlag::kFP && dets[i].box2d.height() < min_h) flags[i] = PrFlag::kIgnored;
    st.flags.push_back({dets[i].confidence, image, order[i], flags[i]});
  }
  return st;
}

template <typename Fn>
void parallel_for(std::size_t n, int jobs, Fn&& fn) {
  const std::size_t workers = std::max<std::size_t>(1, std::min<std::size_t>(jobs > 0 ? jobs : 1, n));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w)
    pool.emplace_back([&, w] {
      for (std::size_t i = w; i < n; i += workers) fn(i);
    });
  for (auto& t : pool) t.join();
}

}  // namespace detail

inline EvalReport evaluate(std::span<const std::vector<EvalDetection>> dets,
                           std::span<const std::vector<GroundTruthObject>> gts, const EvalConfig& cfg) {
  require(dets.size() == gts.size(), "evaluate: detection and ground-truth image counts differ");
  require(cfg.classes.size() == cfg.iou_thresholds.size(), "evaluate: one IoU threshold per class");
  for (const auto& img : dets)
    for (const auto& d : img)
      if (std::find(cfg.classes.begin(), cfg.classes.end(), d.cls) == cfg.classes.end())
        throw InvalidArgument("evaluate: detection class '" + d.cls + "' is not in the configured class set");

  EvalReport rep;
  rep.n_images = dets.size();
  for (std::size_t c = 0; c < cfg.classes.size(); ++c) {
    for (int di = 0; di < 3; ++di) {
      for (IouMetric m : {IouMetric::k3D, IouMetric::kBEV}) {
        const auto diff = static_cast<Difficulty>(di);
        std::vector<detail::ImageStats> per_image(dets.size());
        detail::parallel_for(dets.size(), cfg.jobs, [&](std::size_t i) {
          per_image[i] = detail::evaluate_image(i, dets[i], gts[i], cfg.classes[c], diff, m, cfg.iou_thresholds[c]);
        });
        std::vector<detail::ScoredFlag> merged;
        std::size_t n_gt = 0;
        for (auto& st : per_image) {
          n_gt += st.n_gt;
          merged.insert(merged.end(), st.flags.begin(), st.flags.end());
        }
        // Merged in image order, so the stable sort is deterministic.
        std::stable_sort(merged.begin(), merged.end(), [](const auto& a, const auto& b) {
          return a.confidence > b.confidence;
        });
        std::vector<PrFlag> flags;
        std::size_t n_det = 0;
        for (const auto& f : merged) {
          flags.push_back(f.flag);
          n_det += f.flag != PrFlag::kIgnored;
        }
        rep.entries.push_back({cfg.classes[c], diff, m, ap_r40(flags, n_gt), n_gt, n_det});
      }
    }
  }
  return rep;
}

// ============================================================================
// Output
// ============================================================================

inline nlohmann::json report_to_json(const EvalReport& rep) {
  nlohmann::json j;
  j["version"] = 1;
  j["n_images"] = rep.n_images;
  j["results"] = nlohmann::json::array();
  for (const auto& e : rep.entries) {
    nlohmann::json r;
    r["class"] = e.cls;
    r["difficulty"] = difficulty_name(e.difficulty);
    r["metric"] = metric_name(e.metric);
    r["ap_r40"] = e.result.ap;
    r["n_gt"] = e.n_gt;
    r["n_det"] = e.n_det;
    r["no_gt"] = e.result.no_gt;
    r["precision"] = e.result.precision;
    j["results"].push_back(std::move(r));
  }
  return j;
}

inline std::string report_to_csv(const EvalReport& rep) {
  std::string s = "class,difficulty,metric,recall,precision\n";
  char buf[64];
  for (const auto& e : rep.entries)
    for (int i = 0; i < kRecallPoints; ++i) {
      std::snprintf(buf, sizeof buf, ",%.4f,%.6f\n", (i + 1.0) / kRecallPoints, e.result.precision[i]);
      s += e.cls + "," + difficulty_name(e.difficulty) + "," + metric_name(e.metric) + buf;
    }
  return s;
}

inline std::string report_to_table(const EvalReport& rep) {
  std::string s;
  char buf[160];
  std::snprintf(buf, sizeof buf, "%-12s %-4s %8s %8s %8s\n", "class", "iou", "Easy", "Mod.", "Hard");
  s += buf;
  std::vector<std::string> seen;
  for (const auto& e : rep.entries) {
    if (std::find(seen.begin(), seen.end(), e.cls) != seen.end()) continue;
    seen.push_back(e.cls);
    for (IouMetric m : {IouMetric::k3D, IouMetric::kBEV}) {
      std::snprintf(buf, sizeof buf, "%-12s %-4s %8.2f %8.2f %8.2f\n", e.cls.c_str(), metric_name(m),
                    rep.ap(e.cls, Difficulty::kEasy, m), rep.ap(e.cls, Difficulty::kModerate, m),
                    rep.ap(e.cls, Difficulty::kHard, m));
      s += buf;
    }
  }
  return s;
}

}  // namespace mono3d
