#pragma once

// 3D-aware prediction <-> ground-truth assignment.
//
// A ground truth may only claim anchors whose center lies inside its 2D box.
// Each (gt, anchor) candidate is scored by
//   s2d   = p^alpha * IoU2D^beta
//   s     = s2d * max(0, MGIoU3D)^gamma
// and every GT keeps up to k anchors. An anchor wanted by several GTs goes to
// the pair with the higher score and the losing GT falls back to its next
// candidate. With the total order (score desc, anchor asc, gt asc) this is
// the unique stable outcome, computed here by one greedy pass over all
// candidate pairs.

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "mono3d/geometry.hpp"
#include "mono3d/mgiou.hpp"

namespace mono3d {

// ============================================================================
// Types
// ============================================================================

inline constexpr int kStrides[2] = {8, 16};

struct AnchorPoint {
  int stride = 8;
  int row = 0, col = 0;
  double x = 0, y = 0;  // pixel center: stride * (index + 0.5)
};

// Anchor centers for every level, stride-8 block first, each row-major.
inline std::vector<AnchorPoint> make_anchor_grid(int image_width, int image_height,
                                                 std::span<const int> strides = kStrides) {
  std::vector<AnchorPoint> out;
  for (int s : strides) {
    const int h = (image_height + s - 1) / s;
    const int w = (image_width + s - 1) / s;
    for (int r = 0; r < h; ++r)
      for (int c = 0; c < w; ++c) out.push_back({s, r, c, s * (c + 0.5), s * (r + 0.5)});
  }
  return out;
}

struct Prediction {
  std::vector<double> class_probs;
  Box2D box2d;
  Box3D box3d;
};

struct GroundTruth {
  int class_id = 0;
  Box2D box2d;
  Box3D box3d;
};

enum class AssignMode { kOneToOne, kOneToMany };
enum class MatchScore { k2D, k2D3D };

struct MatchConfig {
  double alpha = 0.5;
  double beta = 1.0;
  double gamma = 1.0;
  int topk = 10;  // used by the one-to-many head; one-to-one always keeps 1
  MatchScore score = MatchScore::k2D3D;

  void validate() const {
    require(alpha >= 0 && beta >= 0 && gamma >= 0, "MatchConfig: negative exponent");
    require(topk >= 1, "MatchConfig: topk must be >= 1");
  }
};

struct MatchedPair {
  int gt = 0;
  int anchor = 0;
  double score = 0;
  bool operator==(const MatchedPair&) const = default;
};

struct AssignmentResult {
  std::vector<MatchedPair> pairs;  // sorted by (gt, anchor)
  std::vector<int> unmatched_gt;
  bool operator==(const AssignmentResult&) const = default;
};

// ============================================================================
// Scores
// ============================================================================

// Inclusive inside test; a zero-area box has no candidates.
inline std::vector<int> candidate_anchors(const Box2D& gt, std::span<const AnchorPoint> anchors) {
  std::vector<int> out;
  if (!(gt.area() > 0)) return out;
  for (std::size_t i = 0; i < anchors.size(); ++i) {
    const auto& a = anchors[i];
    if (a.x >= gt.x1 && a.x <= gt.x2 && a.y >= gt.y1 && a.y <= gt.y2) out.push_back(static_cast<int>(i));
  }
  return out;
}

// std::pow(0, 0) == 1, so a zero exponent switches a factor off entirely.
inline double score_2d(double prob, double iou, const MatchConfig& cfg) {
  return std::pow(prob, cfg.alpha) * std::pow(iou, cfg.beta);
}

inline double score_2d3d(double s2d, double mgiou_pos, const MatchConfig& cfg) {
  return s2d * std::pow(mgiou_pos, cfg.gamma);
}

inline double pair_score(const GroundTruth& gt, const Prediction& pred, const MatchConfig& cfg) {
  if (gt.class_id < 0 || static_cast<std::size_t>(gt.class_id) >= pred.class_probs.size())
    throw InvalidArgument("pair_score: gt class outside prediction class range");
  const double s2d = score_2d(pred.class_probs[gt.class_id], iou_2d(pred.box2d, gt.box2d), cfg);
  if (cfg.score == MatchScore::k2D) return s2d;
  return score_2d3d(s2d, mgiou_clamped(pred.box3d, gt.box3d), cfg);
}

// ============================================================================
// Assignment
// ============================================================================

inline int topk_for(AssignMode mode, const MatchConfig& cfg) {
  return mode == AssignMode::kOneToOne ? 1 : cfg.topk;
}

// Candidate pairs with a strictly positive score.
inline std::vector<MatchedPair> scored_candidates(std::span<const GroundTruth> gts,
                                                  std::span<const Prediction> preds,
                                                  std::span<const AnchorPoint> anchors,
                                                  const MatchConfig& cfg) {
  require(preds.size() == anchors.size(), "assign: one prediction per anchor required");
  std::vector<MatchedPair> out;
  for (std::size_t j = 0; j < gts.size(); ++j) {
    for (int a : candidate_anchors(gts[j].box2d, anchors)) {
      const double s = pair_score(gts[j], preds[a], cfg);
      if (s > 0) out.push_back({static_cast<int>(j), a, s});
    }
  }
  return out;
}

// Strict total order used for ranking and tie-breaking.
inline bool pair_precedes(const MatchedPair& x, const MatchedPair& y) {
  if (x.score != y.score) return x.score > y.score;
  if (x.anchor != y.anchor) return x.anchor < y.anchor;
  return x.gt < y.gt;
}

inline AssignmentResult assign(std::span<const GroundTruth> gts, std::span<const Prediction> preds,
                               std::span<const AnchorPoint> anchors, const MatchConfig& cfg,
                               AssignMode mode) {
  cfg.validate();
  const int k = topk_for(mode, cfg);
  auto cands = scored_candidates(gts, preds, anchors, cfg);
  std::sort(cands.begin(), cands.end(), pair_precedes);

  std::vector<char> anchor_taken(anchors.size(), 0);
  std::vector<int> gt_count(gts.size(), 0);
  AssignmentResult res;
  for (const auto& p : cands) {
    if (anchor_taken[p.anchor] || gt_count[p.gt] >= k) continue;
    anchor_taken[p.anchor] = 1;
    ++gt_count[p.gt];
    res.pairs.push_back(p);
  }
  std::sort(res.pairs.begin(), res.pairs.end(), [](const MatchedPair& x, const MatchedPair& y) {
    return x.gt != y.gt ? x.gt < y.gt : x.anchor < y.anchor;
  });
  for (std::size_t j = 0; j < gts.size(); ++j)
    if (gt_count[j] == 0) res.unmatched_gt.push_back(static_cast<int>(j));
  return res;
}

// Classification targets from an assignment: 1 at (anchor, gt class), 0
// elsewhere. Layout [anchor][class].
inline std::vector<double> classification_targets(const AssignmentResult& res,
                                                  std::span<const GroundTruth> gts,
                                                  std::size_t num_anchors, int num_classes) {
  std::vector<double> t(num_anchors * num_classes, 0.0);
  for (const auto& p : res.pairs) t[p.anchor * num_classes + gts[p.gt].class_id] = 1.0;
  return t;
}

}  // namespace mono3d
