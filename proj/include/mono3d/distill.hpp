#pragma once

// Asymmetric mixup distillation: the teacher sees two clean images, the
// student sees their pixel blend. Ground-truth objects are matched one-to-one
// to a teacher prediction (on the object's own clean image) and to a student
// prediction (on the blend); the depth-head features of each pair are aligned
// with an L1 loss weighted per instance by teacher quality eta and per channel
// by importance omega.

#include <algorithm>
#include <array>
#include <cmath>
#include <optional>
#include <span>
#include <vector>

#include "mono3d/assign.hpp"
#include "mono3d/losses.hpp"

namespace mono3d {

inline constexpr int kDepthFeatureDim = 64;
using DepthFeature = std::array<double, kDepthFeatureDim>;

struct DistillPair {
  DepthFeature feat_teacher{};
  DepthFeature feat_student{};
  double z_gt = 1;
  double z_teacher = 1;
  int image = 0;
  int instance = 0;
};

struct ImportanceWeights {
  DepthFeature omega{};
};

struct DistillConfig {
  double epsilon = 0.1;
  std::optional<double> eta_cap;  // no cap by default
};

// eta = z / max(|z - z_teacher|, epsilon)
inline double quality_eta(double z, double z_teacher, double epsilon = 0.1) {
  require(z > 0, "quality_eta: ground-truth depth must be positive");
  require(epsilon > 0, "quality_eta: epsilon must be positive");
  return z / std::max(std::abs(z - z_teacher), epsilon);
}

inline double quality_eta(double z, double z_teacher, const DistillConfig& cfg) {
  const double eta = quality_eta(z, z_teacher, cfg.epsilon);
  return cfg.eta_cap ? std::min(eta, *cfg.eta_cap) : eta;
}

// omega_q = |w_q| / sum |w|
inline ImportanceWeights importance_omega(std::span<const double> w_final) {
  require(w_final.size() == kDepthFeatureDim, "importance_omega: expected 64 weights");
  double total = 0;
  for (double w : w_final) total += std::abs(w);
  if (!(total > 0) || !std::isfinite(total)) throw InvalidArgument("importance_omega: all-zero weights");
  ImportanceWeights out;
  for (int q = 0; q < kDepthFeatureDim; ++q) out.omega[q] = std::abs(w_final[q]) / total;
  return out;
}

struct DistillLossResult {
  double value = 0;
  std::vector<DepthFeature> grad_student;  // one per pair
};

inline DistillLossResult distill_loss(std::span<const DistillPair> pairs, const ImportanceWeights& omega,
                                      std::span<const double> etas) {
  if (pairs.empty()) throw InvalidArgument("distill_loss: empty pair list");
  if (etas.size() != pairs.size()) throw InvalidArgument("distill_loss: one eta per pair required");
  const double inv = 1.0 / static_cast<double>(pairs.size());
  DistillLossResult r;
  r.grad_student.resize(pairs.size());
  std::vector<double> terms(pairs.size());
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const auto& p = pairs[i];
    double s = 0;
    for (int q = 0; q < kDepthFeatureDim; ++q) {
      const double d = p.feat_teacher[q] - p.feat_student[q];
      s += omega.omega[q] * std::abs(d);
      r.grad_student[i][q] = -omega.omega[q] * etas[i] * detail::sign(d) * inv;
    }
    terms[i] = etas[i] * s;
  }
  r.value = detail::pairwise_sum(terms) * inv;
  return r;
}

// ============================================================================
// Mixup
// ============================================================================

struct Image {
  int width = 0, height = 0, channels = 1;
  std::vector<float> pixels;  // HWC, row-major

  bool same_shape(const Image& o) const {
    return width == o.width && height == o.height && channels == o.channels;
  }
};

template <typename Label>
struct SourcedLabel {
  Label label;
  int source = 0;  // 0: first image, 1: second image
};

template <typename Label>
struct MixupResult {
  Image image;
  std::vector<SourcedLabel<Label>> labels;
};

template <typename Label>
MixupResult<Label> mixup_blend(const Image& a, std::span<const Label> labels_a, const Image& b,
                               std::span<const Label> labels_b, double ratio = 0.5) {
  if (!a.same_shape(b) || a.pixels.size() != b.pixels.size())
    throw InvalidArgument("mixup_blend: image shape mismatch");
  require(ratio >= 0 && ratio <= 1, "mixup_blend: ratio outside [0, 1]");
  MixupResult<Label> out;
  out.image = a;
  const float r = static_cast<float>(ratio);
  for (std::size_t i = 0; i < a.pixels.size(); ++i)
    out.image.pixels[i] = r * a.pixels[i] + (1.0f - r) * b.pixels[i];
  for (const auto& l : labels_a) out.labels.push_back({l, 0});
  for (const auto& l : labels_b) out.labels.push_back({l, 1});
  return out;
}

// ============================================================================
// Teacher / student pairing
// ============================================================================

struct PairIndex {
  int gt = 0;              // index into the blended (union) label list
  int source = 0;          // clean image the object came from
  int teacher_anchor = 0;  // on the clean image of `source`
  int student_anchor = 0;  // on the blended image
};

struct PairingResult {
  std::vector<PairIndex> pairs;
  std::vector<int> unpaired_gt;
  int unmatched_teacher = 0;
  int unmatched_student = 0;
};

// gts: union label set of the blend, tagged with their source image.
// teacher_preds[s]: teacher predictions on clean image s (one per anchor).
// student_preds: student predictions on the blended image (one per anchor).
inline PairingResult pair_teacher_student(std::span<const SourcedLabel<GroundTruth>> gts,
                                          std::span<const std::vector<Prediction>> teacher_preds,
                                          std::span<const Prediction> student_preds,
                                          std::span<const AnchorPoint> anchors, const MatchConfig& cfg) {
  constexpr int kNone = -1;
  std::vector<int> teacher_anchor(gts.size(), kNone);
  std::vector<int> student_anchor(gts.size(), kNone);

  for (std::size_t s = 0; s < teacher_preds.size(); ++s) {
    std::vector<GroundTruth> local;
    std::vector<int> back;
    for (std::size_t j = 0; j < gts.size(); ++j)
      if (gts[j].source == static_cast<int>(s)) {
        local.push_back(gts[j].label);
        back.push_back(static_cast<int>(j));
      }
    if (local.empty()) continue;
    const auto res = assign(local, teacher_preds[s], anchors, cfg, AssignMode::kOneToOne);
    for (const auto& p : res.pairs) teacher_anchor[back[p.gt]] = p.anchor;
  }

  std::vector<GroundTruth> all;
  all.reserve(gts.size());
  for (const auto& g : gts) all.push_back(g.label);
  const auto res = assign(all, student_preds, anchors, cfg, AssignMode::kOneToOne);
  for (const auto& p : res.pairs) student_anchor[p.gt] = p.anchor;

  PairingResult out;
  for (std::size_t j = 0; j < gts.size(); ++j) {
    const bool has_t = teacher_anchor[j] != kNone;
    const bool has_s = student_anchor[j] != kNone;
    if (!has_t) ++out.unmatched_teacher;
    if (!has_s) ++out.unmatched_student;
    if (has_t && has_s)
      out.pairs.push_back({static_cast<int>(j), gts[j].source, teacher_anchor[j], student_anchor[j]});
    else
      out.unpaired_gt.push_back(static_cast<int>(j));
  }
  return out;
}

}  // namespace mono3d
