#pragma once

// Supervised loss terms. Every term returns its value together with the
// analytic (sub)gradient with respect to its direct prediction inputs.
// Regression terms are averaged over matched instances; classification BCE
// is a plain sum over all locations and classes.

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <span>
#include <vector>

#include "mono3d/geometry.hpp"

namespace mono3d {

struct LossResult {
  double value = 0;
  std::vector<double> grad;  // d value / d prediction, same layout as the input
  bool empty = false;        // no instances contributed
};

struct DepthLossResult {
  double value = 0;
  std::vector<double> grad_depth;
  std::vector<double> grad_sigma;
  bool empty = false;
};

struct LossWeights {
  double d2d = 0.02;
  double o2d = 0.02;
  double d3d = 1.0;
  double o3d = 1.0;
  double rot = 1.0;
  double z = 1.0;
  double distill = 0.1;

  void validate() const {
    for (double w : {d2d, o2d, d3d, o3d, rot, z, distill})
      require(w >= 0 && std::isfinite(w), "LossWeights: weights must be finite and >= 0");
  }
};

// Matched-instance regression targets. o2d, d2d and o3d are in pixels,
// d3d_offset in meters relative to the class-mean dimensions.
struct InstanceTarget {
  std::array<double, 2> o2d{};
  std::array<double, 2> d2d{};
  std::array<double, 3> d3d_offset{};
  std::array<double, 2> o3d{};
  double z = 1;
  OrientationMultiBin bin;
  Rotation rotation_alloc;
  int class_id = 0;
};

inline constexpr double kProbClamp = 1e-7;

namespace detail {
inline double sign(double x) { return (x > 0) - (x < 0); }

// Pairwise tree reduction; fixed order independent of any parallel split.
inline double pairwise_sum(std::span<const double> v) {
  if (v.size() <= 8) {
    double s = 0;
    for (double x : v) s += x;
    return s;
  }
  const std::size_t h = v.size() / 2;
  return pairwise_sum(v.first(h)) + pairwise_sum(v.subspan(h));
}
}  // namespace detail

// ============================================================================
// Classification
// ============================================================================

inline LossResult bce_cls(std::span<const double> targets, std::span<const double> preds) {
  if (targets.size() != preds.size()) throw InvalidArgument("bce_cls: shape mismatch");
  LossResult r;
  r.grad.resize(preds.size());
  std::vector<double> terms(preds.size());
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const double t = targets[i];
    const double raw = preds[i];
    const double p = std::clamp(raw, kProbClamp, 1.0 - kProbClamp);
    terms[i] = -(t * std::log(p) + (1 - t) * std::log(1 - p));
    // The clamp is flat outside its range.
    r.grad[i] = (raw > kProbClamp && raw < 1.0 - kProbClamp) ? (-t / p + (1 - t) / (1 - p)) : 0.0;
  }
  r.value = detail::pairwise_sum(terms);
  r.empty = preds.empty();
  return r;
}

// Multi-level form: one (targets, preds) pair per pyramid level.
inline double bce_cls_levels(std::span<const std::vector<double>> targets,
                             std::span<const std::vector<double>> preds) {
  if (targets.size() != preds.size()) throw InvalidArgument("bce_cls: level count mismatch");
  double s = 0;
  for (std::size_t l = 0; l < preds.size(); ++l) s += bce_cls(targets[l], preds[l]).value;
  return s;
}

// ============================================================================
// L1 regression
// ============================================================================

// gt/pred hold `count` instances of `dim` values each, instance-major.
// Value is sum |gt - pred| / count.
inline LossResult l1_term(std::span<const double> gt, std::span<const double> pred, std::size_t count) {
  if (gt.size() != pred.size()) throw InvalidArgument("l1_term: shape mismatch");
  LossResult r;
  if (count == 0) {
    if (!gt.empty()) throw InvalidArgument("l1_term: values supplied for zero instances");
    r.empty = true;
    return r;
  }
  if (gt.size() % count != 0) throw InvalidArgument("l1_term: size not divisible by instance count");
  r.grad.resize(pred.size());
  std::vector<double> terms(pred.size());
  const double inv = 1.0 / static_cast<double>(count);
  for (std::size_t i = 0; i < pred.size(); ++i) {
    terms[i] = std::abs(gt[i] - pred[i]);
    r.grad[i] = detail::sign(pred[i] - gt[i]) * inv;
  }
  r.value = detail::pairwise_sum(terms) * inv;
  return r;
}

// ============================================================================
// Laplacian depth
// ============================================================================

inline DepthLossResult depth_laplacian(std::span<const double> z, std::span<const double> z_hat,
                                       std::span<const double> sigma_hat) {
  if (z.size() != z_hat.size() || z.size() != sigma_hat.size())
    throw InvalidArgument("depth_laplacian: shape mismatch");
  DepthLossResult r;
  const std::size_t n = z.size();
  if (n == 0) {
    r.empty = true;
    return r;
  }
  constexpr double kSqrt2 = std::numbers::sqrt2;
  const double inv = 1.0 / static_cast<double>(n);
  r.grad_depth.resize(n);
  r.grad_sigma.resize(n);
  std::vector<double> terms(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double s = sigma_hat[i];
    if (!(s > 0)) throw InvalidArgument("depth_laplacian: non-positive sigma");
    const double d = z[i] - z_hat[i];
    terms[i] = kSqrt2 * std::abs(d) / s + 0.5 * std::log(s);
    r.grad_depth[i] = -kSqrt2 * detail::sign(d) / s * inv;
    r.grad_sigma[i] = (-kSqrt2 * std::abs(d) / (s * s) + 1.0 / (2.0 * s)) * inv;
  }
  r.value = detail::pairwise_sum(terms) * inv;
  return r;
}

// ============================================================================
// Orientation
// ============================================================================

inline constexpr int kMultiBinChannels = 2 * kNumOrientationBins;

// pred: per instance 12 bin logits followed by 12 residuals.
// Per instance: CE(softmax(logits), gt bin) + |gt residual - residual[gt bin]|.
inline LossResult orientation_multibin_loss(std::span<const OrientationMultiBin> gt,
                                            std::span<const double> pred) {
  if (pred.size() != gt.size() * kMultiBinChannels)
    throw InvalidArgument("orientation_multibin_loss: expected 24 channels per instance");
  LossResult r;
  if (gt.empty()) {
    r.empty = true;
    return r;
  }
  const double inv = 1.0 / static_cast<double>(gt.size());
  r.grad.assign(pred.size(), 0.0);
  std::vector<double> terms(gt.size());
  for (std::size_t i = 0; i < gt.size(); ++i) {
    const int b = gt[i].bin_index;
    require(b >= 0 && b < kNumOrientationBins, "orientation_multibin_loss: bin out of range");
    const double* logits = pred.data() + i * kMultiBinChannels;
    const double* res = logits + kNumOrientationBins;
    double* g = r.grad.data() + i * kMultiBinChannels;

    const double m = *std::max_element(logits, logits + kNumOrientationBins);
    double denom = 0;
    for (int c = 0; c < kNumOrientationBins; ++c) denom += std::exp(logits[c] - m);
    const double log_z = m + std::log(denom);
    const double ce = log_z - logits[b];
    for (int c = 0; c < kNumOrientationBins; ++c)
      g[c] = (std::exp(logits[c] - log_z) - (c == b ? 1.0 : 0.0)) * inv;

    const double dres = gt[i].residual - res[b];
    g[kNumOrientationBins + b] = -detail::sign(dres) * inv;
    terms[i] = ce + std::abs(dres);
  }
  r.value = detail::pairwise_sum(terms) * inv;
  return r;
}

// Per instance: sum of |R_gt - R_pred| entries; averaged over instances.
// Gradient layout: 9 row-major entries per instance.
inline LossResult orientation_so3_loss(std::span<const Rotation> gt, std::span<const Mat3> pred) {
  if (gt.size() != pred.size()) throw InvalidArgument("orientation_so3_loss: size mismatch");
  LossResult r;
  if (gt.empty()) {
    r.empty = true;
    return r;
  }
  const double inv = 1.0 / static_cast<double>(gt.size());
  r.grad.resize(gt.size() * 9);
  std::vector<double> terms(gt.size());
  for (std::size_t i = 0; i < gt.size(); ++i) {
    double s = 0;
    for (int a = 0; a < 3; ++a)
      for (int b = 0; b < 3; ++b) {
        const double d = pred[i](a, b) - gt[i](a, b);
        s += std::abs(d);
        r.grad[i * 9 + a * 3 + b] = detail::sign(d) * inv;
      }
    terms[i] = s;
  }
  r.value = detail::pairwise_sum(terms) * inv;
  return r;
}

// ============================================================================
// Total
// ============================================================================

struct LossComponents {
  double cls = 0, d2d = 0, o2d = 0, d3d = 0, o3d = 0, rot = 0, z = 0, distill = 0;
};

inline double total_loss(const LossComponents& c, const LossWeights& w) {
  for (double v : {c.cls, c.d2d, c.o2d, c.d3d, c.o3d, c.rot, c.z, c.distill})
    if (!std::isfinite(v)) throw InvalidArgument("total_loss: non-finite component");
  w.validate();
  return c.cls + w.d2d * c.d2d + w.o2d * c.o2d + w.d3d * c.d3d + w.o3d * c.o3d + w.rot * c.rot +
         w.z * c.z + w.distill * c.distill;
}

}  // namespace mono3d
