#pragma once

// Forward-only convolution engine for the prediction heads.
//
// Every head is conv3x3(C->64, pad 1) -> SiLU -> conv1x1(64->64) -> SiLU ->
// conv1x1(64->out). Its receptive field is therefore exactly one 3x3 window
// of the input map, which is what makes patch-wise (gated) evaluation exact.
//
// Summation order: each output value starts from its bias and accumulates
// w * x over input channel, then kernel row, then kernel column. Out-of-map
// taps contribute w * 0.0f. The dense map path and the single-patch path call
// the same accumulate routine, so both produce bit-identical floats (the
// build disables floating-point contraction).

#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "mono3d/container.hpp"
#include "mono3d/core.hpp"

namespace mono3d {

inline constexpr int kHiddenWidth = 64;

struct Tensor3 {
  int c = 0, h = 0, w = 0;
  std::vector<float> data;  // [c][h][w]

  Tensor3() = default;
  Tensor3(int c_, int h_, int w_, float fill = 0.0f)
      : c(c_), h(h_), w(w_), data(static_cast<std::size_t>(c_) * h_ * w_, fill) {}

  float& at(int ch, int y, int x) { return data[(static_cast<std::size_t>(ch) * h + y) * w + x]; }
  float at(int ch, int y, int x) const { return data[(static_cast<std::size_t>(ch) * h + y) * w + x]; }
  bool in_bounds(int y, int x) const { return y >= 0 && y < h && x >= 0 && x < w; }
};

struct ConvLayer {
  int out_ch = 0, in_ch = 0, ksize = 1;
  std::vector<float> weight;  // [out][in][ky][kx]
  std::vector<float> bias;    // [out]

  float w(int o, int i, int ky, int kx) const {
    return weight[((static_cast<std::size_t>(o) * in_ch + i) * ksize + ky) * ksize + kx];
  }
  void validate() const {
    if (out_ch <= 0 || in_ch <= 0 || (ksize != 1 && ksize != 3) ||
        weight.size() != static_cast<std::size_t>(out_ch) * in_ch * ksize * ksize ||
        bias.size() != static_cast<std::size_t>(out_ch))
      throw InvalidArgument("ConvLayer: inconsistent kernel shape");
  }
};

enum class Activation { kNone, kSiLU };

inline float silu(float x) { return x / (1.0f + std::exp(-x)); }

inline float activate(float x, Activation a) { return a == Activation::kSiLU ? silu(x) : x; }

namespace detail {
// The single accumulation routine shared by every evaluation path.
// fetch(ic, ky, kx) returns the input tap (0.0f outside the map).
template <typename Fetch>
inline float accumulate(const ConvLayer& k, int oc, Fetch&& fetch) {
  float acc = k.bias[oc];
  for (int ic = 0; ic < k.in_ch; ++ic)
    for (int ky = 0; ky < k.ksize; ++ky)
      for (int kx = 0; kx < k.ksize; ++kx) acc += k.w(oc, ic, ky, kx) * fetch(ic, ky, kx);
  return acc;
}
}  // namespace detail

// Stride-1 cross-correlation with zero padding `pad`.
inline Tensor3 conv2d(const Tensor3& in, const ConvLayer& k, int pad, Activation act = Activation::kNone) {
  k.validate();
  if (k.in_ch != in.c) throw InvalidArgument("conv2d: channel mismatch");
  const int oh = in.h + 2 * pad - k.ksize + 1;
  const int ow = in.w + 2 * pad - k.ksize + 1;
  if (oh <= 0 || ow <= 0) throw InvalidArgument("conv2d: output would be empty");
  Tensor3 out(k.out_ch, oh, ow);
  for (int oc = 0; oc < k.out_ch; ++oc)
    for (int oy = 0; oy < oh; ++oy)
      for (int ox = 0; ox < ow; ++ox) {
        const float v = detail::accumulate(k, oc, [&](int ic, int ky, int kx) {
          const int y = oy + ky - pad, x = ox + kx - pad;
          return in.in_bounds(y, x) ? in.at(ic, y, x) : 0.0f;
        });
        out.at(oc, oy, ox) = activate(v, act);
      }
  return out;
}

// ============================================================================
// Heads
// ============================================================================

struct Head {
  std::string name;
  ConvLayer conv3x3;    // C -> 64, 3x3
  ConvLayer conv1x1_a;  // 64 -> 64
  ConvLayer conv1x1_b;  // 64 -> out

  int out_channels() const { return conv1x1_b.out_ch; }
  int in_channels() const { return conv3x3.in_ch; }

  void validate() const {
    conv3x3.validate();
    conv1x1_a.validate();
    conv1x1_b.validate();
    if (conv3x3.ksize != 3 || conv1x1_a.ksize != 1 || conv1x1_b.ksize != 1 ||
        conv3x3.out_ch != kHiddenWidth || conv1x1_a.in_ch != kHiddenWidth ||
        conv1x1_a.out_ch != kHiddenWidth || conv1x1_b.in_ch != kHiddenWidth)
      throw InvalidArgument("Head '" + name + "': layer shapes do not chain");
  }
};

enum class OrientationMode { kMultiBin, kSO3 };

// Regression heads and their output channel counts.
struct HeadSpec {
  const char* name;
  int channels;
};
inline constexpr HeadSpec kRegressionHeadsMultiBin[] = {
    {"offset2d", 2}, {"size2d", 2}, {"offset3d", 2}, {"size3d", 3},
    {"depth", 1},    {"uncertainty", 1}, {"multibin", 24}};
inline constexpr HeadSpec kRegressionHeadsSO3[] = {
    {"offset2d", 2}, {"size2d", 2}, {"offset3d", 2}, {"size3d", 3},
    {"depth", 1},    {"uncertainty", 1}, {"so3", 6}};

struct HeadSet {
  int in_channels = 64;
  int num_classes = 3;
  OrientationMode orientation = OrientationMode::kMultiBin;
  Head cls;
  std::vector<Head> regression;  // in kRegressionHeads* order

  int index_of(const std::string& name) const {
    for (std::size_t i = 0; i < regression.size(); ++i)
      if (regression[i].name == name) return static_cast<int>(i);
    throw InvalidArgument("HeadSet: no head named '" + name + "'");
  }
  const Head& head(const std::string& name) const { return regression[index_of(name)]; }

  void validate() const {
    cls.validate();
    if (cls.out_channels() != num_classes || cls.in_channels() != in_channels)
      throw InvalidArgument("HeadSet: classification head shape mismatch");
    const auto expected = orientation == OrientationMode::kMultiBin
                              ? std::span<const HeadSpec>(kRegressionHeadsMultiBin)
                              : std::span<const HeadSpec>(kRegressionHeadsSO3);
    if (regression.size() != expected.size()) throw InvalidArgument("HeadSet: wrong number of regression heads");
    for (std::size_t i = 0; i < expected.size(); ++i) {
      regression[i].validate();
      if (regression[i].name != expected[i].name || regression[i].out_channels() != expected[i].channels ||
          regression[i].in_channels() != in_channels)
        throw InvalidArgument("HeadSet: head '" + regression[i].name + "' does not match the head table");
    }
  }
};

struct HeadOutput {
  Tensor3 out;     // [out][h][w]
  Tensor3 hidden;  // [64][h][w], input of the final 1x1 conv
};

inline HeadOutput head_forward_with_hidden(const Tensor3& features, const Head& head) {
  Tensor3 a = conv2d(features, head.conv3x3, 1, Activation::kSiLU);
  Tensor3 hidden = conv2d(a, head.conv1x1_a, 0, Activation::kSiLU);
  Tensor3 out = conv2d(hidden, head.conv1x1_b, 0, Activation::kNone);
  return {std::move(out), std::move(hidden)};
}

inline Tensor3 head_forward(const Tensor3& features, const Head& head) {
  return head_forward_with_hidden(features, head).out;
}

// A 3x3xC window, layout [c][ky][kx], zero where the window leaves the map.
struct Patch {
  int c = 0;
  std::vector<float> values;
  float at(int ch, int ky, int kx) const { return values[(static_cast<std::size_t>(ch) * 3 + ky) * 3 + kx]; }
};

struct PatchOutput {
  std::vector<float> out;
  std::vector<float> hidden;  // 64 values
};

// Evaluates a head on one patch: the 3x3 conv consumes the window, the two
// 1x1 convs consume the single remaining cell.
inline PatchOutput head_on_patch(const Patch& p, const Head& head) {
  if (p.c != head.in_channels()) throw InvalidArgument("head_on_patch: channel mismatch");
  std::vector<float> a(kHiddenWidth), hidden(kHiddenWidth);
  for (int oc = 0; oc < kHiddenWidth; ++oc)
    a[oc] = silu(detail::accumulate(head.conv3x3, oc, [&](int ic, int ky, int kx) { return p.at(ic, ky, kx); }));
  for (int oc = 0; oc < kHiddenWidth; ++oc)
    hidden[oc] = silu(detail::accumulate(head.conv1x1_a, oc, [&](int ic, int, int) { return a[ic]; }));
  PatchOutput r;
  r.out.resize(head.out_channels());
  for (int oc = 0; oc < head.out_channels(); ++oc)
    r.out[oc] = detail::accumulate(head.conv1x1_b, oc, [&](int ic, int, int) { return hidden[ic]; });
  r.hidden = std::move(hidden);
  return r;
}

// ============================================================================
// MAC accounting (biases and activations not counted)
// ============================================================================

inline std::uint64_t head_macs_per_location(const Head& h) {
  const std::uint64_t c = h.in_channels();
  return 9 * c * kHiddenWidth + kHiddenWidth * kHiddenWidth +
         static_cast<std::uint64_t>(kHiddenWidth) * h.out_channels();
}

inline std::uint64_t flop_count_dense(const Head& h, std::uint64_t height, std::uint64_t width) {
  return height * width * head_macs_per_location(h);
}

inline std::uint64_t flop_count_gated(const Head& h, std::uint64_t k) { return k * head_macs_per_location(h); }

// ============================================================================
// Construction and (de)serialization
// ============================================================================

inline ConvLayer random_conv(int out_ch, int in_ch, int ksize, std::mt19937_64& rng, float bias_value = 0.0f,
                             bool random_bias = true) {
  ConvLayer k{out_ch, in_ch, ksize, {}, {}};
  const float bound = std::sqrt(3.0f / static_cast<float>(in_ch * ksize * ksize));
  std::uniform_real_distribution<float> u(-bound, bound);
  k.weight.resize(static_cast<std::size_t>(out_ch) * in_ch * ksize * ksize);
  for (auto& w : k.weight) w = u(rng);
  k.bias.assign(out_ch, bias_value);
  if (random_bias)
    for (auto& b : k.bias) b += u(rng);
  return k;
}

inline Head random_head(const std::string& name, int in_ch, int out_ch, std::mt19937_64& rng,
                        float out_bias = 0.0f) {
  return {name, random_conv(kHiddenWidth, in_ch, 3, rng), random_conv(kHiddenWidth, kHiddenWidth, 1, rng),
          random_conv(out_ch, kHiddenWidth, 1, rng, out_bias)};
}

// Random heads with plausible output offsets (positive depth, class mean
// size offsets near zero).
inline HeadSet make_random_heads(int in_channels, int num_classes, OrientationMode mode, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  HeadSet hs;
  hs.in_channels = in_channels;
  hs.num_classes = num_classes;
  hs.orientation = mode;
  hs.cls = random_head("cls", in_channels, num_classes, rng, -2.0f);
  const auto specs = mode == OrientationMode::kMultiBin ? std::span<const HeadSpec>(kRegressionHeadsMultiBin)
                                                        : std::span<const HeadSpec>(kRegressionHeadsSO3);
  for (const auto& s : specs) {
    const float bias = std::string(s.name) == "depth" ? 20.0f : 0.0f;
    hs.regression.push_back(random_head(s.name, in_channels, s.channels, rng, bias));
  }
  return hs;
}

namespace detail {
inline void add_layer(TensorContainer& c, const std::string& prefix, const ConvLayer& k) {
  c.tensors.push_back({prefix + ".weight", {k.out_ch, k.in_ch, k.ksize, k.ksize}, k.weight});
  c.tensors.push_back({prefix + ".bias", {k.out_ch}, k.bias});
}

inline ConvLayer get_layer(const TensorContainer& c, const std::string& prefix) {
  const auto& w = c.at(prefix + ".weight");
  const auto& b = c.at(prefix + ".bias");
  if (w.shape.size() != 4 || b.shape.size() != 1 || w.shape[2] != w.shape[3] || b.shape[0] != w.shape[0])
    throw ParseError("weights: bad shape for layer '" + prefix + "'");
  ConvLayer k{static_cast<int>(w.shape[0]), static_cast<int>(w.shape[1]), static_cast<int>(w.shape[2]), w.data,
              b.data};
  k.validate();
  return k;
}
}  // namespace detail

inline TensorContainer heads_to_container(const HeadSet& hs) {
  TensorContainer c;
  c.kind = "head_weights";
  c.meta = {{"in_channels", hs.in_channels},
            {"num_classes", hs.num_classes},
            {"orientation", hs.orientation == OrientationMode::kMultiBin ? "multibin" : "so3"}};
  std::vector<const Head*> all{&hs.cls};
  for (const auto& h : hs.regression) all.push_back(&h);
  for (const Head* h : all) {
    detail::add_layer(c, h->name + ".conv3x3", h->conv3x3);
    detail::add_layer(c, h->name + ".conv1x1_a", h->conv1x1_a);
    detail::add_layer(c, h->name + ".conv1x1_b", h->conv1x1_b);
  }
  return c;
}

inline HeadSet heads_from_container(const TensorContainer& c) {
  if (c.kind != "head_weights") throw ParseError("weights: container kind is '" + c.kind + "'");
  HeadSet hs;
  try {
    hs.in_channels = c.meta.at("in_channels").get<int>();
    hs.num_classes = c.meta.at("num_classes").get<int>();
    const auto mode = c.meta.at("orientation").get<std::string>();
    if (mode != "multibin" && mode != "so3") throw ParseError("weights: unknown orientation mode '" + mode + "'");
    hs.orientation = mode == "multibin" ? OrientationMode::kMultiBin : OrientationMode::kSO3;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("weights: bad meta: ") + e.what());
  }
  auto load = [&](const std::string& name) {
    return Head{name, detail::get_layer(c, name + ".conv3x3"), detail::get_layer(c, name + ".conv1x1_a"),
                detail::get_layer(c, name + ".conv1x1_b")};
  };
  hs.cls = load("cls");
  const auto specs = hs.orientation == OrientationMode::kMultiBin
                         ? std::span<const HeadSpec>(kRegressionHeadsMultiBin)
                         : std::span<const HeadSpec>(kRegressionHeadsSO3);
  for (const auto& s : specs) hs.regression.push_back(load(s.name));
  try {
    hs.validate();
  } catch (const InvalidArgument& e) {
    throw ParseError(std::string("weights: ") + e.what());
  }
  return hs;
}

}  // namespace mono3d
