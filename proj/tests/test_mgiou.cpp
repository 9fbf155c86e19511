#include <gtest/gtest.h>

#include <random>

#include "mono3d/mgiou.hpp"
#include "oracles.hpp"

using namespace mono3d;

namespace {
Box3D box(Vec3 c, Dims3 d, double yaw) {
  Box3D b;
  b.center = c;
  b.dims = d;
  b.rotation = yaw_to_rotation(yaw);
  return b;
}
}  // namespace

TEST(Giou1D, Examples) {
  EXPECT_EQ(giou_1d({0, 1}, {0, 1}), 1.0);
  EXPECT_EQ(giou_1d({0, 1}, {1, 2}), 0.0);
  EXPECT_NEAR(giou_1d({0, 1}, {9, 10}), -0.8, 1e-15);
  EXPECT_EQ(giou_1d({2, 2}, {2, 2}), 1.0);
  EXPECT_EQ(giou_1d({2, 2}, {3, 3}), -1.0);
  EXPECT_NEAR(giou_1d({0, 1}, {3, 3}), -2.0 / 3.0, 1e-15);
  EXPECT_THROW(giou_1d({1, 0}, {0, 1}), InvalidArgument);
}

TEST(Giou1D, Symmetric) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-5, 5);
  for (int i = 0; i < 1000; ++i) {
    double a = u(rng), b = u(rng), c = u(rng), d = u(rng);
    const Interval x{std::min(a, b), std::max(a, b)}, y{std::min(c, d), std::max(c, d)};
    const double g = giou_1d(x, y);
    EXPECT_EQ(g, giou_1d(y, x));
    EXPECT_GT(g, -1);
    EXPECT_LE(g, 1);
  }
}

TEST(Mgiou, Identity) {
  const Box3D a = box(Vec3(1, 1.2, 15), {1.5, 1.6, 3.9}, 0.4);
  EXPECT_NEAR(mgiou_3d(a, a), 1.0, 1e-12);
  EXPECT_NEAR(mgiou_clamped(a, a), 1.0, 1e-12);
}

TEST(Mgiou, SeparatedCubesHandValue) {
  const Box3D a = box(Vec3(0, 0, 10), {1, 1, 1}, 0);
  const Box3D b = box(Vec3(3, 0, 10), {1, 1, 1}, 0);
  // x-axis of each box: 0 - 2/4; the four other axes coincide.
  EXPECT_NEAR(mgiou_3d(a, b), (2 * -0.5 + 4 * 1.0) / 6.0, 1e-15);
}

TEST(Mgiou, FarApartClampsToZero) {
  const Box3D a = box(Vec3(0, 0, 10), {1, 1, 1}, 0);
  const Box3D b = box(Vec3(100, 50, 80), {1, 1, 1}, 1.0);
  EXPECT_LT(mgiou_3d(a, b), 0);
  EXPECT_EQ(mgiou_clamped(a, b), 0.0);
}

TEST(Mgiou, SymmetricBitwise) {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(-3, 3), d(0.3, 5), y(-kPi, kPi);
  for (int i = 0; i < 500; ++i) {
    const Box3D a = box(Vec3(u(rng), u(rng), 10 + u(rng)), {d(rng), d(rng), d(rng)}, y(rng));
    const Box3D b = box(Vec3(u(rng), u(rng), 10 + u(rng)), {d(rng), d(rng), d(rng)}, y(rng));
    EXPECT_EQ(mgiou_3d(a, b), mgiou_3d(b, a));
    const double m = mgiou_3d(a, b);
    EXPECT_GT(m, -1);
    EXPECT_LE(m, 1);
  }
}

TEST(Mgiou, UniformScaleInvariant) {
  std::mt19937_64 rng(10);
  std::uniform_real_distribution<double> u(-3, 3), d(0.3, 5), y(-kPi, kPi);
  for (int i = 0; i < 10; ++i) {
    const Box3D a = box(Vec3(u(rng), u(rng), 10 + u(rng)), {d(rng), d(rng), d(rng)}, y(rng));
    const Box3D b = box(Vec3(u(rng), u(rng), 10 + u(rng)), {d(rng), d(rng), d(rng)}, y(rng));
    const double ref = mgiou_3d(a, b);
    for (double s : {0.1, 1.0, 10.0}) {
      Box3D as = a, bs = b;
      as.center *= s;
      bs.center *= s;
      as.dims = {a.dims.h * s, a.dims.w * s, a.dims.l * s};
      bs.dims = {b.dims.h * s, b.dims.w * s, b.dims.l * s};
      EXPECT_NEAR(mgiou_3d(as, bs), ref, 1e-12);
    }
  }
}

TEST(Mgiou, StrictlyDecreasingWithSeparation) {
  const Box3D a = box(Vec3(0, 0, 10), {1.5, 1.6, 4}, 0);
  double prev = 2;
  for (int i = 0; i < 50; ++i) {
    Box3D b = a;
    b.center.x() += 0.25 * i;
    const double m = mgiou_3d(a, b);
    EXPECT_LT(m, prev) << i;
    prev = m;
  }
}

TEST(Mgiou, PositiveWheneverVoxelOverlap) {
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> off(-1.5, 1.5), d(0.5, 4), y(-kPi, kPi);
  int checked = 0;
  for (int i = 0; i < 60; ++i) {
    const Box3D a = box(Vec3(0, 0, 10), {d(rng), d(rng), d(rng)}, y(rng));
    const Box3D b = box(Vec3(off(rng), 0.3 * off(rng), 10 + off(rng)), {d(rng), d(rng), d(rng)}, y(rng));
    if (oracle::voxel_iou_3d(a, b, 48) > 0.05) {
      ++checked;
      EXPECT_GT(mgiou_3d(a, b), 0) << i;
    }
  }
  EXPECT_GT(checked, 10);
}
