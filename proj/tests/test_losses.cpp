#include <gtest/gtest.h>

#include <random>

#include "mono3d/losses.hpp"
#include "oracles.hpp"

using namespace mono3d;

namespace {

// Checks d f / d x_i at every index against central differences, skipping
// indices whose probe would cross a kink (`near_kink`).
template <class F, class Skip>
void check_grad(std::vector<double> x, const std::vector<double>& grad, F f, Skip near_kink) {
  ASSERT_EQ(x.size(), grad.size());
  int checked = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (near_kink(i)) continue;
    const double x0 = x[i];
    const double fd = oracle::central_difference(
        [&](double v) {
          x[i] = v;
          return f(x);
        },
        x0);
    x[i] = x0;
    if (std::abs(fd) < 1e-9 && std::abs(grad[i]) < 1e-9) continue;
    EXPECT_LT(oracle::rel_err(grad[i], fd), 1e-4) << "index " << i << " analytic " << grad[i] << " fd " << fd;
    ++checked;
  }
  EXPECT_GT(checked, 0);
}

}  // namespace

TEST(Bce, Examples) {
  std::vector<double> z(6, 0.0);
  EXPECT_NEAR(bce_cls(z, z).value, 0, 1e-6);
  EXPECT_NEAR(bce_cls(std::vector<double>{1}, std::vector<double>{0.5}).value, std::log(2.0), 1e-15);
  const auto r = bce_cls(std::vector<double>{1, 0}, std::vector<double>{0.0, 1.0});
  EXPECT_TRUE(std::isfinite(r.value));
  EXPECT_NEAR(r.value, -2 * std::log(kProbClamp), 1e-6);
  EXPECT_THROW(bce_cls(std::vector<double>{1}, std::vector<double>{0.5, 0.5}), InvalidArgument);
}

TEST(Bce, GradientMatchesFiniteDifference) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> p(0.02, 0.98), t(0, 1);
  std::vector<double> tg(40), pr(40);
  for (auto& v : tg) v = t(rng) < 0.3 ? 1 : 0;
  for (auto& v : pr) v = p(rng);
  const auto r = bce_cls(tg, pr);
  check_grad(pr, r.grad, [&](const std::vector<double>& x) { return bce_cls(tg, x).value; },
             [](std::size_t) { return false; });
}

TEST(L1, Examples) {
  const std::vector<double> g{1, 2}, p{0, 0};
  EXPECT_EQ(l1_term(g, g, 1).value, 0);
  EXPECT_EQ(l1_term(g, p, 1).value, 3);
  const std::vector<double> p2{-1, -2};
  EXPECT_EQ(l1_term(g, p2, 1).value, 6);
  const auto e = l1_term({}, {}, 0);
  EXPECT_TRUE(e.empty);
  EXPECT_EQ(e.value, 0);
  EXPECT_THROW(l1_term(g, p, 3), InvalidArgument);
}

TEST(L1, GradientAndPermutation) {
  std::mt19937_64 rng(2);
  std::normal_distribution<double> n(0, 3);
  const std::size_t count = 10, dim = 3;
  std::vector<double> g(count * dim), p(count * dim);
  for (auto& v : g) v = n(rng);
  for (auto& v : p) v = n(rng);
  const auto r = l1_term(g, p, count);
  check_grad(p, r.grad, [&](const std::vector<double>& x) { return l1_term(g, x, count).value; },
             [&](std::size_t i) { return std::abs(g[i] - p[i]) <= 1e-3; });
  // Reverse instance order.
  std::vector<double> gr, pr;
  for (std::size_t i = count; i-- > 0;)
    for (std::size_t d = 0; d < dim; ++d) {
      gr.push_back(g[i * dim + d]);
      pr.push_back(p[i * dim + d]);
    }
  EXPECT_NEAR(l1_term(gr, pr, count).value, r.value, 1e-12);
}

TEST(DepthLaplacian, HandCases) {
  auto one = [](double z, double zh, double s) {
    return depth_laplacian(std::vector<double>{z}, std::vector<double>{zh}, std::vector<double>{s}).value;
  };
  EXPECT_NEAR(one(5, 5, 1), 0.0, 1e-12);
  EXPECT_NEAR(one(5, 5, std::exp(1.0)), 0.5, 1e-12);
  EXPECT_NEAR(one(1, 0, std::sqrt(2.0)), 1 + 0.25 * std::log(2.0), 1e-12);
  EXPECT_LT(one(3, 3, 0.5), 0.0);  // ½ ln σ < 0 for σ < 1
  EXPECT_THROW(one(1, 1, 0), InvalidArgument);
  EXPECT_TRUE(depth_laplacian({}, {}, {}).empty);
}

TEST(DepthLaplacian, GradientMatchesFiniteDifference) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> z(5, 40), s(0.2, 3);
  const std::size_t n = 12;
  std::vector<double> zz(n), zh(n), sg(n);
  for (std::size_t i = 0; i < n; ++i) {
    zz[i] = z(rng);
    zh[i] = z(rng);
    sg[i] = s(rng);
  }
  const auto r = depth_laplacian(zz, zh, sg);
  check_grad(zh, r.grad_depth, [&](const std::vector<double>& x) { return depth_laplacian(zz, x, sg).value; },
             [&](std::size_t i) { return std::abs(zz[i] - zh[i]) <= 1e-3; });
  check_grad(sg, r.grad_sigma, [&](const std::vector<double>& x) { return depth_laplacian(zz, zh, x).value; },
             [](std::size_t) { return false; });
}

TEST(MultiBinLoss, Examples) {
  std::vector<OrientationMultiBin> gt{{4, 0.05}};
  std::vector<double> pred(24, 0.0);
  pred[4] = 60;  // effectively one-hot
  pred[12 + 4] = 0.05;
  EXPECT_NEAR(orientation_multibin_loss(gt, pred).value, 0, 1e-12);
  std::fill(pred.begin(), pred.begin() + 12, 0.0);
  EXPECT_NEAR(orientation_multibin_loss(gt, pred).value, std::log(12.0), 1e-12);
  // Residual error only in the GT bin counts.
  pred[4] = 60;
  pred[12 + 4] = 0.15;
  pred[12 + 7] = 9;
  EXPECT_NEAR(orientation_multibin_loss(gt, pred).value, 0.1, 1e-12);
  EXPECT_THROW(orientation_multibin_loss(gt, std::vector<double>(23)), InvalidArgument);
}

TEST(MultiBinLoss, GradientMatchesFiniteDifference) {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> n(0, 1);
  std::vector<OrientationMultiBin> gt;
  for (int i = 0; i < 5; ++i) gt.push_back(multibin_encode(3 * n(rng)));
  std::vector<double> pred(gt.size() * 24);
  for (auto& v : pred) v = n(rng);
  const auto r = orientation_multibin_loss(gt, pred);
  check_grad(pred, r.grad, [&](const std::vector<double>& x) { return orientation_multibin_loss(gt, x).value; },
             [&](std::size_t i) {
               const std::size_t inst = i / 24, c = i % 24;
               return c >= 12 && static_cast<int>(c - 12) == gt[inst].bin_index &&
                      std::abs(gt[inst].residual - pred[i]) <= 1e-3;
             });
}

TEST(So3Loss, ExamplesAndGradient) {
  const std::vector<Rotation> id{Rotation::identity()};
  EXPECT_EQ(orientation_so3_loss(id, std::vector<Mat3>{Mat3::Identity()}).value, 0);
  // I vs half turn about y: diag(1,1,1) - diag(-1,1,-1) -> |2| + |2|.
  const Mat3 half = yaw_to_rotation(kPi).matrix();
  EXPECT_NEAR(orientation_so3_loss(id, std::vector<Mat3>{half}).value, 4.0, 1e-12);
  const std::vector<Rotation> h{yaw_to_rotation(kPi)};
  EXPECT_NEAR(orientation_so3_loss(h, std::vector<Mat3>{Mat3::Identity()}).value, 4.0, 1e-12);

  std::mt19937_64 rng(5);
  std::normal_distribution<double> n(0, 1);
  std::vector<Rotation> gt;
  std::vector<double> flat;
  for (int i = 0; i < 4; ++i) {
    gt.push_back(gram_schmidt_6d({n(rng), n(rng), n(rng), n(rng), n(rng), n(rng)}));
    for (int k = 0; k < 9; ++k) flat.push_back(n(rng));
  }
  auto to_mats = [](const std::vector<double>& x) {
    std::vector<Mat3> m(x.size() / 9);
    for (std::size_t i = 0; i < m.size(); ++i)
      for (int a = 0; a < 3; ++a)
        for (int b = 0; b < 3; ++b) m[i](a, b) = x[i * 9 + a * 3 + b];
    return m;
  };
  const auto r = orientation_so3_loss(gt, to_mats(flat));
  check_grad(flat, r.grad, [&](const std::vector<double>& x) { return orientation_so3_loss(gt, to_mats(x)).value; },
             [&](std::size_t i) { return std::abs(flat[i] - gt[i / 9](int(i % 9) / 3, int(i % 9) % 3)) <= 1e-3; });
}

TEST(TotalLoss, Examples) {
  const LossWeights w;
  EXPECT_EQ(total_loss({}, w), 0);
  const LossComponents ones{1, 1, 1, 1, 1, 1, 1, 1};
  EXPECT_NEAR(total_loss(ones, w), 1 + 0.02 + 0.02 + 1 + 1 + 1 + 1 + 0.1, 1e-12);
  const LossWeights zero{0, 0, 0, 0, 0, 0, 0};
  EXPECT_EQ(total_loss({2.5, 1, 1, 1, 1, 1, 1, 1}, zero), 2.5);
  EXPECT_THROW(total_loss({NAN}, w), InvalidArgument);
}
