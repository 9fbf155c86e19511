#include <gtest/gtest.h>

#include <numeric>
#include <random>
#include <set>

#include "mono3d/assign.hpp"
#include "fixtures.hpp"
#include "oracles.hpp"

using namespace mono3d;

namespace {

Box3D box3(Vec3 c, Dims3 d, double yaw) {
  Box3D b;
  b.center = c;
  b.dims = d;
  b.rotation = yaw_to_rotation(yaw);
  return b;
}

std::vector<oracle::ScoredPair> as_oracle_pairs(const std::vector<MatchedPair>& v) {
  std::vector<oracle::ScoredPair> out;
  for (const auto& p : v) out.push_back({p.gt, p.anchor, p.score});
  return out;
}

}  // namespace

TEST(Candidates, Examples) {
  const auto grid = make_anchor_grid(64, 64, std::vector<int>{8});
  EXPECT_EQ(candidate_anchors({0, 0, 64, 64}, grid).size(), grid.size());
  EXPECT_TRUE(candidate_anchors({10, 10, 10, 30}, grid).empty());
  const auto c = candidate_anchors({8, 8, 24, 24}, grid);
  ASSERT_EQ(c.size(), 4u);
  std::set<std::pair<double, double>> centers;
  for (int i : c) centers.insert({grid[i].x, grid[i].y});
  EXPECT_EQ(centers, (std::set<std::pair<double, double>>{{12, 12}, {12, 20}, {20, 12}, {20, 20}}));
}

TEST(Scores, Examples) {
  MatchConfig cfg;
  EXPECT_EQ(score_2d(1, 1, cfg), 1.0);
  EXPECT_EQ(score_2d(0.7, 0, cfg), 0.0);
  EXPECT_NEAR(score_2d(0.64, 0.5, cfg), 0.4, 1e-15);
  EXPECT_EQ(score_2d3d(0.4, 1, cfg), 0.4);
  EXPECT_EQ(score_2d3d(0.4, 0, cfg), 0.0);
  EXPECT_NEAR(score_2d3d(0.4, 0.5, cfg), 0.2, 1e-15);
  cfg.gamma = 0;
  EXPECT_EQ(score_2d3d(0.4, 0, cfg), 0.4);  // 0^0 == 1
}

TEST(Assign, SinglePerfectPrediction) {
  const auto anchors = make_anchor_grid(32, 32, std::vector<int>{8});
  GroundTruth g{0, {8, 8, 16, 16}, box3(Vec3(0, 1, 10), {1.5, 1.6, 4}, 0)};
  std::vector<Prediction> preds(anchors.size(), Prediction{{0.0}, {0, 0, 1, 1}, g.box3d});
  const int hit = candidate_anchors(g.box2d, anchors).at(0);
  preds[hit] = {{1.0}, g.box2d, g.box3d};
  const std::vector<GroundTruth> gts{g};
  const auto r = assign(gts, preds, anchors, MatchConfig{}, AssignMode::kOneToOne);
  ASSERT_EQ(r.pairs.size(), 1u);
  EXPECT_EQ(r.pairs[0].anchor, hit);
  EXPECT_NEAR(r.pairs[0].score, 1.0, 1e-12);
  EXPECT_TRUE(r.unmatched_gt.empty());
}

TEST(Assign, SharedBestAnchorGoesToHigherScore) {
  // Five anchors, two GTs; both prefer anchor 2. GT 1 scores higher there,
  // so GT 0 falls back to its second choice.
  std::vector<oracle::ScoredPair> pairs{{0, 2, 0.9}, {0, 4, 0.5}, {0, 0, 0.3},
                                        {1, 2, 0.95}, {1, 1, 0.2}};
  const auto da = oracle::deferred_acceptance(pairs, 2, 5, 1);
  const auto ex = oracle::exhaustive_stable(pairs, 2, 5, 1);
  ASSERT_EQ(ex.size(), 1u);
  EXPECT_EQ(da, ex[0]);
  ASSERT_EQ(da.pairs.size(), 2u);
  EXPECT_EQ(da.pairs[0], (MatchedPair{0, 4, 0.5}));
  EXPECT_EQ(da.pairs[1], (MatchedPair{1, 2, 0.95}));
}

TEST(Assign, MatchesOraclesOnRandomScenes) {
  for (std::uint64_t seed = 0; seed < 60; ++seed) {
    const auto s = fixture::random_assign_scene(seed, 5);
    for (auto mode : {AssignMode::kOneToOne, AssignMode::kOneToMany}) {
      MatchConfig cfg;
      cfg.topk = 3;
      const auto r = assign(s.gts, s.preds, s.anchors, cfg, mode);
      const auto cands = scored_candidates(s.gts, s.preds, s.anchors, cfg);
      const int k = topk_for(mode, cfg);
      EXPECT_EQ(r, oracle::deferred_acceptance(as_oracle_pairs(cands), (int)s.gts.size(), (int)s.anchors.size(), k))
          << seed;
      // One-to-one invariants.
      if (mode == AssignMode::kOneToOne) {
        std::set<int> g, a;
        for (const auto& p : r.pairs) {
          EXPECT_TRUE(g.insert(p.gt).second);
          EXPECT_TRUE(a.insert(p.anchor).second);
          EXPECT_GT(p.score, 0);
        }
      }
    }
  }
}

TEST(Assign, ExhaustiveOnTinyInstances) {
  std::mt19937_64 rng(99);
  std::uniform_real_distribution<double> u(0, 1);
  for (int t = 0; t < 100; ++t) {
    const int n_gt = 1 + t % 3, n_anchor = 5;
    std::vector<oracle::ScoredPair> pairs;
    for (int j = 0; j < n_gt; ++j)
      for (int a = 0; a < n_anchor; ++a)
        if (u(rng) < 0.6) pairs.push_back({j, a, std::round(u(rng) * 4) / 4});  // coarse -> ties and zeros
    for (int k : {1, 2}) {
      const auto ex = oracle::exhaustive_stable(pairs, n_gt, n_anchor, k);
      ASSERT_EQ(ex.size(), 1u) << t;
      EXPECT_EQ(oracle::deferred_acceptance(pairs, n_gt, n_anchor, k), ex[0]) << t;
    }
  }
}

TEST(Assign, GammaZeroEqualsPure2D) {
  for (std::uint64_t seed = 100; seed < 130; ++seed) {
    const auto s = fixture::random_assign_scene(seed, 5);
    MatchConfig a, b;
    a.gamma = 0;
    b.score = MatchScore::k2D;
    for (auto mode : {AssignMode::kOneToOne, AssignMode::kOneToMany})
      EXPECT_EQ(assign(s.gts, s.preds, s.anchors, a, mode), assign(s.gts, s.preds, s.anchors, b, mode));
  }
}

TEST(Assign, ArgmaxInvariantUnderProbabilityScaling) {
  for (std::uint64_t seed = 200; seed < 220; ++seed) {
    auto s = fixture::random_assign_scene(seed, 1);
    MatchConfig cfg;
    const auto base = assign(s.gts, s.preds, s.anchors, cfg, AssignMode::kOneToOne);
    for (auto& p : s.preds)
      for (auto& q : p.class_probs) q *= 0.37;
    const auto scaled = assign(s.gts, s.preds, s.anchors, cfg, AssignMode::kOneToOne);
    ASSERT_EQ(base.pairs.size(), scaled.pairs.size());
    for (std::size_t i = 0; i < base.pairs.size(); ++i) EXPECT_EQ(base.pairs[i].anchor, scaled.pairs[i].anchor);
  }
}

TEST(Assign, RaisingMgiouKeepsSelection) {
  for (std::uint64_t seed = 300; seed < 320; ++seed) {
    auto s = fixture::random_assign_scene(seed, 1);
    MatchConfig cfg;
    cfg.topk = 3;
    const auto base = assign(s.gts, s.preds, s.anchors, cfg, AssignMode::kOneToMany);
    if (base.pairs.empty()) continue;
    // Make one selected anchor's 3D box exact: its MGIoU rises to 1.
    const int a = base.pairs.back().anchor;
    s.preds[a].box3d = s.gts[0].box3d;
    const auto after = assign(s.gts, s.preds, s.anchors, cfg, AssignMode::kOneToMany);
    bool kept = false;
    for (const auto& p : after.pairs) kept |= p.anchor == a;
    EXPECT_TRUE(kept) << seed;
  }
}

TEST(Assign, NoCandidatesReported) {
  const auto anchors = make_anchor_grid(32, 32, std::vector<int>{8});
  std::vector<Prediction> preds(anchors.size(), Prediction{{1.0}, {0, 0, 32, 32}, Box3D{}});
  const std::vector<GroundTruth> gts{{0, {1, 1, 2, 2}, Box3D{}}};
  const auto r = assign(gts, preds, anchors, MatchConfig{}, AssignMode::kOneToOne);
  EXPECT_TRUE(r.pairs.empty());
  EXPECT_EQ(r.unmatched_gt, std::vector<int>{0});
}

TEST(Assign, ClassificationTargets) {
  AssignmentResult r;
  r.pairs = {{0, 3, 0.5}, {1, 1, 0.2}};
  const std::vector<GroundTruth> gts{{2, {}, {}}, {0, {}, {}}};
  const auto t = classification_targets(r, gts, 4, 3);
  EXPECT_EQ(t[3 * 3 + 2], 1.0);
  EXPECT_EQ(t[1 * 3 + 0], 1.0);
  EXPECT_EQ(std::accumulate(t.begin(), t.end(), 0.0), 2.0);
}
