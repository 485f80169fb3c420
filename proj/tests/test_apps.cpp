#include <gtest/gtest.h>

#include <cmath>

#include "support/fixtures.hpp"
#include "support/golden.hpp"
#include "vgidm/apps.hpp"
#include "vgidm/synth.hpp"

using namespace vgidm;
using vgidm::testing::random_frame;
using vgidm::testing::small_config;

namespace {

Tensor random_scores(Rng& rng, std::size_t a, std::size_t b) {
  Tensor S({a, b});
  for (auto& v : S.data()) v = rng.uniform();
  return S;
}

Frame frame_at(const Vec3& p) {
  Frame f;
  f.position = p;
  return f;
}

}  // namespace

TEST(ScoreMatrix, SingleEntryIsPairScore) {
  Rng rng(1);
  auto model = make_model(small_config(), 2);
  const Frame a = random_frame(1, 1, rng), b = random_frame(2, 1, rng);
  const Tensor S = score_matrix(a, b, model);
  EXPECT_EQ(S.rows(), 1u);
  EXPECT_EQ(S.at(0, 0), match_score(a, 0, b, 0, model).score);
}

TEST(ScoreMatrix, SwappingFramesTransposes) {
  Rng rng(3);
  auto model = make_model(small_config(), 4);
  const Frame a = random_frame(1, 3, rng), b = random_frame(2, 4, rng);
  const Tensor ab = score_matrix(a, b, model), ba = score_matrix(b, a, model);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 4; ++j) EXPECT_EQ(ab.at(i, j), ba.at(j, i));
}

TEST(ScoreMatrix, SeededGolden) {
  Rng rng(5);
  auto model = make_model(small_config(), 6);
  const Tensor S = score_matrix(random_frame(1, 3, rng), random_frame(2, 4, rng), model);
  vgidm::testing::expect_golden("score_matrix_3x4", {S.data().begin(), S.data().end()});
}

TEST(ScoreMatrix, EmptyFrameThrows) {
  Rng rng(7);
  auto model = make_model(small_config(), 8);
  EXPECT_THROW(score_matrix(Frame{}, random_frame(2, 2, rng), model), std::invalid_argument);
}

TEST(Sinkhorn, EqualEntriesGiveUniformInterior) {
  Tensor S({4, 4}, 0.3);
  const auto P = sinkhorn_assign(S, {-50.0, 0.1, 100}).plan;
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 4; ++j) {
      EXPECT_NEAR(P.at(i, j), P.at(0, 0), 1e-15);
      EXPECT_NEAR(P.at(i, j), 0.25, 2e-3);
    }
}

TEST(Sinkhorn, DiagonalScoresGiveNearIdentity) {
  const Tensor S = Tensor::identity(5);
  const auto P = sinkhorn_assign(S, {-1.0, 0.1, 200}).plan;
  double off = 0.0;
  for (std::size_t i = 0; i < 5; ++i) {
    EXPECT_GT(P.at(i, i), 0.95);
    for (std::size_t j = 0; j <= 5; ++j)
      if (j != i) off += P.at(i, j);
  }
  EXPECT_LT(off / 5.0, 0.05);
}

TEST(Sinkhorn, ResidualsSmallOnRandomScores) {
  Rng rng(9);
  for (int trial = 0; trial < 20; ++trial) {
    const Tensor S = random_scores(rng, 2 + rng.index(9), 2 + rng.index(9));
    const auto r = sinkhorn_assign(S);
    EXPECT_LT(r.row_residual, 1e-6);
    EXPECT_LT(r.col_residual, 1e-6);
    // Independent recomputation of the residuals.
    for (std::size_t i = 0; i < S.rows(); ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j <= S.cols(); ++j) s += r.plan.at(i, j);
      EXPECT_NEAR(s, 1.0, 1e-6);
    }
  }
}

TEST(Sinkhorn, DustbinMassesBalanceTheRectangle) {
  Rng rng(10);
  const Tensor S = random_scores(rng, 3, 6);
  const auto P = sinkhorn_assign(S).plan;
  double dustbin_row = 0.0, dustbin_col = 0.0;
  for (std::size_t j = 0; j <= 6; ++j) dustbin_row += P.at(3, j);
  for (std::size_t i = 0; i <= 3; ++i) dustbin_col += P.at(i, 6);
  EXPECT_NEAR(dustbin_row, 6.0, 1e-6);
  EXPECT_NEAR(dustbin_col, 3.0, 1e-6);
}

TEST(Sinkhorn, InvalidInputsThrow) {
  EXPECT_THROW(sinkhorn_assign(Tensor({0, 0})), ShapeError);
  Tensor nan({1, 1}, std::nan(""));
  EXPECT_THROW(sinkhorn_assign(nan), std::invalid_argument);
  EXPECT_THROW(sinkhorn_assign(Tensor({2, 2}), {0.2, 0.0, 100}), std::invalid_argument);
  EXPECT_THROW(sinkhorn_assign(Tensor({2, 2}), {0.2, 0.1, 0}), std::invalid_argument);
}

TEST(FrameScore, IdentityPlanOnUnitDiagonal) {
  EXPECT_DOUBLE_EQ(frame_match_score(Tensor::identity(3), Tensor::identity(4)).score, 1.0);
}

TEST(FrameScore, AllDustbinGivesZero) {
  Tensor P({3, 3});
  P.at(0, 2) = P.at(1, 2) = P.at(2, 0) = P.at(2, 1) = 1.0;
  const auto m = frame_match_score(Tensor({2, 2}, 0.9), P);
  EXPECT_EQ(m.score, 0.0);
  EXPECT_EQ(m.decision, 0);
}

TEST(FrameScore, NormalizedBySmallerSide) {
  Tensor S({2, 3}, 1.0);
  Tensor P({3, 4}, 0.5);
  // Interior mass 6 * 0.5 = 3, min side 2.
  EXPECT_DOUBLE_EQ(frame_match_score(S, P).score, 1.5);
}

TEST(FrameScore, SeededGolden) {
  Rng rng(11);
  auto model = make_model(small_config(), 12);
  const auto a = frame_bundles(random_frame(1, 4, rng), model);
  const auto b = frame_bundles(random_frame(2, 3, rng), model);
  const auto m = frame_pair_score(a, b, make_scorer(model), SinkhornConfig{});
  vgidm::testing::expect_golden("frame_pair_score", {m.score});
  EXPECT_EQ(frame_pair_score({}, b, make_scorer(model), SinkhornConfig{}).score, 0.0);
}

TEST(Place, SamePlaceRadius) {
  EXPECT_TRUE(same_place(frame_at({0, 0, 0}), frame_at({0, 0, 5})));
  EXPECT_FALSE(same_place(frame_at({0, 0, 0}), frame_at({0, 0, 50})));
  EXPECT_FALSE(same_place(frame_at({0, 0, 0}), frame_at({0, 0, 10})));
}

TEST(Place, PerfectScorerGivesUnitF1AndAccuracy) {
  const std::vector<double> s{0.9, 0.8, 0.1, 0.2, 0.95, 0.05};
  const std::vector<bool> l{true, true, false, false, true, false};
  const auto r = place_recognition_eval(s, l, s, l);
  EXPECT_EQ(r.f1, 1.0);
  EXPECT_EQ(r.accuracy, 1.0);
}

TEST(Place, ThresholdTiesGoLow) {
  // Every threshold between 0.1 and 0.9 separates the classes; the lowest candidate wins.
  const double t = tune_threshold({0.1, 0.9}, {false, true});
  EXPECT_DOUBLE_EQ(t, 0.5);
  EXPECT_THROW(tune_threshold({}, {}), std::invalid_argument);
}

TEST(Stereo, DisparityFromBoxCenters) {
  Patch l, r;
  l.bbox = {700, 100, 720, 140};
  r.bbox = {630, 100, 650, 140};
  const auto d = stereo_disparity(l, r);
  EXPECT_DOUBLE_EQ(d.pixels, 70.0);
  EXPECT_TRUE(d.valid);
  EXPECT_FALSE(stereo_disparity(l, l).valid);
}

TEST(Stereo, DepthFromDisparity) {
  EXPECT_DOUBLE_EQ(disparity_to_depth(70.0, 700.0, 0.5), 5.0);
  EXPECT_DOUBLE_EQ(disparity_to_depth(140.0, 700.0, 0.5), 2.5);
  EXPECT_THROW(disparity_to_depth(0.0, 700.0, 0.5), std::domain_error);
  EXPECT_THROW(disparity_to_depth(10.0, 700.0, -1.0), std::domain_error);
}

TEST(Stereo, ErrorBoundCoversHalfPixelShifts) {
  for (double d : {17.5, 35.0, 70.0}) {
    const double z = disparity_to_depth(d, 700, 0.5);
    const double bound = depth_error_bound(d, 700, 0.5);
    EXPECT_NEAR(std::abs(disparity_to_depth(d - 0.5, 700, 0.5) - z), bound, 1e-12);
    EXPECT_LE(std::abs(disparity_to_depth(d + 0.5, 700, 0.5) - z), bound);
  }
}

TEST(Stereo, NoiseFreeRenderRecoversDepth) {
  StereoConfig cfg;
  cfg.scenes = 2;
  cfg.render.depth_noise = 0.0;
  cfg.render.occlusion = 0.0;
  cfg.render.patch_size = 8;
  const auto ds = build_stereo_dataset(cfg, 3);
  const auto r = stereo_eval(ds, ds.test.pairs, cfg.baseline,
                             [](const PairLabel& p) { return p.matched ? 1.0 : 0.0; });
  EXPECT_GT(r.accepted, 5u);
  EXPECT_EQ(r.invalid, 0u);
  EXPECT_LT(r.rmse, 1e-9);
}
