#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "semhint/metrics.hpp"
#include "test_util.hpp"

using namespace semhint;
using namespace semhint::metrics;

TEST(EvaluateDepth, PerfectPrediction) {
  std::mt19937_64 rng(1);
  const auto gt = test::random_image(rng, 5, 7, 1, 1.f, 70.f);
  const auto r = evaluate_depth(gt, gt, std::nullopt);
  EXPECT_EQ(r.abs_rel, 0.0);
  EXPECT_EQ(r.sq_rel, 0.0);
  EXPECT_EQ(r.rmse, 0.0);
  EXPECT_EQ(r.rmse_log, 0.0);
  EXPECT_EQ(r.delta1, 1.0);
  EXPECT_EQ(r.delta2, 1.0);
  EXPECT_EQ(r.delta3, 1.0);
  EXPECT_EQ(r.valid_pixel_count, 35u);
}

TEST(EvaluateDepth, HandFixture) {
  const auto r = evaluate_depth(DepthMap(1, 2, 1, {11.f, 18.f}), DepthMap(1, 2, 1, {10.f, 20.f}), std::nullopt);
  EXPECT_NEAR(r.abs_rel, 0.1, 1e-6);
  EXPECT_NEAR(r.sq_rel, 0.15, 1e-6);
  EXPECT_NEAR(r.rmse, std::sqrt(2.5), 1e-6);
  const double l1 = std::log(10.0 / 11.0), l2 = std::log(20.0 / 18.0);
  EXPECT_NEAR(r.rmse_log, std::sqrt((l1 * l1 + l2 * l2) / 2), 1e-6);
  EXPECT_EQ(r.delta1, 1.0);
}

TEST(EvaluateDepth, DoubledPrediction) {
  const auto r = evaluate_depth(DepthMap(2, 2, 1, 20.f), DepthMap(2, 2, 1, 10.f), std::nullopt);
  EXPECT_EQ(r.delta1, 0.0);
  EXPECT_EQ(r.delta2, 0.0);
  EXPECT_EQ(r.delta3, 0.0);  // 2 > 1.25^3
  EXPECT_NEAR(r.abs_rel, 1.0, 1e-9);
}

TEST(EvaluateDepth, ScaleBelowThreshold) {
  std::mt19937_64 rng(3);
  const auto gt = test::random_image(rng, 4, 4, 1, 1.f, 50.f);
  DepthMap pred = gt;
  for (auto& v : pred) v *= 1.1f;
  const auto r = evaluate_depth(pred, gt, std::nullopt);
  EXPECT_NEAR(r.abs_rel, 0.1, 1e-6);
  EXPECT_EQ(r.delta1, 1.0);
}

TEST(EvaluateDepth, CapMaskAndClamp) {
  const DepthMap gt(1, 4, 1, {10.f, 85.f, 0.f, 40.f});
  const DepthMap pred(1, 4, 1, {10.f, 85.f, 3.f, 100.f});
  const auto r = evaluate_depth(pred, gt, std::nullopt, 80);
  EXPECT_EQ(r.valid_pixel_count, 2u);
  // pred 100 clamped to 80 against gt 40
  EXPECT_NEAR(r.abs_rel, (0 + 1.0) / 2, 1e-9);
  Mask m(1, 4, true);
  m.set(3, false);
  EXPECT_EQ(evaluate_depth(pred, gt, m).valid_pixel_count, 1u);
  EXPECT_THROW(evaluate_depth(pred, gt, Mask(1, 4, false)), Error);
  EXPECT_THROW(evaluate_depth(pred, DepthMap(1, 3), std::nullopt), Error);
}

TEST(EvaluateDepth, DeltaMonotoneAndPermutationInvariant) {
  std::mt19937_64 rng(4);
  for (int t = 0; t < 200; ++t) {
    const auto gt = test::random_image(rng, 6, 6, 1, 0.5f, 90.f);
    const auto pred = test::random_image(rng, 6, 6, 1, 0.5f, 90.f);
    const auto r = evaluate_depth(pred, gt, std::nullopt);
    EXPECT_LE(r.delta1, r.delta2);
    EXPECT_LE(r.delta2, r.delta3);
    EXPECT_GE(r.delta1, 0.0);
    EXPECT_LE(r.delta3, 1.0);
    if (t % 20 == 0) {
      DepthMap pg = gt, pp = pred;
      std::vector<std::size_t> perm(36);
      std::iota(perm.begin(), perm.end(), 0);
      std::shuffle(perm.begin(), perm.end(), rng);
      for (std::size_t i = 0; i < 36; ++i) pg[i] = gt[perm[i]], pp[i] = pred[perm[i]];
      const auto q = evaluate_depth(pp, pg, std::nullopt);
      EXPECT_NEAR(q.abs_rel, r.abs_rel, 1e-12);
      EXPECT_NEAR(q.rmse, r.rmse, 1e-12);
      EXPECT_EQ(q.delta1, r.delta1);
    }
  }
}

TEST(EvaluateDepth, CsvRow) {
  const auto r = evaluate_depth(DepthMap(1, 2, 1, {11.f, 18.f}), DepthMap(1, 2, 1, {10.f, 20.f}), std::nullopt);
  const std::string row = r.csv_row();
  EXPECT_EQ(std::count(row.begin(), row.end(), ','), 7);
  EXPECT_TRUE(row.ends_with(",2"));
  EXPECT_STREQ(DepthEvalResult::csv_header, "abs_rel,sq_rel,rmse,rmse_log,a1,a2,a3,n_valid");
}

TEST(Reprojection, Examples) {
  const std::vector<Point2> a{{1, 2}, {3, 4}};
  auto s = reprojection_error(a, a);
  EXPECT_EQ(s.mean, 0.0);
  EXPECT_EQ(s.stddev, 0.0);
  s = reprojection_error({{0, 0}}, {{3, 4}});
  EXPECT_DOUBLE_EQ(s.mean, 5.0);
  EXPECT_DOUBLE_EQ(s.stddev, 0.0);
  s = reprojection_error({{0, 0}, {0, 0}}, {{0, 0}, {6, 8}});
  EXPECT_DOUBLE_EQ(s.mean, 5.0);
  EXPECT_DOUBLE_EQ(s.stddev, 5.0);
  EXPECT_THROW(reprojection_error({{0, 0}}, {}), Error);
}
