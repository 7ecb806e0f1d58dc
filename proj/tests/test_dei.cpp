#include <gtest/gtest.h>

#include <cmath>

#include "tofstereo/dei.hpp"

using namespace tofstereo;

TEST(Quantize, TableBins) {
  EXPECT_EQ(dei::quantize_error(0.0), 7);
  EXPECT_EQ(dei::quantize_error(4.999), 7);
  EXPECT_EQ(dei::quantize_error(5.0), 6);
  EXPECT_EQ(dei::quantize_error(14.9), 6);
  EXPECT_EQ(dei::quantize_error(15.0), 5);
  EXPECT_EQ(dei::quantize_error(25.0), 4);
  EXPECT_EQ(dei::quantize_error(40.0), 3);
  EXPECT_EQ(dei::quantize_error(60.0), 2);
  EXPECT_EQ(dei::quantize_error(80.0), 1);
  EXPECT_EQ(dei::quantize_error(100.0), 0);
  EXPECT_EQ(dei::quantize_error(1e6), 0);
}

TEST(Quantize, RejectsNegativeAndNan) {
  EXPECT_THROW(dei::quantize_error(-1.0), Error);
  EXPECT_THROW(dei::quantize_error(std::nan("")), Error);
}

TEST(Quantize, BoundsRoundTrip) {
  for (int level = 0; level < dei::kLevels; ++level) {
    const auto [lo, hi] = dei::level_bounds(level);
    EXPECT_EQ(dei::quantize_error(lo), level);
    if (std::isfinite(hi)) {
      EXPECT_EQ(dei::quantize_error(std::nextafter(hi, 0.0)), level);
    }
  }
  EXPECT_THROW(dei::level_bounds(8), Error);
  EXPECT_THROW(dei::level_bounds(-1), Error);
}

TEST(Quantize, Midpoints) {
  const double expected[] = {120, 90, 70, 50, 32.5, 20, 10, 2.5};
  for (int l = 0; l < dei::kLevels; ++l) EXPECT_DOUBLE_EQ(dei::level_midpoint(l), expected[l]);
}

TEST(Labels, MissingPredictionIsWorstLevel) {
  DepthMap gt(3, 1, 1.0f);
  DepthMap pred(3, 1);
  pred.set(std::size_t{0}, 1.002f);
  pred.set(std::size_t{1}, 1.2f);
  const dei::LabelMap labels = dei::make_labels(pred, gt);
  EXPECT_EQ(labels[0], 7);
  EXPECT_EQ(labels[1], 0);
  EXPECT_EQ(labels[2], 0);
  EXPECT_TRUE(labels.is_valid(std::size_t{2}));
}

TEST(Labels, InvalidGroundTruthExcluded) {
  DepthMap gt(2, 1);
  gt.set(std::size_t{0}, 1.0f);
  DepthMap pred(2, 1, 1.0f);
  const dei::LabelMap labels = dei::make_labels(pred, gt);
  EXPECT_TRUE(labels.is_valid(std::size_t{0}));
  EXPECT_FALSE(labels.is_valid(std::size_t{1}));
}

TEST(Features, TofRowsInUnitRange) {
  DepthMap tof(4, 4, 1.5f);
  tof.invalidate(1, 1);
  geometry::AngleMap sot(4, 4, 45.0);
  tofsim::ConfidenceMap conf(4, 4, 7);
  const dei::FeatureMap f = dei::tof_features(tof, sot, conf);
  ASSERT_EQ(f.dim(), dei::kTofFeatureDim);
  EXPECT_GE(f.values.minCoeff(), 0.0);
  EXPECT_LE(f.values.maxCoeff(), 1.0);
  EXPECT_DOUBLE_EQ(f.values(0, 0), 1.5 / kFarCap);
  EXPECT_DOUBLE_EQ(f.values(1, 0), 0.5);
  EXPECT_DOUBLE_EQ(f.values(3, 0), 1.0);
  EXPECT_DOUBLE_EQ(f.values(0, 5), 0.0);  // invalid depth
}

TEST(Features, NormalizeGradient) {
  geometry::GradientMap g(3, 1, 0.0);
  g[0] = 0.05;
  g[1] = 0.5;
  const auto n = dei::normalize_gradient(g, 0.1);
  EXPECT_DOUBLE_EQ(n[0], 0.5);
  EXPECT_DOUBLE_EQ(n[1], 1.0);
  EXPECT_DOUBLE_EQ(n[2], 0.0);
  EXPECT_DOUBLE_EQ(dei::normalize_gradient(g, 0.1, true)[0], 50.0);
  EXPECT_THROW(dei::normalize_gradient(g, 0.0), Error);
}
