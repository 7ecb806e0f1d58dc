#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "tofstereo/geometry.hpp"
#include "tofstereo/tofsim.hpp"

using namespace tofstereo;
using namespace tofstereo::tofsim;

namespace {

struct Plane {
  DepthMap gt;
  geometry::AngleMap sot;
  Map<float> refl;
};

Plane plane(int w, int h, float depth, double sot_deg = 90.0, float refl = 0.5f) {
  return {DepthMap(w, h, depth), geometry::AngleMap(w, h, sot_deg), Map<float>(w, h, refl)};
}

double mean_abs_error_mm(const ToFFrame& f, const DepthMap& gt) {
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < gt.size(); ++i) {
    if (!f.depth.is_valid(i)) continue;
    sum += std::abs(double(f.depth[i]) - double(gt[i])) * 1000.0;
    ++n;
  }
  return sum / double(n);
}

}  // namespace

TEST(Phase, Offsets) {
  EXPECT_NEAR(phase_offset({2, 1, 0, 1}), 0.0, 1e-15);
  EXPECT_NEAR(phase_offset({1, 0, 1, 2}), std::numbers::pi / 2, 1e-15);
  EXPECT_THROW(phase_offset({1, 1, 1, 1}), Error);
  const double wrapped = phase_offset({1, 2, 1, 0});
  EXPECT_NEAR(wrapped, 1.5 * std::numbers::pi, 1e-12);
}

TEST(Phase, Depth) {
  ToFParams p;
  p.depth_offset_m = 0.1;
  EXPECT_DOUBLE_EQ(phase_depth(0.0, p), 0.1);
  ToFParams q;
  q.modulation_hz = 20e6;
  EXPECT_NEAR(phase_depth(std::numbers::pi, q), 3.747, 5e-4);
  EXPECT_DOUBLE_EQ(phase_depth(std::numbers::pi, q), kSpeedOfLight / (4.0 * 20e6));
}

TEST(Phase, RoundTrip) {
  const ToFParams p;
  for (double d : {0.3, 1.2, 2.9, 5.0}) {
    EXPECT_NEAR(phase_depth(phase_offset(synthesize_samples(d, p, 0.7, 1.3)), p), d, 1e-9);
  }
}

TEST(Amplitude, Levels) {
  EXPECT_EQ(amplitude({1, 1, 1, 1}), 0.0);
  EXPECT_EQ(confidence_level(amplitude({1, 1, 1, 1}), 1.0), 0);
  EXPECT_EQ(confidence_level(2.0, 2.0), 7);
  EXPECT_EQ(confidence_level(1.0, 2.0), 4);
  EXPECT_EQ(confidence_level(5.0, 2.0), 7);
  EXPECT_THROW(confidence_level(1.0, 0.0), Error);
  EXPECT_DOUBLE_EQ(amplitude({2, 1, 0, 1}), 1.0);
}

TEST(Simulate, IdentityWithoutNoise) {
  const Plane p = plane(16, 12, 1.7f, 60.0);
  const ToFFrame f = simulate_tof(p.gt, p.sot, p.refl, ToFNoiseParams::zero(), ToFParams{});
  EXPECT_EQ(f.depth, p.gt);
}

TEST(Simulate, HarmonicBiasCurve) {
  ToFNoiseParams n = ToFNoiseParams::zero();
  n.harmonic_amp_mm = 8.0;
  n.harmonic_period_m = 0.75;
  n.linear_coeff = 5.0;
  for (double d = 0.5; d <= 3.0; d += 0.125) {
    const Plane p = plane(4, 4, float(d));
    const ToFFrame f = simulate_tof(p.gt, p.sot, p.refl, n, ToFParams{});
    const double expected = 5.0 * double(p.gt[0]) +
                            8.0 * std::sin(2.0 * std::numbers::pi * double(p.gt[0]) / 0.75);
    EXPECT_NEAR((double(f.depth[0]) - double(p.gt[0])) * 1000.0, expected, 0.5) << d;
    EXPECT_NEAR(bias_mm(double(p.gt[0]), n), expected, 1e-12);
  }
}

TEST(Simulate, DarkPlaneDropsOut) {
  ToFNoiseParams n;
  n.dropout_reflectance = 0.05;
  const Plane p = plane(8, 8, 1.0f, 90.0, 0.01f);
  const ToFFrame f = simulate_tof(p.gt, p.sot, p.refl, n, ToFParams{});
  EXPECT_EQ(f.depth.count_valid(), 0u);
  for (std::size_t i = 0; i < f.confidence.size(); ++i) EXPECT_EQ(f.confidence[i], 0);
}

TEST(Simulate, GrazingAngleDropsOut) {
  ToFNoiseParams n = ToFNoiseParams::zero();
  n.dropout_angle_deg = 5.0;
  const Plane p = plane(8, 8, 1.0f, 3.0);
  EXPECT_EQ(simulate_tof(p.gt, p.sot, p.refl, n, ToFParams{}).depth.count_valid(), 0u);
}

TEST(Simulate, EdgeMixingAndDropout) {
  Plane p = plane(20, 10, 1.0f);
  for (int y = 0; y < 10; ++y) {
    for (int x = 10; x < 20; ++x) p.gt.set(x, y, 2.0f);
  }
  ToFNoiseParams n = ToFNoiseParams::zero();
  n.aperture_px = 2.0;
  n.edge_dropout = 0.8;
  const ToFFrame f = simulate_tof(p.gt, p.sot, p.refl, n, ToFParams{});
  const Mask locus = geometry::edge_mask(geometry::depth_gradient(p.gt), n.edge_tau);
  std::size_t total = 0, dropped = 0;
  for (std::size_t i = 0; i < locus.size(); ++i) {
    if (!locus[i]) continue;
    ++total;
    if (!f.depth.is_valid(i)) {
      ++dropped;
      continue;
    }
    EXPECT_GT(f.depth[i], 1.0f);
    EXPECT_LT(f.depth[i], 2.0f);
  }
  ASSERT_GT(total, 0u);
  EXPECT_GE(double(dropped) / double(total), 0.8);
  // Far from the edge nothing changes.
  EXPECT_FLOAT_EQ(f.depth(2, 5), 1.0f);
  EXPECT_FLOAT_EQ(f.depth(17, 5), 2.0f);
}

TEST(Simulate, AngleErrorNonIncreasing) {
  ToFNoiseParams n = ToFNoiseParams::zero();
  n.angle_err0_mm = 40.0;
  n.angle_theta0_deg = 20.0;
  double previous = 1e300;
  for (int deg = 10; deg <= 90; deg += 10) {
    n.seed = std::uint64_t(deg);
    const Plane p = plane(64, 64, 1.5f, deg);
    const double mae = mean_abs_error_mm(simulate_tof(p.gt, p.sot, p.refl, n, ToFParams{}), p.gt);
    EXPECT_LE(mae, previous) << deg;
    previous = mae;
  }
}

TEST(Simulate, ConfidenceMonotone) {
  const ToFNoiseParams n = ToFNoiseParams::zero();
  int previous = 8;
  for (float d = 0.4f; d < 4.0f; d += 0.2f) {
    const Plane p = plane(2, 2, d);
    const int level = simulate_tof(p.gt, p.sot, p.refl, n, ToFParams{}).confidence[0];
    EXPECT_LE(level, previous);
    previous = level;
  }
  previous = -1;
  for (float r = 0.1f; r <= 1.0f; r += 0.1f) {
    const Plane p = plane(2, 2, 1.0f, 90.0, r);
    const int level = simulate_tof(p.gt, p.sot, p.refl, n, ToFParams{}).confidence[0];
    EXPECT_GE(level, previous);
    previous = level;
  }
}

TEST(Simulate, SameSeedIdentical) {
  ToFNoiseParams n;
  n.seed = 11;
  const Plane p = plane(16, 16, 1.3f, 40.0);
  const ToFFrame a = simulate_tof(p.gt, p.sot, p.refl, n, ToFParams{});
  const ToFFrame b = simulate_tof(p.gt, p.sot, p.refl, n, ToFParams{});
  EXPECT_EQ(a.depth, b.depth);
  EXPECT_EQ(a.confidence, b.confidence);
  n.seed = 12;
  EXPECT_NE(simulate_tof(p.gt, p.sot, p.refl, n, ToFParams{}).depth, a.depth);
}

TEST(Simulate, MismatchedResolution) {
  const Plane p = plane(8, 8, 1.0f);
  EXPECT_THROW(simulate_tof(p.gt, geometry::AngleMap(4, 8, 90.0), p.refl, ToFNoiseParams{},
                            ToFParams{}),
               Error);
}

TEST(NoiseParams, Validation) {
  ToFNoiseParams n;
  n.aperture_px = 6.0;
  EXPECT_THROW(n.validate(), Error);
  n = ToFNoiseParams{};
  n.harmonic_period_m = 0.0;
  EXPECT_THROW(n.validate(), Error);
}
