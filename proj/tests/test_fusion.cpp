#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "tofstereo/fusion.hpp"

using namespace tofstereo;
using namespace tofstereo::fusion;

namespace {

DepthMap depth_row(std::initializer_list<double> values) {
  DepthMap d(int(values.size()), 1);
  std::size_t i = 0;
  for (double v : values) {
    if (!std::isnan(v)) d.set(i, float(v));
    ++i;
  }
  return d;
}

ScalarField field_row(std::initializer_list<double> values) {
  ScalarField f(int(values.size()), 1);
  std::size_t i = 0;
  for (double v : values) f.set(i++, v);
  return f;
}

dei::FeatureMap random_features(int w, int h, int dim, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  dei::FeatureMap f{w, h, Eigen::MatrixXd(dim, w * h)};
  for (Eigen::Index i = 0; i < f.values.size(); ++i) f.values.data()[i] = u(rng);
  return f;
}

// Frames with ToF error drawn from `tof_err` and stereo error from `stereo_err` (meters).
std::vector<BlendFrame> frames_with_errors(int count, unsigned seed,
                                           const std::function<double(std::mt19937_64&)>& tof_err,
                                           const std::function<double(std::mt19937_64&)>& stereo_err) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> depth(0.8, 3.0);
  std::vector<BlendFrame> frames;
  for (int n = 0; n < count; ++n) {
    BlendFrame f{DepthMap(12, 10), DepthMap(12, 10), DepthMap(12, 10),
                 random_features(12, 10, kBlendFeatureDim, rng)};
    for (std::size_t i = 0; i < f.gt.size(); ++i) {
      const double z = depth(rng);
      f.gt.set(i, float(z));
      f.tof.set(i, float(z + tof_err(rng)));
      f.stereo.set(i, float(z + stereo_err(rng)));
    }
    frames.push_back(std::move(f));
  }
  return frames;
}

const double kNan = std::nan("");

}  // namespace

TEST(ExpectedError, Midpoints) {
  dei::DistributionMap p(3, 1);
  dei::Distribution onehot3{}, onehot7{}, uniform;
  onehot3[3] = 1.0;
  onehot7[7] = 1.0;
  uniform.fill(0.125);
  p.set(std::size_t{0}, onehot3);
  p.set(std::size_t{1}, uniform);
  p.set(std::size_t{2}, onehot7);
  const ScalarField e = expected_error(p);
  EXPECT_DOUBLE_EQ(e[0], 50.0);
  EXPECT_NEAR(e[1], 49.375, 1e-12);
  EXPECT_DOUBLE_EQ(e[2], 2.5);
  EXPECT_FALSE(expected_error(dei::DistributionMap(2, 2)).is_valid(std::size_t{0}));
}

TEST(FuseSimple, FillRule) {
  const DepthMap tof = depth_row({1.0, kNan, kNan});
  const DepthMap stereo = depth_row({1.5, 2.0, kNan});
  const DepthMap out = fuse_simple(tof, stereo);
  EXPECT_EQ(out[0], 1.0f);
  EXPECT_EQ(out[1], 2.0f);
  EXPECT_FALSE(out.is_valid(std::size_t{2}));
  const DepthMap full = depth_row({1.25, 3.5, 0.7});
  EXPECT_EQ(fuse_simple(full, stereo), full);
  EXPECT_THROW(fuse_simple(tof, DepthMap(2, 1)), Error);
}

TEST(FuseSelect, ExpectedErrorRule) {
  const DepthMap tof = depth_row({1.0, 1.0, kNan, 1.0});
  const DepthMap stereo = depth_row({2.0, 2.0, 2.0, 2.0});
  const ScalarField et = field_row({10, 40, 1, 70});
  const ScalarField es = field_row({70, 40, 90, 10});
  const DepthMap out = fuse_select(tof, stereo, et, es);
  EXPECT_EQ(out[0], 1.0f);
  EXPECT_EQ(out[1], 1.0f);  // tie favours ToF
  EXPECT_EQ(out[2], 2.0f);  // ToF missing
  EXPECT_EQ(out[3], 2.0f);
  EXPECT_THROW(fuse_select(tof, stereo, field_row({1}), es), Error);
}

TEST(FuseSelect, AgreeingRanksPickSmallerError) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n(0.0, 0.05);
  const int w = 20, h = 10;
  DepthMap gt(w, h, 1.5f), tof(w, h), stereo(w, h);
  ScalarField et(w, h), es(w, h);
  for (std::size_t i = 0; i < gt.size(); ++i) {
    tof.set(i, float(1.5 + n(rng)));
    stereo.set(i, float(1.5 + n(rng)));
    const double a = std::abs(tof[i] - gt[i]), b = std::abs(stereo[i] - gt[i]);
    et.set(i, a * 1000.0 + 1.0);
    es.set(i, b * 1000.0 + 1.0);
  }
  const DepthMap out = fuse_select(tof, stereo, et, es);
  for (std::size_t i = 0; i < gt.size(); ++i) {
    const float best = std::min(std::abs(tof[i] - gt[i]), std::abs(stereo[i] - gt[i]));
    EXPECT_EQ(std::abs(out[i] - gt[i]), best);
  }
}

TEST(FuseBlend, ZeroParamsMidpointAndSaturation) {
  const DepthMap tof = depth_row({1.0, 2.0, kNan});
  const DepthMap stereo = depth_row({2.0, 3.0, 4.0});
  dei::FeatureMap f{3, 1, Eigen::MatrixXd::Constant(kBlendFeatureDim, 3, 0.3)};
  const DepthMap mid = fuse_blend(tof, stereo, f, BlendParams{});
  EXPECT_FLOAT_EQ(mid[0], 1.5f);
  EXPECT_FLOAT_EQ(mid[1], 2.5f);
  EXPECT_EQ(mid[2], 4.0f);
  BlendParams big;
  big.b = 50.0;
  const DepthMap sat = fuse_blend(tof, stereo, f, big);
  EXPECT_NEAR(sat[0], 1.0f, 1e-6);
  EXPECT_NEAR(sat[1], 2.0f, 1e-6);
}

TEST(FuseBlend, OutputWithinSources) {
  auto frames = frames_with_errors(
      1, 4, [](auto& r) { return std::normal_distribution<double>(0, 0.02)(r); },
      [](auto& r) { return std::normal_distribution<double>(0, 0.05)(r); });
  const BlendFrame& f = frames[0];
  BlendParams p;
  p.w = {2.0, -3.0, 1.0, 0.5};
  p.b = -0.2;
  const DepthMap out = fuse_blend(f.tof, f.stereo, f.features, p);
  for (std::size_t i = 0; i < out.size(); ++i) {
    EXPECT_GE(out[i], std::min(f.tof[i], f.stereo[i]));
    EXPECT_LE(out[i], std::max(f.tof[i], f.stereo[i]));
  }
}

TEST(LossDepth, Examples) {
  EXPECT_EQ(loss_depth(depth_row({1.0, 2.0}), depth_row({1.0, 2.0}), 0.5), 0.0);
  EXPECT_NEAR(loss_depth(field_row({1.01, 2.03}), field_row({1.0, 2.0}), 0.0), 0.020, 1e-12);
  // Mean |R| = 0.02; one horizontal difference of 0.04 averaged over n = 2.
  EXPECT_NEAR(loss_depth(field_row({1.0, 2.04}), field_row({1.0, 2.0}), 1.0), 0.04, 1e-12);
  EXPECT_THROW(loss_depth(depth_row({kNan}), depth_row({1.0}), 0.1), Error);
}

TEST(LossDepth, DirectOracleWithHoles) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.5, 2.0);
  const int w = 7, h = 5;
  ScalarField pred(w, h), gt(w, h);
  for (std::size_t i = 0; i < pred.size(); ++i) {
    pred.set(i, u(rng));
    if (i % 6 != 2) gt.set(i, u(rng));
  }
  auto ok = [&](int x, int y) { return pred.is_valid(x, y) && gt.is_valid(x, y); };
  auto r = [&](int x, int y) { return pred(x, y) - gt(x, y); };
  long double l1 = 0, tv = 0;
  int n = 0;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (!ok(x, y)) continue;
      ++n;
      l1 += std::abs(r(x, y));
      if (x + 1 < w && ok(x + 1, y)) tv += std::abs(r(x + 1, y) - r(x, y));
      if (y + 1 < h && ok(x, y + 1)) tv += std::abs(r(x, y + 1) - r(x, y));
    }
  }
  EXPECT_NEAR(loss_depth(pred, gt, 0.3), double((l1 + 0.3L * tv) / n), 1e-12);
}

TEST(BlendLoss, GradientMatchesFiniteDifferences) {
  auto frames = frames_with_errors(
      1, 6, [](auto& r) { return std::normal_distribution<double>(0, 0.03)(r); },
      [](auto& r) { return std::normal_distribution<double>(0, 0.06)(r); });
  BlendParams p;
  p.w = {0.7, -1.2, 0.4, 0.9};
  p.b = 0.1;
  const BlendLoss lg = blend_loss_and_grad(frames[0], p, 0.1);
  Eigen::VectorXd fd(kBlendFeatureDim + 1);
  const Eigen::VectorXd x = p.flatten();
  for (int i = 0; i < fd.size(); ++i) {
    Eigen::VectorXd a = x, b = x;
    a[i] += 1e-6;
    b[i] -= 1e-6;
    fd[i] = (blend_loss(frames[0], BlendParams::unflatten(a), 0.1) -
             blend_loss(frames[0], BlendParams::unflatten(b), 0.1)) / 2e-6;
  }
  EXPECT_LE((fd - lg.grad).norm() / lg.grad.norm(), 1e-4);
  EXPECT_NEAR(lg.value, blend_loss(frames[0], p, 0.1), 1e-15);
}

TEST(TrainBlend, ExactTofSaturates) {
  const auto frames = frames_with_errors(
      4, 7, [](auto&) { return 0.0; }, [](auto&) { return 0.1; });
  std::vector<double> history;
  const BlendParams p = train_blend(frames, Stage2Hyper{}, &history);
  EXPECT_GE(mean_blend_weight(frames, p), 0.95);
  EXPECT_LT(history.back(), history.front());
}

TEST(TrainBlend, SymmetricSourcesStayBalanced) {
  auto noise = [](auto& r) { return std::normal_distribution<double>(0, 0.04)(r); };
  const auto frames = frames_with_errors(6, 8, noise, noise);
  const double w = mean_blend_weight(frames, train_blend(frames, Stage2Hyper{}, nullptr));
  EXPECT_GE(w, 0.4);
  EXPECT_LE(w, 0.6);
}

TEST(TrainBlend, ZeroLearningRateKeepsZeroParams) {
  const auto frames = frames_with_errors(
      2, 9, [](auto&) { return 0.0; }, [](auto&) { return 0.1; });
  Stage2Hyper hyper;
  hyper.learning_rate = 0.0;
  EXPECT_EQ(train_blend(frames, hyper, nullptr), BlendParams{});
  EXPECT_THROW(train_blend({}, Stage2Hyper{}, nullptr), Error);
}

TEST(JointLoss, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(10);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const int w = 6, h = 5;
  FusionSample s;
  s.tof = DepthMap(w, h);
  s.stereo = DepthMap(w, h);
  s.gt = DepthMap(w, h);
  s.confidence = Map<std::uint8_t>(w, h);
  s.pkr = Map<double>(w, h);
  s.tof_tile.labels = dei::LabelMap(w, h);
  s.stereo_tile.labels = dei::LabelMap(w, h);
  s.tof_tile.gradient = geometry::GradientMap(w, h);
  s.tof_tile.sot = geometry::AngleMap(w, h);
  s.stereo_tile.gradient = geometry::GradientMap(w, h);
  s.stereo_tile.sot = geometry::AngleMap(w, h);
  for (std::size_t i = 0; i < s.gt.size(); ++i) {
    const double z = 1.0 + u(rng);
    s.gt.set(i, float(z));
    if (i % 7 != 3) s.tof.set(i, float(z + 0.05 * (u(rng) - 0.5)));
    s.stereo.set(i, float(z + 0.2 * (u(rng) - 0.5)));
    s.confidence[i] = std::uint8_t(rng() % 8);
    s.pkr[i] = 1.0 + 9.0 * u(rng);
    s.tof_tile.labels.set(i, int(rng() % 8));
    s.stereo_tile.labels.set(i, int(rng() % 8));
    s.tof_tile.gradient[i] = u(rng);
    s.tof_tile.sot.set(i, 90.0 * u(rng));
  }
  s.tof_tile.features = random_features(w, h, dei::kTofFeatureDim, rng);
  s.stereo_tile.features = random_features(w, h, dei::kStereoFeatureDim, rng);
  const auto tof = dei::ClassifierParams::random(dei::kTofFeatureDim, 1, 1.5);
  const auto stereo = dei::ClassifierParams::random(dei::kStereoFeatureDim, 2, 1.5);
  BlendParams blend;
  blend.w = {-3.0, 2.5, 0.5, -0.4};
  blend.b = 0.2;
  Stage2Hyper hyper;
  hyper.joint_dei_weight = 0.1;

  const JointLoss jl = joint_loss_and_grad(s, tof, stereo, blend, hyper);
  EXPECT_NEAR(jl.value, joint_loss(s, tof, stereo, blend, hyper), 1e-15);
  const Eigen::VectorXd fd_t = dei::finite_diff_grad(
      [&](const dei::ClassifierParams& q) { return joint_loss(s, q, stereo, blend, hyper); }, tof);
  const Eigen::VectorXd fd_s = dei::finite_diff_grad(
      [&](const dei::ClassifierParams& q) { return joint_loss(s, tof, q, blend, hyper); }, stereo);
  EXPECT_LE((fd_t - jl.tof_grad).norm() / jl.tof_grad.norm(), 1e-4);
  EXPECT_LE((fd_s - jl.stereo_grad).norm() / jl.stereo_grad.norm(), 1e-4);
}

TEST(SplitTiles, CoversFrame) {
  dei::DEITile frame;
  frame.features = {10, 7, Eigen::MatrixXd::Random(3, 70)};
  frame.labels = dei::LabelMap(10, 7);
  for (std::size_t i = 0; i < 70; ++i) frame.labels.set(i, int(i % 8));
  frame.gradient = geometry::GradientMap(10, 7);
  frame.sot = geometry::AngleMap(10, 7);
  const auto tiles = split_tiles(frame, 4);
  ASSERT_EQ(tiles.size(), 6u);
  std::size_t pixels = 0;
  for (const auto& t : tiles) pixels += t.labels.size();
  EXPECT_EQ(pixels, 70u);
  EXPECT_EQ(tiles[0].labels(1, 1), frame.labels(1, 1));
  EXPECT_EQ(tiles[1].labels(0, 0), frame.labels(4, 0));
  EXPECT_EQ(tiles[1].features.values.col(0), frame.features.values.col(4));
}
