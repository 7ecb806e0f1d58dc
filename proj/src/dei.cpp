#include "tofstereo/dei.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace tofstereo::dei {

namespace {

// Lower bin edges, indexed by level.
constexpr std::array<double, kLevels> kLowerEdge = {100.0, 80.0, 60.0, 40.0,
                                                    25.0,  15.0, 5.0,  0.0};
constexpr std::array<double, kLevels> kMidpoint = {120.0, 90.0, 70.0, 50.0,
                                                   32.5,  20.0, 10.0, 2.5};

void check_level(int level) {
  if (level < 0 || level >= kLevels) throw Error("DEI level out of range: " + std::to_string(level));
}

double clamp01(double v) { return std::clamp(v, 0.0, 1.0); }

}  // namespace

int quantize_error(double error_mm) {
  if (!(error_mm >= 0.0)) throw Error("quantize_error: error must be >= 0");
  for (int level = kLevels - 1; level > 0; --level) {
    if (error_mm < kLowerEdge[static_cast<std::size_t>(level - 1)]) return level;
  }
  return 0;
}

std::pair<double, double> level_bounds(int level) {
  check_level(level);
  const double lo = kLowerEdge[static_cast<std::size_t>(level)];
  const double hi = level == 0 ? std::numeric_limits<double>::infinity()
                               : kLowerEdge[static_cast<std::size_t>(level - 1)];
  return {lo, hi};
}

double level_midpoint(int level) {
  check_level(level);
  return kMidpoint[static_cast<std::size_t>(level)];
}

LabelMap make_labels(const DepthMap& pred, const DepthMap& gt) {
  require_same_shape(pred, gt, "make_labels");
  LabelMap labels(gt.width(), gt.height());
  for (std::size_t i = 0; i < gt.size(); ++i) {
    if (!gt.is_valid(i)) continue;
    if (!pred.is_valid(i)) {
      labels.set(i, 0);
      continue;
    }
    const double err_mm = std::abs(double(pred[i]) - double(gt[i])) * 1000.0;
    labels.set(i, quantize_error(err_mm));
  }
  return labels;
}

FeatureMap tof_features(const DepthMap& tof, const geometry::AngleMap& sot,
                        const tofsim::ConfidenceMap& confidence, const FeatureScales& scales) {
  require_same_shape(tof, sot, "tof_features");
  require_same_shape(tof, confidence, "tof_features");
  FeatureMap f{tof.width(), tof.height(), Eigen::MatrixXd::Zero(kTofFeatureDim, tof.size())};

  Map<double> depth_values(tof.width(), tof.height(), 0.0);
  for (std::size_t i = 0; i < tof.size(); ++i) depth_values[i] = tof[i];
  const ScalarField variance = geometry::neighborhood_variance(depth_values, tof.valid());
  const geometry::GradientMap grad = geometry::depth_gradient(tof);

  for (std::size_t i = 0; i < tof.size(); ++i) {
    const auto col = static_cast<Eigen::Index>(i);
    if (tof.is_valid(i)) f.values(0, col) = clamp01(tof[i] / kFarCap);
    if (sot.is_valid(i)) f.values(1, col) = clamp01(sot[i] / 90.0);
    f.values(2, col) = clamp01(grad[i] / scales.gradient_tau);
    f.values(3, col) = clamp01(confidence[i] / 7.0);
    if (tof.is_valid(i) && variance.is_valid(i)) {
      f.values(4, col) = clamp01(variance[i] / scales.depth_variance_cap);
    }
  }
  return f;
}

FeatureMap stereo_features_for_dei(const stereo::StereoFeatureMap& features,
                                   const DepthMap& stereo_depth, const FeatureScales& scales) {
  require_same_shape(features, stereo_depth, "stereo_features_for_dei");
  FeatureMap f{features.width(), features.height(),
               Eigen::MatrixXd::Zero(kStereoFeatureDim, stereo_depth.size())};
  for (std::size_t i = 0; i < stereo_depth.size(); ++i) {
    const auto col = static_cast<Eigen::Index>(i);
    const stereo::StereoFeature& s = features[i];
    f.values(0, col) = clamp01(s.c_min);
    f.values(1, col) = clamp01(s.pkr / stereo::kPkrMax);
    f.values(2, col) = clamp01(s.disp_var / scales.disparity_variance_cap);
    f.values(3, col) = clamp01(s.disp_norm);
    if (stereo_depth.is_valid(i)) f.values(4, col) = clamp01(stereo_depth[i] / kFarCap);
  }
  return f;
}

geometry::GradientMap normalize_gradient(const geometry::GradientMap& gradient, double tau,
                                         bool raw_millimeters) {
  if (!(tau > 0.0)) throw Error("normalize_gradient: tau must be > 0");
  geometry::GradientMap out(gradient.width(), gradient.height(), 0.0);
  for (std::size_t i = 0; i < gradient.size(); ++i) {
    const double g = std::abs(gradient[i]);
    out[i] = raw_millimeters ? g * 1000.0 : std::min(g, tau) / tau;
  }
  return out;
}

}  // namespace tofstereo::dei
