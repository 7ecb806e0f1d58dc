#pragma once

#include <array>
#include <utility>

#include <Eigen/Core>

#include "tofstereo/geometry.hpp"
#include "tofstereo/map.hpp"
#include "tofstereo/stereo.hpp"
#include "tofstereo/tofsim.hpp"

namespace tofstereo::dei {

/// Depth Error Indication levels: 7 is the smallest error, 0 the largest.
inline constexpr int kLevels = 8;

using Distribution = std::array<double, kLevels>;
/// Per-pixel probability over the DEI levels.
using DistributionMap = MaskedMap<Distribution>;
/// Per-pixel DEI level; valid where the ground truth is valid.
using LabelMap = MaskedMap<int>;

/// Half-open bins in millimeters:
///   7: [0, 5)  6: [5, 15)  5: [15, 25)  4: [25, 40)
///   3: [40, 60)  2: [60, 80)  1: [80, 100)  0: [100, inf)
/// Throws for negative or NaN errors.
int quantize_error(double error_mm);

/// [lo, hi) of a level in millimeters; hi is +inf for level 0.
std::pair<double, double> level_bounds(int level);

/// Representative error of a level: bin midpoints, with the open level-0 bin
/// represented by 120 mm.
double level_midpoint(int level);

/// quantize_error(|pred - gt|) per pixel. Pixels missing in `pred` get level 0;
/// pixels missing in `gt` are invalid (excluded from every loss).
LabelMap make_labels(const DepthMap& pred, const DepthMap& gt);

/// Column-per-pixel feature matrix (dim x width*height), every entry in [0, 1].
struct FeatureMap {
  int width = 0;
  int height = 0;
  Eigen::MatrixXd values;

  int dim() const { return static_cast<int>(values.rows()); }
  std::size_t size() const { return static_cast<std::size_t>(width) * height; }
};

inline constexpr int kTofFeatureDim = 5;
inline constexpr int kStereoFeatureDim = 5;

/// Scales used to bring raw quantities into [0, 1].
struct FeatureScales {
  double gradient_tau = 0.1;         // m/px, gradient clamp
  double depth_variance_cap = 4e-4;  // m^2
  double disparity_variance_cap = 1.0;  // px^2
};

/// Rows: depth / 20 m, sot / 90, clamped gradient / tau, confidence / 7,
/// clamped 8-neighbour depth variance / cap. Invalid depth yields zeros for
/// the depth-derived rows.
FeatureMap tof_features(const DepthMap& tof, const geometry::AngleMap& sot,
                        const tofsim::ConfidenceMap& confidence,
                        const FeatureScales& scales = {});

/// Rows: c_min, pkr / 10, clamped disparity variance / cap, disparity / d_max,
/// stereo depth / 20 m.
FeatureMap stereo_features_for_dei(const stereo::StereoFeatureMap& features,
                                   const DepthMap& stereo_depth,
                                   const FeatureScales& scales = {});

/// How the edge-aware loss turns the gradient into a pixel weight.
enum class EdgeWeighting {
  Decay,     // exp(-|grad|), the formula as written
  Emphasize  // exp(+|grad|), heavier weight on edges
};

/// Gradient map as fed to the edge-aware loss. By default |grad| is clamped to
/// [0, tau] and divided by tau; with `raw_millimeters` it is |grad| in mm/px.
geometry::GradientMap normalize_gradient(const geometry::GradientMap& gradient,
                                         double tau = 0.1, bool raw_millimeters = false);

}  // namespace tofstereo::dei
