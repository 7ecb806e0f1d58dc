#pragma once

#include <array>
#include <vector>

#include "tofstereo/map.hpp"
#include "tofstereo/scenegen.hpp"

namespace tofstereo::stereo {

/// Normalized SAD costs in [0, 1], laid out [y][x][d]. Candidates whose
/// window leaves the right image cost 1.
class CostVolume {
 public:
  CostVolume() = default;
  CostVolume(int width, int height, int d_max)
      : width_(width), height_(height), d_max_(d_max),
        cost_(static_cast<std::size_t>(width) * height * (d_max + 1), 1.0f) {}

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  int d_max() const noexcept { return d_max_; }
  int levels() const noexcept { return d_max_ + 1; }

  float& at(int x, int y, int d) noexcept { return cost_[offset(x, y) + d]; }
  float at(int x, int y, int d) const noexcept { return cost_[offset(x, y) + d]; }

  /// The d_max + 1 costs of one pixel.
  std::span<const float> curve(int x, int y) const noexcept {
    return {cost_.data() + offset(x, y), static_cast<std::size_t>(levels())};
  }

 private:
  std::size_t offset(int x, int y) const noexcept {
    return (static_cast<std::size_t>(y) * width_ + x) * static_cast<std::size_t>(levels());
  }

  int width_ = 0;
  int height_ = 0;
  int d_max_ = 0;
  std::vector<float> cost_;
};

using DisparityMap = MaskedMap<double>;

struct StereoParams {
  int d_max = 64;
  int window = 9;
  double pkr_threshold = 1.05;
  double min_disparity = 0.1;
};

inline constexpr double kPkrMax = 10.0;

/// cost(x, y, d) = mean |left(x', y') - right(x' - d, y')| over the window.
/// Throws on size mismatch, an even or < 3 window, or d_max < 1.
CostVolume compute_cost_volume(const Image& left, const Image& right, int d_max, int window);

/// Best cost, and the peak ratio (second-best / best) clamped to [1, kPkrMax].
/// The second-best candidate excludes the immediate neighbours of the minimum,
/// so the ratio compares competing minima rather than the slope of one basin.
struct CurveStats {
  int best = 0;
  double c_min = 1.0;
  double pkr = 1.0;
};
CurveStats curve_stats(std::span<const float> curve);

/// Sub-pixel offset in [-0.5, 0.5] of the parabola through (c_minus, c0, c_plus).
double parabola_offset(double c_minus, double c0, double c_plus);

/// Winner-take-all with parabolic refinement; pixels with pkr below
/// `pkr_threshold` are invalid.
DisparityMap wta_disparity(const CostVolume& cv, double pkr_threshold = 1.05);

/// Z = f B / d for valid d > min_disparity and Z <= kFarCap, else invalid.
DepthMap depth_from_disparity(const DisparityMap& disparity, const scenegen::CameraModel& cam,
                              double min_disparity = 0.1);

/// Per-pixel confidence features of the stereo branch.
struct StereoFeature {
  double c_min = 1.0;
  double pkr = 1.0;
  double disp_var = 0.0;   // population variance over valid disparities in the 3x3 window
  double disp_norm = 0.0;  // disparity / d_max, 0 where invalid
};
using StereoFeatureMap = Map<StereoFeature>;

StereoFeatureMap stereo_features(const CostVolume& cv, const DisparityMap& disparity);

}  // namespace tofstereo::stereo
