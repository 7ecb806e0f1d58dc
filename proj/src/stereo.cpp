#include "tofstereo/stereo.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace tofstereo::stereo {

CostVolume compute_cost_volume(const Image& left, const Image& right, int d_max, int window) {
  require_same_shape(left, right, "compute_cost_volume");
  if (window < 3 || window % 2 == 0) throw Error("compute_cost_volume: window must be odd and >= 3");
  if (d_max < 1) throw Error("compute_cost_volume: d_max must be >= 1");

  const int w = left.width();
  const int h = left.height();
  const int r = window / 2;
  const double norm = 1.0 / (static_cast<double>(window) * window);
  CostVolume cv(w, h, d_max);

  std::vector<double> diff(static_cast<std::size_t>(w) * h);
  std::vector<double> column(static_cast<std::size_t>(w));
  for (int d = 0; d <= d_max; ++d) {
    for (int y = 0; y < h; ++y) {
      for (int x = d; x < w; ++x) {
        diff[static_cast<std::size_t>(y) * w + x] = std::abs(double(left(x, y)) - right(x - d, y));
      }
    }
    for (int y = r; y + r < h; ++y) {
      // Vertical window sums, then a direct horizontal sum: exact zeros stay zero.
      for (int x = d; x < w; ++x) {
        double s = 0.0;
        for (int dy = -r; dy <= r; ++dy) s += diff[static_cast<std::size_t>(y + dy) * w + x];
        column[static_cast<std::size_t>(x)] = s;
      }
      for (int x = std::max(r, d + r); x + r < w; ++x) {
        double s = 0.0;
        for (int dx = -r; dx <= r; ++dx) s += column[static_cast<std::size_t>(x + dx)];
        cv.at(x, y, d) = static_cast<float>(std::clamp(s * norm, 0.0, 1.0));
      }
    }
  }
  return cv;
}

CurveStats curve_stats(std::span<const float> curve) {
  CurveStats stats;
  const int n = static_cast<int>(curve.size());
  if (n == 0) return stats;
  int best = 0;
  for (int d = 1; d < n; ++d) {
    if (curve[d] < curve[best]) best = d;
  }
  double second = -1.0;
  for (int d = 0; d < n; ++d) {
    if (d == best || (n > 3 && std::abs(d - best) < 2)) continue;
    if (second < 0.0 || curve[d] < second) second = curve[d];
  }
  stats.best = best;
  stats.c_min = curve[best];
  if (second < 0.0) {
    stats.pkr = 1.0;
  } else if (stats.c_min == 0.0) {
    stats.pkr = second > 0.0 ? kPkrMax : 1.0;
  } else {
    stats.pkr = std::clamp(second / stats.c_min, 1.0, kPkrMax);
  }
  return stats;
}

double parabola_offset(double c_minus, double c0, double c_plus) {
  const double denom = c_minus - 2.0 * c0 + c_plus;
  if (!(denom > 0.0)) return 0.0;
  return std::clamp((c_minus - c_plus) / (2.0 * denom), -0.5, 0.5);
}

DisparityMap wta_disparity(const CostVolume& cv, double pkr_threshold) {
  DisparityMap disp(cv.width(), cv.height());
  for (int y = 0; y < cv.height(); ++y) {
    for (int x = 0; x < cv.width(); ++x) {
      const auto curve = cv.curve(x, y);
      const CurveStats s = curve_stats(curve);
      if (s.pkr < pkr_threshold) continue;
      double d = s.best;
      if (s.best > 0 && s.best < cv.d_max()) {
        d += parabola_offset(curve[s.best - 1], curve[s.best], curve[s.best + 1]);
      }
      disp.set(x, y, std::clamp(d, 0.0, double(cv.d_max())));
    }
  }
  return disp;
}

DepthMap depth_from_disparity(const DisparityMap& disparity, const scenegen::CameraModel& cam,
                              double min_disparity) {
  cam.validate();
  DepthMap depth(disparity.width(), disparity.height());
  const double fb = cam.focal_px * cam.baseline_m;
  for (std::size_t i = 0; i < disparity.size(); ++i) {
    if (!disparity.is_valid(i) || !(disparity[i] > min_disparity)) continue;
    const double z = fb / disparity[i];
    if (z > kFarCap) continue;
    depth.set(i, static_cast<float>(z));
  }
  return depth;
}

StereoFeatureMap stereo_features(const CostVolume& cv, const DisparityMap& disparity) {
  require_same_shape(cv, disparity, "stereo_features");
  StereoFeatureMap features(cv.width(), cv.height());
  for (int y = 0; y < cv.height(); ++y) {
    for (int x = 0; x < cv.width(); ++x) {
      StereoFeature f;
      const CurveStats s = curve_stats(cv.curve(x, y));
      f.c_min = s.c_min;
      f.pkr = s.pkr;
      double sum = 0.0;
      double sum_sq = 0.0;
      int n = 0;
      for (int dy = -1; dy <= 1; ++dy) {
        for (int dx = -1; dx <= 1; ++dx) {
          if (!disparity.contains(x + dx, y + dy) || !disparity.is_valid(x + dx, y + dy)) continue;
          const double v = disparity(x + dx, y + dy);
          sum += v;
          sum_sq += v * v;
          ++n;
        }
      }
      if (n >= 2) {
        const double mean = sum / n;
        f.disp_var = std::max(0.0, sum_sq / n - mean * mean);
      }
      if (disparity.is_valid(x, y)) f.disp_norm = disparity(x, y) / cv.d_max();
      features(x, y) = f;
    }
  }
  return features;
}

}  // namespace tofstereo::stereo
