#pragma once

#include <cstdint>
#include <utility>

#include "tofstereo/geometry.hpp"
#include "tofstereo/map.hpp"

namespace tofstereo::tofsim {

inline constexpr double kSpeedOfLight = 299'792'458.0;
inline constexpr int kConfidenceLevels = 8;

/// Correlation samples at phase angles 0, 90, 180 and 270 degrees.
struct PhaseSamples {
  double c1 = 0.0;
  double c2 = 0.0;
  double c3 = 0.0;
  double c4 = 0.0;
};

struct ToFParams {
  double modulation_hz = 20e6;
  double depth_offset_m = 0.0;

  double unambiguous_range_m() const { return kSpeedOfLight / (2.0 * modulation_hz); }
  void validate() const;
};

/// Parametric error model. Distances in meters, errors in millimeters,
/// angles in degrees.
struct ToFNoiseParams {
  double harmonic_amp_mm = 8.0;
  double harmonic_period_m = 0.75;
  double linear_coeff = 5.0;  // mm of bias per meter of distance
  double angle_err0_mm = 40.0;
  double angle_theta0_deg = 20.0;
  double aperture_px = 1.0;
  double edge_dropout = 0.8;  // fraction of edge-locus pixels lost
  double edge_tau = geometry::kDefaultEdgeTau;
  double base_noise_mm = 2.0;
  double dropout_reflectance = 0.05;
  double dropout_angle_deg = 5.0;
  double confidence_ref_distance_m = 1.0;  // a_max: reflectance 1, fronto, at this distance
  std::uint64_t seed = 0;

  /// All error terms off: simulate_tof becomes the identity on valid pixels.
  static ToFNoiseParams zero();
  void validate() const;
};

/// Delta phi = atan2(C4 - C2, C1 - C3) wrapped to [0, 2 pi).
/// Throws when all four samples are equal.
double phase_offset(const PhaseSamples& s);

/// d = c * dphi / (4 pi f_m) + D_offset.
double phase_depth(double phase_rad, const ToFParams& p);

/// 0.5 * sqrt((C4 - C2)^2 + (C1 - C3)^2).
double amplitude(const PhaseSamples& s);

/// floor(8 a / a_max) clamped to [0, 7]. Throws when a_max <= 0.
int confidence_level(double amplitude, double amplitude_max);

/// Samples C_k = A cos(dphi + k pi / 2) + B, k = 0..3, of an ideal sensor.
PhaseSamples synthesize_samples(double depth_m, const ToFParams& p, double amp = 1.0,
                                double offset = 1.0);

/// Distance-dependent bias in millimeters:
/// linear_coeff * d + harmonic_amp_mm * sin(2 pi d / harmonic_period_m).
double bias_mm(double depth_m, const ToFNoiseParams& noise);

/// Standard deviation of the angle-dependent Gaussian term, millimeters.
double noise_sigma_mm(double sot_deg, const ToFNoiseParams& noise);

/// Received amplitude relative to a_max: refl * sin(theta) * (d_ref / d)^2.
double relative_amplitude(double depth_m, double sot_deg, double reflectance,
                          const ToFNoiseParams& noise);

using ConfidenceMap = Map<std::uint8_t>;

struct ToFFrame {
  DepthMap depth;
  ConfidenceMap confidence;
};

/// Simulated mobile iToF measurement of `gt`. `sot` holds SoT angles in
/// degrees; `reflectance` per-pixel reflectance. Ambient light has no term.
/// Throws on mismatched resolutions.
ToFFrame simulate_tof(const DepthMap& gt, const geometry::AngleMap& sot,
                      const Map<float>& reflectance, const ToFNoiseParams& noise,
                      const ToFParams& tof);

}  // namespace tofstereo::tofsim
