#include "tofstereo/tofsim.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

#include "tofstereo/rng.hpp"

namespace tofstereo::tofsim {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;
constexpr double kDegToRad = std::numbers::pi / 180.0;

// Chebyshev dilation of a mask by `radius` pixels.
Mask dilate(const Mask& mask, int radius) {
  if (radius <= 0) return mask;
  Mask out(mask.width(), mask.height(), 0);
  for (int y = 0; y < mask.height(); ++y) {
    for (int x = 0; x < mask.width(); ++x) {
      if (!mask(x, y)) continue;
      for (int dy = -radius; dy <= radius; ++dy) {
        for (int dx = -radius; dx <= radius; ++dx) {
          if (out.contains(x + dx, y + dy)) out(x + dx, y + dy) = 1;
        }
      }
    }
  }
  return out;
}

}  // namespace

void ToFParams::validate() const {
  if (!(modulation_hz > 0.0)) throw Error("tof: modulation frequency must be > 0");
}

ToFNoiseParams ToFNoiseParams::zero() {
  ToFNoiseParams p;
  p.harmonic_amp_mm = 0.0;
  p.linear_coeff = 0.0;
  p.angle_err0_mm = 0.0;
  p.aperture_px = 0.0;
  p.edge_dropout = 0.0;
  p.base_noise_mm = 0.0;
  p.dropout_reflectance = 0.0;
  p.dropout_angle_deg = 0.0;
  return p;
}

void ToFNoiseParams::validate() const {
  for (double s : {harmonic_amp_mm, linear_coeff, angle_err0_mm, base_noise_mm,
                   dropout_reflectance, dropout_angle_deg}) {
    if (!(s >= 0.0)) throw Error("tof noise: scales must be >= 0");
  }
  if (!(harmonic_period_m > 0.0) || !(angle_theta0_deg > 0.0)) {
    throw Error("tof noise: periods must be > 0");
  }
  if (!(aperture_px >= 0.0 && aperture_px <= 5.0)) {
    throw Error("tof noise: aperture_px outside [0, 5]");
  }
  if (!(edge_dropout >= 0.0 && edge_dropout <= 1.0)) {
    throw Error("tof noise: edge_dropout outside [0, 1]");
  }
  if (!(edge_tau > 0.0)) throw Error("tof noise: edge_tau must be > 0");
  if (!(confidence_ref_distance_m > 0.0)) {
    throw Error("tof noise: confidence_ref_distance_m must be > 0");
  }
}

double phase_offset(const PhaseSamples& s) {
  if (s.c1 == s.c2 && s.c2 == s.c3 && s.c3 == s.c4) throw Error("undefined phase");
  double phi = std::atan2(s.c4 - s.c2, s.c1 - s.c3);
  if (phi < 0.0) phi += kTwoPi;
  if (phi >= kTwoPi) phi -= kTwoPi;
  return phi;
}

double phase_depth(double phase_rad, const ToFParams& p) {
  p.validate();
  return kSpeedOfLight * phase_rad / (4.0 * std::numbers::pi * p.modulation_hz) + p.depth_offset_m;
}

double amplitude(const PhaseSamples& s) {
  return 0.5 * std::hypot(s.c4 - s.c2, s.c1 - s.c3);
}

int confidence_level(double amp, double amplitude_max) {
  if (!(amplitude_max > 0.0)) throw Error("confidence_level: a_max must be > 0");
  const double bin = std::floor(kConfidenceLevels * amp / amplitude_max);
  return static_cast<int>(std::clamp(bin, 0.0, double(kConfidenceLevels - 1)));
}

PhaseSamples synthesize_samples(double depth_m, const ToFParams& p, double amp, double offset) {
  const double phi = (depth_m - p.depth_offset_m) * 4.0 * std::numbers::pi * p.modulation_hz /
                     kSpeedOfLight;
  auto sample = [&](int k) { return amp * std::cos(phi + k * std::numbers::pi / 2.0) + offset; };
  return {sample(0), sample(1), sample(2), sample(3)};
}

double bias_mm(double depth_m, const ToFNoiseParams& noise) {
  return noise.linear_coeff * depth_m +
         noise.harmonic_amp_mm * std::sin(kTwoPi * depth_m / noise.harmonic_period_m);
}

double noise_sigma_mm(double sot_deg, const ToFNoiseParams& noise) {
  return noise.base_noise_mm + noise.angle_err0_mm * std::exp(-sot_deg / noise.angle_theta0_deg);
}

double relative_amplitude(double depth_m, double sot_deg, double reflectance,
                          const ToFNoiseParams& noise) {
  const double ratio = noise.confidence_ref_distance_m / depth_m;
  return reflectance * std::sin(sot_deg * kDegToRad) * ratio * ratio;
}

ToFFrame simulate_tof(const DepthMap& gt, const geometry::AngleMap& sot,
                      const Map<float>& reflectance, const ToFNoiseParams& noise,
                      const ToFParams& tof) {
  require_same_shape(gt, sot, "simulate_tof");
  require_same_shape(gt, reflectance, "simulate_tof");
  noise.validate();
  tof.validate();

  const int w = gt.width();
  const int h = gt.height();
  auto angle_at = [&](std::size_t i) { return sot.is_valid(i) ? sot[i] : 90.0; };
  auto amp_at = [&](std::size_t i) {
    return relative_amplitude(gt[i], angle_at(i), reflectance[i], noise);
  };

  Mask locus(w, h, 0);
  if (noise.aperture_px > 0.0 || noise.edge_dropout > 0.0) {
    locus = geometry::edge_mask(geometry::depth_gradient(gt), noise.edge_tau);
    for (std::size_t i = 0; i < locus.size(); ++i) locus[i] = locus[i] && gt.is_valid(i);
  }
  const int radius = static_cast<int>(std::floor(noise.aperture_px));
  const Mask mixing = dilate(locus, radius);

  ToFFrame out{DepthMap(w, h), ConfidenceMap(w, h, 0)};
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const std::size_t i = gt.values().index(x, y);
      if (!gt.is_valid(i)) continue;

      // Foreground/background returns integrate over the aperture.
      double true_depth = gt[i];
      if (radius > 0 && mixing[i]) {
        double num = 0.0;
        double den = 0.0;
        for (int dy = -radius; dy <= radius; ++dy) {
          for (int dx = -radius; dx <= radius; ++dx) {
            if (!gt.contains(x + dx, y + dy) || !gt.is_valid(x + dx, y + dy)) continue;
            const std::size_t j = gt.values().index(x + dx, y + dy);
            const double a = amp_at(j);
            num += a * gt[j];
            den += a;
          }
        }
        if (den > 0.0) true_depth = num / den;
      }

      const double theta = angle_at(i);
      if (reflectance[i] < noise.dropout_reflectance || theta < noise.dropout_angle_deg) continue;

      const double error_mm =
          bias_mm(true_depth, noise) + noise_sigma_mm(theta, noise) * rng::normal(noise.seed, i);
      const double measured = true_depth + error_mm / 1000.0;
      if (!(measured > 0.0) || measured > kFarCap) continue;
      out.depth.set(i, static_cast<float>(measured));
      const double rel = relative_amplitude(true_depth, theta, reflectance[i], noise);
      out.confidence[i] = static_cast<std::uint8_t>(confidence_level(rel, 1.0));
    }
  }

  // Drop exactly ceil(rate * N) edge-locus pixels, chosen by a seeded shuffle.
  if (noise.edge_dropout > 0.0) {
    std::vector<std::size_t> edges;
    for (std::size_t i = 0; i < locus.size(); ++i) {
      if (locus[i]) edges.push_back(i);
    }
    for (std::size_t k = edges.size(); k > 1; --k) {
      const auto j = static_cast<std::size_t>(rng::hash(noise.seed, 0xed9e, k) % k);
      std::swap(edges[k - 1], edges[j]);
    }
    const auto drop = static_cast<std::size_t>(
        std::ceil(noise.edge_dropout * static_cast<double>(edges.size()) - 1e-9));
    for (std::size_t k = 0; k < std::min(drop, edges.size()); ++k) {
      out.depth.invalidate(edges[k]);
      out.confidence[edges[k]] = 0;
    }
  }
  return out;
}

}  // namespace tofstereo::tofsim
