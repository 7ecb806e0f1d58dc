#pragma once

#include <Eigen/Core>

#include "tofstereo/map.hpp"
#include "tofstereo/scenegen.hpp"

namespace tofstereo::geometry {

using PointMap = MaskedMap<Eigen::Vector3d>;
/// Unit normals in camera coordinates, oriented towards the camera (nz <= 0).
using NormalMap = MaskedMap<Eigen::Vector3d>;
/// Surface-to-optical-axis (SoT) angle in degrees, 90 = facing the camera.
using AngleMap = MaskedMap<double>;
/// Depth-gradient magnitude in meters per pixel.
using GradientMap = Map<double>;

/// Pinhole back-projection X = (x - cx) Z / f, Y = (y - cy) Z / f.
PointMap backproject(const DepthMap& depth, const scenegen::CameraModel& cam);

/// Cross product of central-difference tangents of the back-projected points.
/// Border pixels and pixels with an invalid 4-neighbour are invalid.
NormalMap normals_from_depth(const DepthMap& depth, const scenegen::CameraModel& cam);

enum class SotReference {
  OpticalAxis,  // angle against the global optical axis (default)
  ViewRay,      // angle against each pixel's viewing ray
};

/// theta = 90 deg - angle(normal, -reference), clamped to [0, 90].
/// `cam` is only consulted for SotReference::ViewRay.
AngleMap sot_angle_map(const NormalMap& normals, SotReference reference = SotReference::OpticalAxis,
                       const scenegen::CameraModel* cam = nullptr);

/// Central-difference magnitude sqrt(gx^2 + gy^2). Where a neighbour is invalid
/// or off-frame the one-sided difference is used; with neither neighbour the
/// component is zero. Invalid pixels get gradient 0.
GradientMap depth_gradient(const DepthMap& depth);

/// gradient > tau. Throws when tau <= 0.
Mask edge_mask(const GradientMap& gradient, double tau);

inline constexpr double kDefaultEdgeTau = 0.03;

/// Population variance over the valid 8-neighbours (the centre excluded).
/// Pixels with fewer than 3 valid neighbours are invalid.
ScalarField neighborhood_variance(const Map<double>& values, const Mask& valid);

}  // namespace tofstereo::geometry
