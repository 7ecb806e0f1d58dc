#include "tofstereo/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <Eigen/Geometry>

namespace tofstereo::geometry {

namespace {

constexpr double kRadToDeg = 180.0 / std::numbers::pi;

}  // namespace

PointMap backproject(const DepthMap& depth, const scenegen::CameraModel& cam) {
  cam.validate();
  PointMap points(depth.width(), depth.height());
  for (int y = 0; y < depth.height(); ++y) {
    for (int x = 0; x < depth.width(); ++x) {
      if (!depth.is_valid(x, y)) continue;
      const double z = depth(x, y);
      points.set(x, y, Eigen::Vector3d((x - cam.cx) * z / cam.focal_px,
                                       (y - cam.cy) * z / cam.focal_px, z));
    }
  }
  return points;
}

NormalMap normals_from_depth(const DepthMap& depth, const scenegen::CameraModel& cam) {
  const PointMap points = backproject(depth, cam);
  NormalMap normals(depth.width(), depth.height());
  for (int y = 1; y + 1 < depth.height(); ++y) {
    for (int x = 1; x + 1 < depth.width(); ++x) {
      if (!points.is_valid(x, y) || !points.is_valid(x - 1, y) || !points.is_valid(x + 1, y) ||
          !points.is_valid(x, y - 1) || !points.is_valid(x, y + 1)) {
        continue;
      }
      const Eigen::Vector3d tx = points(x + 1, y) - points(x - 1, y);
      const Eigen::Vector3d ty = points(x, y + 1) - points(x, y - 1);
      Eigen::Vector3d n = tx.cross(ty);
      const double len = n.norm();
      if (!(len > 0.0) || !std::isfinite(len)) continue;
      n /= len;
      if (n.z() > 0.0) n = -n;
      normals.set(x, y, n);
    }
  }
  return normals;
}

AngleMap sot_angle_map(const NormalMap& normals, SotReference reference,
                       const scenegen::CameraModel* cam) {
  if (reference == SotReference::ViewRay && cam == nullptr) {
    throw Error("sot_angle_map: view-ray reference needs a camera");
  }
  AngleMap angles(normals.width(), normals.height());
  for (int y = 0; y < normals.height(); ++y) {
    for (int x = 0; x < normals.width(); ++x) {
      if (!normals.is_valid(x, y)) continue;
      Eigen::Vector3d axis(0.0, 0.0, 1.0);
      if (reference == SotReference::ViewRay) axis = cam->ray(x, y).normalized();
      const double cos_to_axis = std::clamp(-normals(x, y).dot(axis), -1.0, 1.0);
      const double theta = 90.0 - std::acos(cos_to_axis) * kRadToDeg;
      angles.set(x, y, std::clamp(theta, 0.0, 90.0));
    }
  }
  return angles;
}

GradientMap depth_gradient(const DepthMap& depth) {
  GradientMap grad(depth.width(), depth.height(), 0.0);
  auto component = [&](int x, int y, int dx, int dy) {
    const bool fwd = depth.contains(x + dx, y + dy) && depth.is_valid(x + dx, y + dy);
    const bool bwd = depth.contains(x - dx, y - dy) && depth.is_valid(x - dx, y - dy);
    const double c = depth(x, y);
    if (fwd && bwd) return 0.5 * (double(depth(x + dx, y + dy)) - double(depth(x - dx, y - dy)));
    if (fwd) return double(depth(x + dx, y + dy)) - c;
    if (bwd) return c - double(depth(x - dx, y - dy));
    return 0.0;
  };
  for (int y = 0; y < depth.height(); ++y) {
    for (int x = 0; x < depth.width(); ++x) {
      if (!depth.is_valid(x, y)) continue;
      const double gx = component(x, y, 1, 0);
      const double gy = component(x, y, 0, 1);
      grad(x, y) = std::sqrt(gx * gx + gy * gy);
    }
  }
  return grad;
}

Mask edge_mask(const GradientMap& gradient, double tau) {
  if (!(tau > 0.0)) throw Error("edge_mask: tau must be > 0");
  Mask mask(gradient.width(), gradient.height(), 0);
  for (std::size_t i = 0; i < gradient.size(); ++i) mask[i] = gradient[i] > tau ? 1 : 0;
  return mask;
}

ScalarField neighborhood_variance(const Map<double>& values, const Mask& valid) {
  require_same_shape(values, valid, "neighborhood_variance");
  ScalarField out(values.width(), values.height());
  for (int y = 0; y < values.height(); ++y) {
    for (int x = 0; x < values.width(); ++x) {
      double sum = 0.0;
      double sum_sq = 0.0;
      int n = 0;
      for (int dy = -1; dy <= 1; ++dy) {
        for (int dx = -1; dx <= 1; ++dx) {
          if (dx == 0 && dy == 0) continue;
          const int nx = x + dx;
          const int ny = y + dy;
          if (!values.contains(nx, ny) || !valid(nx, ny)) continue;
          sum += values(nx, ny);
          ++n;
        }
      }
      if (n < 3) continue;
      const double mean = sum / n;
      for (int dy = -1; dy <= 1; ++dy) {
        for (int dx = -1; dx <= 1; ++dx) {
          if (dx == 0 && dy == 0) continue;
          const int nx = x + dx;
          const int ny = y + dy;
          if (!values.contains(nx, ny) || !valid(nx, ny)) continue;
          const double d = values(nx, ny) - mean;
          sum_sq += d * d;
        }
      }
      out.set(x, y, sum_sq / n);
    }
  }
  return out;
}

}  // namespace tofstereo::geometry
