#pragma once

#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "tofstereo/map.hpp"

namespace tofstereo::scenegen {

/// Pinhole intrinsics of the left (reference) camera. The right camera of the
/// rectified pair sits at +baseline_m along x with identical intrinsics.
struct CameraModel {
  double focal_px = 300.0;
  double cx = 160.0;
  double cy = 120.0;
  int width = 320;
  int height = 240;
  double baseline_m = 0.05;

  /// Throws Error when an invariant does not hold.
  void validate() const;

  /// Direction (not normalized, z = 1) of the ray through pixel (x, y).
  Eigen::Vector3d ray(double x, double y) const {
    return {(x - cx) / focal_px, (y - cy) / focal_px, 1.0};
  }
};

enum class TextureKind { Uniform, Checker, Noise };

/// Procedural lattice texture, bilinearly filtered. Luminance is
/// base + contrast * (t - 0.5) with t in [0, 1], clamped to [0, 1].
struct Texture {
  TextureKind kind = TextureKind::Uniform;
  double scale_m = 0.05;  // lattice spacing of the coarsest octave
  double base = 0.5;
  double contrast = 0.8;
  int octaves = 3;  // Noise only
  std::uint64_t seed = 0;

  double sample(double u, double v) const;
};

enum class PrimitiveKind { Plane, Box, Sphere };

struct Pose {
  Eigen::Vector3d center = Eigen::Vector3d(0.0, 0.0, 1.0);
  double yaw_deg = 0.0;    // about the camera y axis
  double pitch_deg = 0.0;  // about the camera x axis, applied before yaw

  Eigen::Matrix3d rotation() const;
};

/// One scene element. `extent` is interpreted per kind:
///  - Plane: (half_u, half_v, unused); a zero half-size means unbounded.
///  - Box: half extents along the local axes.
///  - Sphere: extent.x() is the radius.
/// An unrotated plane faces the camera (normal (0, 0, -1)).
struct Primitive {
  PrimitiveKind kind = PrimitiveKind::Plane;
  Pose pose;
  Eigen::Vector3d extent = Eigen::Vector3d::Zero();
  Texture texture;
  double reflectance = 0.5;
  int material_id = 1;
};

struct Scene {
  std::vector<Primitive> primitives;
};

/// A primitive template plus the randomization applied by build_scene.
struct PrimitiveSpec {
  Primitive nominal;
  double position_jitter_m = 0.0;
  double angle_jitter_deg = 0.0;
  double reflectance_jitter = 0.0;
};

struct SceneSpec {
  std::vector<PrimitiveSpec> primitives;
};

inline constexpr double kMinReflectance = 0.02;
inline constexpr double kMaxReflectance = 1.0;

/// Deterministic for identical (spec, seed). Texture seeds of every primitive
/// are re-derived from `seed`; jitters are drawn from a seeded generator.
/// Throws on an empty spec, a primitive behind the near plane, or a
/// reflectance outside [kMinReflectance, kMaxReflectance].
Scene build_scene(const SceneSpec& spec, std::uint64_t seed);

/// Checks the Scene invariants; build_scene calls this on its result.
void validate_scene(const Scene& scene);

struct Hit {
  double depth = 0.0;  // camera-frame Z of the hit point
  Eigen::Vector3d point = Eigen::Vector3d::Zero();
  Eigen::Vector3d normal = Eigen::Vector3d::Zero();
  int primitive = -1;
  double u = 0.0;  // texture coordinates in meters
  double v = 0.0;
};

/// Nearest hit with depth in [kNearPlane, kFarCap] along origin + t * dir.
std::optional<Hit> cast_ray(const Scene& scene, const Eigen::Vector3d& origin,
                            const Eigen::Vector3d& dir);

DepthMap render_gt_depth(const Scene& scene, const CameraModel& cam);

/// Rectified pair rendered by ray casting from both camera centers.
/// Pixels that see no primitive are black.
std::pair<Image, Image> render_stereo_pair(const Scene& scene, const CameraModel& cam);

struct AuxMaps {
  Map<float> reflectance;  // 0 where no primitive is visible
  Map<int> material_id;    // 0 where no primitive is visible
};

AuxMaps render_aux_maps(const Scene& scene, const CameraModel& cam);

/// Per-pixel analytic surface normals of the visible primitive (camera frame,
/// facing the camera).
MaskedMap<Eigen::Vector3d> render_normals(const Scene& scene, const CameraModel& cam);

}  // namespace tofstereo::scenegen
