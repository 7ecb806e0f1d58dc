#include "tofstereo/scenegen.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include <Eigen/Geometry>

#include "tofstereo/rng.hpp"

namespace tofstereo::scenegen {

namespace {

constexpr double kDegToRad = std::numbers::pi / 180.0;

std::uint64_t lattice_key(std::int64_t i) { return static_cast<std::uint64_t>(i); }

double lattice_value(const Texture& tex, int octave, std::int64_t i, std::int64_t j) {
  if (tex.kind == TextureKind::Checker) {
    return ((i + j) % 2 != 0) ? 1.0 : 0.0;
  }
  return rng::uniform(tex.seed, static_cast<std::uint64_t>(octave), lattice_key(i),
                      lattice_key(j));
}

double bilinear_lattice(const Texture& tex, int octave, double u, double v, double spacing) {
  const double fu = u / spacing;
  const double fv = v / spacing;
  const double iu = std::floor(fu);
  const double iv = std::floor(fv);
  const double tx = fu - iu;
  const double ty = fv - iv;
  const auto i0 = static_cast<std::int64_t>(iu);
  const auto j0 = static_cast<std::int64_t>(iv);
  const double v00 = lattice_value(tex, octave, i0, j0);
  const double v10 = lattice_value(tex, octave, i0 + 1, j0);
  const double v01 = lattice_value(tex, octave, i0, j0 + 1);
  const double v11 = lattice_value(tex, octave, i0 + 1, j0 + 1);
  return (1.0 - ty) * ((1.0 - tx) * v00 + tx * v10) + ty * ((1.0 - tx) * v01 + tx * v11);
}

void check_reflectance(double r) {
  if (!(r >= kMinReflectance && r <= kMaxReflectance)) {
    throw Error("reflectance " + std::to_string(r) + " outside [0.02, 1.0]");
  }
}

bool behind_near_plane(const Primitive& p) {
  const Eigen::Vector3d& c = p.pose.center;
  switch (p.kind) {
    case PrimitiveKind::Plane:
      return c.z() <= kNearPlane;
    case PrimitiveKind::Sphere:
      return c.z() - p.extent.x() <= kNearPlane;
    case PrimitiveKind::Box: {
      const Eigen::Matrix3d r = p.pose.rotation();
      for (int corner = 0; corner < 8; ++corner) {
        const Eigen::Vector3d s((corner & 1) ? 1.0 : -1.0, (corner & 2) ? 1.0 : -1.0,
                                (corner & 4) ? 1.0 : -1.0);
        if ((c + r * p.extent.cwiseProduct(s)).z() <= kNearPlane) return true;
      }
      return false;
    }
  }
  return false;
}

struct Candidate {
  double t = std::numeric_limits<double>::infinity();
  Eigen::Vector3d normal = Eigen::Vector3d::Zero();
  double u = 0.0;
  double v = 0.0;
};

bool in_range(double depth) { return depth >= kNearPlane && depth <= kFarCap; }

void intersect_plane(const Primitive& p, const Eigen::Vector3d& o, const Eigen::Vector3d& d,
                     Candidate& best) {
  const Eigen::Matrix3d r = p.pose.rotation();
  const Eigen::Vector3d n = r * Eigen::Vector3d(0.0, 0.0, -1.0);
  const double denom = n.dot(d);
  if (std::abs(denom) < 1e-12) return;
  const double t = n.dot(p.pose.center - o) / denom;
  if (t <= 0.0 || t >= best.t) return;
  const Eigen::Vector3d hit = o + t * d;
  if (!in_range(hit.z())) return;
  const Eigen::Vector3d local = r.transpose() * (hit - p.pose.center);
  if (p.extent.x() > 0.0 && std::abs(local.x()) > p.extent.x()) return;
  if (p.extent.y() > 0.0 && std::abs(local.y()) > p.extent.y()) return;
  best.t = t;
  best.normal = n;
  best.u = local.x();
  best.v = local.y();
}

void intersect_sphere(const Primitive& p, const Eigen::Vector3d& o, const Eigen::Vector3d& d,
                      Candidate& best) {
  const double radius = p.extent.x();
  const Eigen::Vector3d oc = o - p.pose.center;
  const double a = d.squaredNorm();
  const double b = oc.dot(d);
  const double c = oc.squaredNorm() - radius * radius;
  const double disc = b * b - a * c;
  if (disc < 0.0) return;
  const double sq = std::sqrt(disc);
  for (double t : {(-b - sq) / a, (-b + sq) / a}) {
    if (t <= 0.0 || t >= best.t) continue;
    const Eigen::Vector3d hit = o + t * d;
    if (!in_range(hit.z())) continue;
    const Eigen::Matrix3d r = p.pose.rotation();
    const Eigen::Vector3d local = r.transpose() * (hit - p.pose.center);
    best.t = t;
    best.normal = (hit - p.pose.center) / radius;
    best.u = radius * std::atan2(local.x(), -local.z());
    best.v = radius * std::asin(std::clamp(local.y() / radius, -1.0, 1.0));
    return;
  }
}

void intersect_box(const Primitive& p, const Eigen::Vector3d& o, const Eigen::Vector3d& d,
                   Candidate& best) {
  const Eigen::Matrix3d r = p.pose.rotation();
  const Eigen::Vector3d ol = r.transpose() * (o - p.pose.center);
  const Eigen::Vector3d dl = r.transpose() * d;
  double t_enter = -std::numeric_limits<double>::infinity();
  double t_exit = std::numeric_limits<double>::infinity();
  int enter_axis = -1;
  int exit_axis = -1;
  for (int axis = 0; axis < 3; ++axis) {
    const double h = p.extent[axis];
    if (std::abs(dl[axis]) < 1e-15) {
      if (std::abs(ol[axis]) > h) return;
      continue;
    }
    double t0 = (-h - ol[axis]) / dl[axis];
    double t1 = (h - ol[axis]) / dl[axis];
    if (t0 > t1) std::swap(t0, t1);
    if (t0 > t_enter) {
      t_enter = t0;
      enter_axis = axis;
    }
    if (t1 < t_exit) {
      t_exit = t1;
      exit_axis = axis;
    }
  }
  if (t_enter > t_exit) return;
  for (auto [t, axis] : {std::pair{t_enter, enter_axis}, std::pair{t_exit, exit_axis}}) {
    if (axis < 0 || t <= 0.0 || t >= best.t) continue;
    const Eigen::Vector3d hit = o + t * d;
    if (!in_range(hit.z())) continue;
    const Eigen::Vector3d local = ol + t * dl;
    Eigen::Vector3d nl = Eigen::Vector3d::Zero();
    nl[axis] = local[axis] > 0.0 ? 1.0 : -1.0;
    best.t = t;
    best.normal = r * nl;
    best.u = local[(axis + 1) % 3];
    best.v = local[(axis + 2) % 3];
    return;
  }
}

}  // namespace

void CameraModel::validate() const {
  if (!(focal_px > 0.0)) throw Error("camera: focal_px must be > 0");
  if (!(baseline_m > 0.0)) throw Error("camera: baseline_m must be > 0");
  if (width <= 0 || height <= 0) throw Error("camera: resolution must be positive");
  if (!(cx >= 0.0 && cx < width)) throw Error("camera: cx outside [0, width)");
  if (!(cy >= 0.0 && cy < height)) throw Error("camera: cy outside [0, height)");
}

double Texture::sample(double u, double v) const {
  double t = 0.5;
  switch (kind) {
    case TextureKind::Uniform:
      break;
    case TextureKind::Checker:
      t = bilinear_lattice(*this, 0, u, v, scale_m);
      break;
    case TextureKind::Noise: {
      double sum = 0.0;
      double norm = 0.0;
      double amp = 1.0;
      double spacing = scale_m;
      for (int o = 0; o < std::max(1, octaves); ++o) {
        sum += amp * bilinear_lattice(*this, o, u, v, spacing);
        norm += amp;
        amp *= 0.5;
        spacing *= 0.5;
      }
      t = sum / norm;
      break;
    }
  }
  return std::clamp(base + contrast * (t - 0.5), 0.0, 1.0);
}

Eigen::Matrix3d Pose::rotation() const {
  return (Eigen::AngleAxisd(yaw_deg * kDegToRad, Eigen::Vector3d::UnitY()) *
          Eigen::AngleAxisd(pitch_deg * kDegToRad, Eigen::Vector3d::UnitX()))
      .toRotationMatrix();
}

void validate_scene(const Scene& scene) {
  if (scene.primitives.empty()) throw Error("empty scene spec");
  for (const auto& p : scene.primitives) {
    check_reflectance(p.reflectance);
    if (p.kind == PrimitiveKind::Sphere && !(p.extent.x() > 0.0)) {
      throw Error("sphere radius must be > 0");
    }
    if (p.kind == PrimitiveKind::Box && !(p.extent.minCoeff() > 0.0)) {
      throw Error("box half extents must be > 0");
    }
    if (!(p.texture.scale_m > 0.0)) throw Error("texture scale must be > 0");
    if (behind_near_plane(p)) throw Error("primitive behind near plane");
  }
}

Scene build_scene(const SceneSpec& spec, std::uint64_t seed) {
  if (spec.primitives.empty()) throw Error("empty scene spec");
  Scene scene;
  scene.primitives.reserve(spec.primitives.size());
  std::uint64_t index = 0;
  for (const auto& ps : spec.primitives) {
    check_reflectance(ps.nominal.reflectance);
    Primitive p = ps.nominal;
    auto jitter = [&](std::uint64_t component, double amount) {
      if (amount == 0.0) return 0.0;
      return amount * (2.0 * rng::uniform(seed, index, component) - 1.0);
    };
    for (int axis = 0; axis < 3; ++axis) {
      p.pose.center[axis] += jitter(static_cast<std::uint64_t>(axis), ps.position_jitter_m);
    }
    p.pose.yaw_deg += jitter(3, ps.angle_jitter_deg);
    p.pose.pitch_deg += jitter(4, ps.angle_jitter_deg);
    p.reflectance = std::clamp(p.reflectance + jitter(5, ps.reflectance_jitter), kMinReflectance,
                               kMaxReflectance);
    p.texture.seed = rng::hash(seed, index, ps.nominal.texture.seed, 0x7e47);
    scene.primitives.push_back(p);
    ++index;
  }
  validate_scene(scene);
  return scene;
}

std::optional<Hit> cast_ray(const Scene& scene, const Eigen::Vector3d& origin,
                            const Eigen::Vector3d& dir) {
  Candidate best;
  int best_index = -1;
  for (std::size_t i = 0; i < scene.primitives.size(); ++i) {
    const Primitive& p = scene.primitives[i];
    const double before = best.t;
    switch (p.kind) {
      case PrimitiveKind::Plane:
        intersect_plane(p, origin, dir, best);
        break;
      case PrimitiveKind::Sphere:
        intersect_sphere(p, origin, dir, best);
        break;
      case PrimitiveKind::Box:
        intersect_box(p, origin, dir, best);
        break;
    }
    if (best.t < before) best_index = static_cast<int>(i);
  }
  if (best_index < 0) return std::nullopt;
  Hit hit;
  hit.point = origin + best.t * dir;
  hit.depth = hit.point.z();
  hit.normal = best.normal;
  if (hit.normal.dot(dir) > 0.0) hit.normal = -hit.normal;
  hit.primitive = best_index;
  hit.u = best.u;
  hit.v = best.v;
  return hit;
}

DepthMap render_gt_depth(const Scene& scene, const CameraModel& cam) {
  cam.validate();
  DepthMap depth(cam.width, cam.height);
  const Eigen::Vector3d origin = Eigen::Vector3d::Zero();
  for (int y = 0; y < cam.height; ++y) {
    for (int x = 0; x < cam.width; ++x) {
      if (auto hit = cast_ray(scene, origin, cam.ray(x, y))) {
        depth.set(x, y, static_cast<float>(hit->depth));
      }
    }
  }
  return depth;
}

std::pair<Image, Image> render_stereo_pair(const Scene& scene, const CameraModel& cam) {
  cam.validate();
  Image left(cam.width, cam.height, 0.0f);
  Image right(cam.width, cam.height, 0.0f);
  const Eigen::Vector3d left_origin = Eigen::Vector3d::Zero();
  const Eigen::Vector3d right_origin(cam.baseline_m, 0.0, 0.0);
  auto shade = [&](const std::optional<Hit>& hit) -> float {
    if (!hit) return 0.0f;
    const Texture& tex = scene.primitives[static_cast<std::size_t>(hit->primitive)].texture;
    return static_cast<float>(tex.sample(hit->u, hit->v));
  };
  for (int y = 0; y < cam.height; ++y) {
    for (int x = 0; x < cam.width; ++x) {
      const Eigen::Vector3d dir = cam.ray(x, y);
      left(x, y) = shade(cast_ray(scene, left_origin, dir));
      right(x, y) = shade(cast_ray(scene, right_origin, dir));
    }
  }
  return {std::move(left), std::move(right)};
}

AuxMaps render_aux_maps(const Scene& scene, const CameraModel& cam) {
  cam.validate();
  AuxMaps aux{Map<float>(cam.width, cam.height, 0.0f), Map<int>(cam.width, cam.height, 0)};
  for (int y = 0; y < cam.height; ++y) {
    for (int x = 0; x < cam.width; ++x) {
      if (auto hit = cast_ray(scene, Eigen::Vector3d::Zero(), cam.ray(x, y))) {
        const Primitive& p = scene.primitives[static_cast<std::size_t>(hit->primitive)];
        aux.reflectance(x, y) = static_cast<float>(p.reflectance);
        aux.material_id(x, y) = p.material_id;
      }
    }
  }
  return aux;
}

MaskedMap<Eigen::Vector3d> render_normals(const Scene& scene, const CameraModel& cam) {
  cam.validate();
  MaskedMap<Eigen::Vector3d> normals(cam.width, cam.height);
  for (int y = 0; y < cam.height; ++y) {
    for (int x = 0; x < cam.width; ++x) {
      if (auto hit = cast_ray(scene, Eigen::Vector3d::Zero(), cam.ray(x, y))) {
        normals.set(x, y, hit->normal);
      }
    }
  }
  return normals;
}

}  // namespace tofstereo::scenegen
