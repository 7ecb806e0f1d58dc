#include "tofstereo/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "tofstereo/io.hpp"
#include "tofstereo/rng.hpp"

namespace tofstereo::pipeline {

namespace fs = std::filesystem;

namespace {

// Sequential uniform draws from a counter-based stream.
class Draw {
 public:
  explicit Draw(std::uint64_t seed) : seed_(seed) {}
  double uniform(double lo, double hi) { return lo + (hi - lo) * rng::uniform(seed_, n_++); }
  bool chance(double p) { return rng::uniform(seed_, n_++) < p; }
  int integer(int lo, int hi) {
    return lo + static_cast<int>(std::floor(uniform(0.0, 1.0) * (hi - lo + 1)));
  }
  std::uint64_t bits() { return rng::hash(seed_, n_++, 0xb175); }

 private:
  std::uint64_t seed_;
  std::uint64_t n_ = 0;
};

scenegen::Texture textured(Draw& d) {
  scenegen::Texture t;
  t.kind = scenegen::TextureKind::Noise;
  t.scale_m = d.uniform(0.03, 0.06);
  t.base = d.uniform(0.4, 0.6);
  t.contrast = d.uniform(0.7, 0.9);
  t.octaves = 3;
  t.seed = d.bits();
  return t;
}

scenegen::Texture weak(Draw& d) {
  scenegen::Texture t;
  t.kind = scenegen::TextureKind::Noise;
  t.scale_m = d.uniform(0.15, 0.3);
  t.base = d.uniform(0.4, 0.7);
  t.contrast = d.uniform(0.0, 0.02);
  t.octaves = 1;
  t.seed = d.bits();
  return t;
}

scenegen::PrimitiveSpec spec_of(const scenegen::Primitive& p) {
  scenegen::PrimitiveSpec s;
  s.nominal = p;
  return s;
}

DepthMap box_smooth(const DepthMap& depth, int radius) {
  DepthMap out(depth.width(), depth.height());
  for (int y = 0; y < depth.height(); ++y) {
    for (int x = 0; x < depth.width(); ++x) {
      if (!depth.is_valid(x, y)) continue;
      double sum = 0.0;
      int n = 0;
      for (int dy = -radius; dy <= radius; ++dy) {
        for (int dx = -radius; dx <= radius; ++dx) {
          if (!depth.contains(x + dx, y + dy) || !depth.is_valid(x + dx, y + dy)) continue;
          sum += depth(x + dx, y + dy);
          ++n;
        }
      }
      out.set(x, y, static_cast<float>(sum / n));
    }
  }
  return out;
}

fs::path scene_dir(const fs::path& out, int index) { return out / scene_name(index); }

// Normal map stored as a three-channel PFM; invalid normals are zero vectors.
void write_normals(const fs::path& path, const geometry::NormalMap& normals) {
  Map<io::Rgb> rgb(normals.width(), normals.height(), io::Rgb{0.0f, 0.0f, 0.0f});
  for (std::size_t i = 0; i < normals.size(); ++i) {
    if (!normals.is_valid(i)) continue;
    rgb[i] = {float(normals[i].x()), float(normals[i].y()), float(normals[i].z())};
  }
  io::write_pfm_rgb(path, rgb);
}

Mask read_normal_validity(const fs::path& path) {
  const Map<io::Rgb> rgb = io::read_pfm_rgb(path);
  Mask valid(rgb.width(), rgb.height(), 0);
  for (std::size_t i = 0; i < rgb.size(); ++i) {
    valid[i] = (rgb[i][0] != 0.0f || rgb[i][1] != 0.0f || rgb[i][2] != 0.0f) ? 1 : 0;
  }
  return valid;
}

Map<float> field_to_raw(const ScalarField& f) {
  Map<float> raw(f.width(), f.height(), 0.0f);
  for (std::size_t i = 0; i < f.size(); ++i) {
    if (f.is_valid(i)) raw[i] = static_cast<float>(f[i]);
  }
  return raw;
}

// Stereo features stacked vertically: c_min, pkr, disp_var, disp_norm.
void write_stereo_features(const fs::path& path, const stereo::StereoFeatureMap& f) {
  const int w = f.width();
  const int h = f.height();
  Map<float> raw(w, 4 * h, 0.0f);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const stereo::StereoFeature& s = f(x, y);
      raw(x, y) = float(s.c_min);
      raw(x, y + h) = float(s.pkr);
      raw(x, y + 2 * h) = float(s.disp_var);
      raw(x, y + 3 * h) = float(s.disp_norm);
    }
  }
  io::write_pfm_raw(path, raw);
}

stereo::StereoFeatureMap read_stereo_features(const fs::path& path) {
  io::require_file(path);
  const Map<float> raw = io::read_pfm_raw(path);
  if (raw.height() % 4 != 0) throw Error("stereo feature file has a bad layout: " + path.string());
  const int w = raw.width();
  const int h = raw.height() / 4;
  stereo::StereoFeatureMap f(w, h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      f(x, y) = {raw(x, y), raw(x, y + h), raw(x, y + 2 * h), raw(x, y + 3 * h)};
    }
  }
  return f;
}

DepthMap read_depth(const fs::path& path) {
  io::require_file(path);
  return io::read_pfm(path);
}

struct LoadedScene {
  DepthMap gt;
  tofsim::ToFFrame tof;
  geometry::AngleMap sot;
  DepthMap stereo_depth;
  stereo::StereoFeatureMap stereo_features;
};

LoadedScene load_scene(const fs::path& dir) {
  LoadedScene s;
  s.gt = read_depth(dir / "gt.pfm");
  s.tof.depth = read_depth(dir / "tof.pfm");
  io::require_file(dir / "conf.png");
  s.tof.confidence = io::read_png8(dir / "conf.png");
  io::require_file(dir / "normal.pfm");
  const Mask valid = read_normal_validity(dir / "normal.pfm");
  io::require_file(dir / "sot.pfm");
  const Map<float> sot_raw = io::read_pfm_raw(dir / "sot.pfm");
  require_same_shape(valid, sot_raw, "sot.pfm");
  s.sot = geometry::AngleMap(sot_raw.width(), sot_raw.height());
  for (std::size_t i = 0; i < sot_raw.size(); ++i) {
    if (valid[i] != 0) s.sot.set(i, double(sot_raw[i]));
  }
  s.stereo_depth = read_depth(dir / "stereo.pfm");
  s.stereo_features = read_stereo_features(dir / "stereo_feat.pfm");
  require_same_shape(s.gt, s.tof.depth, "scene");
  require_same_shape(s.gt, s.tof.confidence, "scene");
  require_same_shape(s.gt, s.sot, "scene");
  require_same_shape(s.gt, s.stereo_depth, "scene");
  require_same_shape(s.gt, s.stereo_features, "scene");
  return s;
}

std::vector<fusion::FusionSample> load_samples(const config::PipelineConfig& cfg,
                                               const fs::path& out,
                                               const std::vector<int>& indices) {
  std::vector<fusion::FusionSample> samples;
  samples.reserve(indices.size());
  for (int i : indices) {
    const LoadedScene s = load_scene(scene_dir(out, i));
    samples.push_back(make_sample(cfg, s.gt, s.tof, s.sot, s.stereo_depth, s.stereo_features));
  }
  return samples;
}

std::string history_csv(const std::vector<dei::EpochRecord>& h) {
  std::string out = "epoch,loss,top1,top3\n";
  char buf[128];
  for (const auto& r : h) {
    std::snprintf(buf, sizeof(buf), "%d,%.9g,%.6f,%.6f\n", r.epoch, r.loss, r.top1, r.top3);
    out += buf;
  }
  return out;
}

std::string loss_csv(const std::vector<double>& h) {
  std::string out = "epoch,loss\n";
  char buf[64];
  for (std::size_t i = 0; i < h.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "%zu,%.9g\n", i + 1, h[i]);
    out += buf;
  }
  return out;
}

void write_fused(const fs::path& dir, const std::string& name, const DepthMap& d) {
  io::write_pfm(dir / ("fused_" + name + ".pfm"), d);
  io::write_png16(dir / ("fused_" + name + ".png"), d);
}

void require_scenes(const config::PipelineConfig& cfg) {
  if (cfg.corpus.count <= 0) throw Error("empty corpus");
}

fs::path params_dir(const fs::path& out) { return out / "params"; }

}  // namespace

std::string scene_name(int index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "scene_%04d", index);
  return buf;
}

std::uint64_t scene_seed(std::uint64_t corpus_seed, int index) {
  return rng::hash(corpus_seed, static_cast<std::uint64_t>(index), 0x5ce7e);
}

scenegen::SceneSpec random_scene_spec(const config::SceneMix& mix, std::uint64_t seed) {
  Draw d(seed);
  scenegen::SceneSpec spec;
  int material = 1;

  scenegen::Primitive wall;
  wall.kind = scenegen::PrimitiveKind::Plane;
  wall.pose.center = {d.uniform(-0.2, 0.2), d.uniform(-0.2, 0.2), d.uniform(1.8, 3.0)};
  wall.pose.yaw_deg = d.uniform(-20.0, 20.0);
  wall.pose.pitch_deg = d.uniform(-10.0, 10.0);
  wall.texture = d.chance(mix.weak_texture) ? weak(d) : textured(d);
  wall.reflectance = d.uniform(0.5, 0.9);
  wall.material_id = material++;
  spec.primitives.push_back(spec_of(wall));

  if (d.chance(mix.grazing)) {
    // Floor-like plane rising toward the horizon, seen at 7-14 degrees.
    scenegen::Primitive floor;
    floor.kind = scenegen::PrimitiveKind::Plane;
    const double tilt = d.uniform(76.0, 83.0);
    floor.pose.center = {0.0, d.uniform(0.25, 0.35), d.uniform(1.2, 1.6)};
    floor.pose.pitch_deg = -tilt;
    floor.pose.yaw_deg = d.uniform(-10.0, 10.0);
    floor.extent = {1.5, 1.2, 0.0};
    floor.texture = textured(d);
    floor.reflectance = d.uniform(0.5, 0.9);
    floor.material_id = material++;
    spec.primitives.push_back(spec_of(floor));
  }

  const int objects = d.integer(mix.min_objects, mix.max_objects);
  for (int k = 0; k < objects; ++k) {
    scenegen::Primitive obj;
    const double z = d.uniform(0.6, 1.6);
    obj.pose.center = {d.uniform(-0.3, 0.3) * z, d.uniform(-0.2, 0.15) * z, z};
    if (d.chance(0.5)) {
      obj.kind = scenegen::PrimitiveKind::Box;
      obj.extent = {d.uniform(0.08, 0.2), d.uniform(0.08, 0.2), d.uniform(0.08, 0.2)};
      obj.pose.yaw_deg = d.uniform(10.0, 50.0) * (d.chance(0.5) ? 1.0 : -1.0);
      obj.pose.pitch_deg = d.uniform(-20.0, 20.0);
    } else {
      obj.kind = scenegen::PrimitiveKind::Sphere;
      obj.extent = {d.uniform(0.08, 0.2), 0.0, 0.0};
    }
    if (d.chance(mix.dark)) {
      obj.texture = textured(d);
      obj.reflectance = d.uniform(0.02, 0.045);
    } else {
      obj.texture = d.chance(mix.weak_texture) ? weak(d) : textured(d);
      obj.reflectance = d.uniform(0.4, 0.9);
    }
    obj.material_id = material++;
    spec.primitives.push_back(spec_of(obj));
  }
  return spec;
}

geometry::NormalMap tof_normals(const DepthMap& tof, const scenegen::CameraModel& cam,
                                int smoothing_px) {
  if (smoothing_px < 0) throw Error("normal smoothing radius must be >= 0");
  return geometry::normals_from_depth(smoothing_px > 0 ? box_smooth(tof, smoothing_px) : tof, cam);
}

geometry::AngleMap sot_from_normals(const geometry::NormalMap& normals) {
  geometry::AngleMap sot = geometry::sot_angle_map(normals);
  // Stored as float on disk; keep the in-memory value identical.
  geometry::AngleMap out(sot.width(), sot.height());
  for (std::size_t i = 0; i < sot.size(); ++i) {
    if (sot.is_valid(i)) out.set(i, double(static_cast<float>(sot[i])));
  }
  return out;
}

SimulatedScene simulate_scene(const config::PipelineConfig& cfg, int index) {
  const std::uint64_t seed = scene_seed(cfg.corpus.seed, index);
  const scenegen::SceneSpec spec =
      cfg.corpus.spec ? *cfg.corpus.spec : random_scene_spec(cfg.corpus.mix, seed);
  const scenegen::Scene scene = scenegen::build_scene(spec, seed);
  const scenegen::CameraModel& cam = cfg.camera;

  SimulatedScene s;
  s.gt = scenegen::render_gt_depth(scene, cam);
  auto [left, right] = scenegen::render_stereo_pair(scene, cam);
  const double sigma = cfg.corpus.image_noise;
  auto quantize = [&](Image& img, std::uint64_t stream) {
    for (std::size_t i = 0; i < img.size(); ++i) {
      double v = img[i];
      if (sigma > 0.0) v += sigma * rng::normal(rng::hash(seed, stream), i);
      const long q = std::lround(std::clamp(v, 0.0, 1.0) * 255.0);
      img[i] = static_cast<float>(double(q) / 255.0);
    }
  };
  quantize(left, 0x1ef7);
  quantize(right, 0x5167);
  s.left = std::move(left);
  s.right = std::move(right);

  s.reflectance = scenegen::render_aux_maps(scene, cam).reflectance;
  const geometry::AngleMap true_sot = geometry::sot_angle_map(scenegen::render_normals(scene, cam));
  tofsim::ToFNoiseParams noise = cfg.noise;
  noise.seed = rng::hash(cfg.noise.seed, seed, 0x70f);
  s.tof = tofsim::simulate_tof(s.gt, true_sot, s.reflectance, noise, cfg.tof);
  s.normals = tof_normals(s.tof.depth, cam, cfg.normal_smoothing_px);
  s.sot = sot_from_normals(s.normals);
  return s;
}

StereoResult run_stereo(const Image& left, const Image& right, const config::PipelineConfig& cfg) {
  const stereo::CostVolume cv =
      stereo::compute_cost_volume(left, right, cfg.stereo.d_max, cfg.stereo.window);
  StereoResult r;
  r.disparity = stereo::wta_disparity(cv, cfg.stereo.pkr_threshold);
  r.depth = stereo::depth_from_disparity(r.disparity, cfg.camera, cfg.stereo.min_disparity);
  r.features = stereo::stereo_features(cv, r.disparity);
  // Round features through float so in-memory and on-disk runs agree.
  for (auto& f : r.features.data()) {
    f = {double(float(f.c_min)), double(float(f.pkr)), double(float(f.disp_var)),
         double(float(f.disp_norm))};
  }
  return r;
}

Map<double> pkr_map(const stereo::StereoFeatureMap& features) {
  Map<double> out(features.width(), features.height(), 1.0);
  for (std::size_t i = 0; i < features.size(); ++i) out[i] = features[i].pkr;
  return out;
}

fusion::FusionSample make_sample(const config::PipelineConfig& cfg, const DepthMap& gt,
                                 const tofsim::ToFFrame& tof, const geometry::AngleMap& sot,
                                 const DepthMap& stereo_depth,
                                 const stereo::StereoFeatureMap& stereo_features) {
  fusion::FusionSample s;
  s.tof = tof.depth;
  s.stereo = stereo_depth;
  s.gt = gt;
  s.confidence = tof.confidence;
  s.pkr = pkr_map(stereo_features);
  s.tof_tile.features = dei::tof_features(tof.depth, sot, tof.confidence, cfg.features);
  s.tof_tile.labels = dei::make_labels(tof.depth, gt);
  s.tof_tile.gradient =
      dei::normalize_gradient(geometry::depth_gradient(tof.depth), cfg.features.gradient_tau);
  s.tof_tile.sot = sot;
  s.stereo_tile.features = dei::stereo_features_for_dei(stereo_features, stereo_depth, cfg.features);
  s.stereo_tile.labels = dei::make_labels(stereo_depth, gt);
  s.stereo_tile.gradient = geometry::GradientMap(gt.width(), gt.height(), 0.0);
  return s;
}

FusedScene fuse_scene(const fusion::FusionSample& sample, const dei::ClassifierParams& tof,
                      const dei::ClassifierParams& stereo, const fusion::BlendParams& blend) {
  FusedScene f;
  f.e_tof = fusion::expected_error(dei::forward(tof, sample.tof_tile.features));
  f.e_stereo = fusion::expected_error(dei::forward(stereo, sample.stereo_tile.features));
  f.simple = fusion::fuse_simple(sample.tof, sample.stereo);
  f.select = fusion::fuse_select(sample.tof, sample.stereo, f.e_tof, f.e_stereo);
  const dei::FeatureMap features =
      fusion::blend_features(f.e_tof, f.e_stereo, sample.confidence, sample.pkr);
  f.blend = fusion::fuse_blend(sample.tof, sample.stereo, features, blend);
  return f;
}

std::pair<std::vector<int>, std::vector<int>> split_indices(int count, double val_fraction) {
  if (count <= 0) throw Error("empty corpus");
  int n_val = static_cast<int>(std::floor(count * val_fraction + 0.5));
  n_val = std::clamp(n_val, 0, count - 1);
  std::vector<int> train, val;
  for (int i = 0; i < count; ++i) (i < count - n_val ? train : val).push_back(i);
  return {train, val};
}

void cmd_simulate(const config::PipelineConfig& cfg, const fs::path& out) {
  cfg.validate();
  require_scenes(cfg);
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec || !fs::is_directory(out)) throw Error("cannot create output directory " + out.string());
  for (int i = 0; i < cfg.corpus.count; ++i) {
    const SimulatedScene s = simulate_scene(cfg, i);
    const fs::path dir = scene_dir(out, i);
    fs::create_directories(dir, ec);
    if (ec) throw Error("cannot create " + dir.string());
    io::write_pfm(dir / "gt.pfm", s.gt);
    io::write_image(dir / "left.png", s.left);
    io::write_image(dir / "right.png", s.right);
    io::write_pfm(dir / "tof.pfm", s.tof.depth);
    io::write_png8(dir / "conf.png", s.tof.confidence);
    write_normals(dir / "normal.pfm", s.normals);
    io::write_pfm_raw(dir / "sot.pfm", field_to_raw(s.sot));
    io::write_pfm_raw(dir / "refl.pfm", s.reflectance);
  }
}

void cmd_stereo(const config::PipelineConfig& cfg, const fs::path& out) {
  cfg.validate();
  require_scenes(cfg);
  for (int i = 0; i < cfg.corpus.count; ++i) {
    const fs::path dir = scene_dir(out, i);
    io::require_file(dir / "left.png");
    io::require_file(dir / "right.png");
    const StereoResult r =
        run_stereo(io::read_image(dir / "left.png"), io::read_image(dir / "right.png"), cfg);
    io::write_pfm_raw(dir / "disp.pfm", field_to_raw(r.disparity));
    io::write_pfm(dir / "stereo.pfm", r.depth);
    write_stereo_features(dir / "stereo_feat.pfm", r.features);
  }
}

void cmd_train(const config::PipelineConfig& cfg, const fs::path& out) {
  cfg.validate();
  require_scenes(cfg);
  const auto [train_idx, val_idx] = split_indices(cfg.corpus.count, cfg.corpus.val_fraction);
  const auto train = load_samples(cfg, out, train_idx);
  const auto val = load_samples(cfg, out, val_idx);
  const fusion::TwoStageResult r = fusion::train_two_stage(train, val, cfg.train);

  const fs::path dir = params_dir(out);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error("cannot create " + dir.string());
  io::write_classifier(dir / "tof.bin", r.tof);
  io::write_classifier(dir / "stereo.bin", r.stereo);
  io::write_blend(dir / "blend.bin", r.blend);
  io::write_text_atomic(dir / "hyper.txt", config::to_text(cfg));
  io::write_text_atomic(dir / "tof_history.csv", history_csv(r.tof_history));
  io::write_text_atomic(dir / "stereo_history.csv", history_csv(r.stereo_history));
  io::write_text_atomic(dir / "blend_history.csv", loss_csv(r.blend_history));
  if (!r.joint_history.empty()) {
    io::write_text_atomic(dir / "joint_history.csv", loss_csv(r.joint_history));
  }
}

void cmd_fuse(const config::PipelineConfig& cfg, const fs::path& out) {
  cfg.validate();
  require_scenes(cfg);
  const fs::path dir = params_dir(out);
  const dei::ClassifierParams tof = io::read_classifier(dir / "tof.bin");
  const dei::ClassifierParams stereo = io::read_classifier(dir / "stereo.bin");
  const fusion::BlendParams blend = io::read_blend(dir / "blend.bin");
  for (int i = 0; i < cfg.corpus.count; ++i) {
    const LoadedScene s = load_scene(scene_dir(out, i));
    const fusion::FusionSample sample =
        make_sample(cfg, s.gt, s.tof, s.sot, s.stereo_depth, s.stereo_features);
    const FusedScene f = fuse_scene(sample, tof, stereo, blend);
    const fs::path sd = scene_dir(out, i);
    write_fused(sd, "sf", f.simple);
    write_fused(sd, "select", f.select);
    write_fused(sd, "blend", f.blend);
  }
}

void cmd_eval(const config::PipelineConfig& cfg, const fs::path& out) {
  cfg.validate();
  require_scenes(cfg);
  const char* methods[] = {"tof", "stereo", "sf", "select", "blend"};
  std::vector<eval::ReportRow> rows;
  std::vector<eval::ReportRow> pooled;
  eval::MetricsAccumulator acc[5];
  eval::QuadrantAccumulator quad_all;
  const eval::InvalidPolicy policy = eval::InvalidPolicy::Penalize;
  for (int i = 0; i < cfg.corpus.count; ++i) {
    const fs::path dir = scene_dir(out, i);
    const DepthMap gt = read_depth(dir / "gt.pfm");
    const DepthMap preds[5] = {read_depth(dir / "tof.pfm"), read_depth(dir / "stereo.pfm"),
                               read_depth(dir / "fused_sf.pfm"),
                               read_depth(dir / "fused_select.pfm"),
                               read_depth(dir / "fused_blend.pfm")};
    const ScalarField err_tof = eval::abs_error_mm(preds[0], gt);
    const ScalarField err_stereo = eval::abs_error_mm(preds[1], gt);
    const eval::QuadrantStats q = eval::quadrant_analysis(err_tof, err_stereo);
    quad_all.add(err_tof, err_stereo);
    for (int m = 0; m < 5; ++m) {
      rows.push_back({scene_name(i), methods[m], eval::depth_metrics(preds[m], gt, policy), q});
      acc[m].add(preds[m], gt, policy);
    }
  }
  for (int m = 0; m < 5; ++m) pooled.push_back({"all", methods[m], acc[m].report(), quad_all.stats()});
  eval::emit_report(rows, out / "report.csv");
  eval::emit_report(pooled, out / "summary.csv");
}

}  // namespace tofstereo::pipeline
