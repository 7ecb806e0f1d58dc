#include "tofstereo/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <vector>

namespace tofstereo::config {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

struct Entry {
  std::string value;
  int line = 0;
};

struct Section {
  std::string name;
  int line = 0;
  std::map<std::string, Entry> entries;
};

[[noreturn]] void fail(int line, const std::string& msg) {
  throw Error("config line " + std::to_string(line) + ": " + msg);
}

double to_double(const Entry& e, const std::string& key) {
  double v = 0.0;
  const char* first = e.value.data();
  const char* last = first + e.value.size();
  const auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last || !std::isfinite(v)) {
    fail(e.line, "'" + key + "' expects a number, got '" + e.value + "'");
  }
  return v;
}

long long to_int(const Entry& e, const std::string& key) {
  long long v = 0;
  const char* first = e.value.data();
  const char* last = first + e.value.size();
  const auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last) {
    fail(e.line, "'" + key + "' expects an integer, got '" + e.value + "'");
  }
  return v;
}

std::uint64_t to_u64(const Entry& e, const std::string& key) {
  std::uint64_t v = 0;
  const char* first = e.value.data();
  const char* last = first + e.value.size();
  const auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last) {
    fail(e.line, "'" + key + "' expects an unsigned integer, got '" + e.value + "'");
  }
  return v;
}

bool to_bool(const Entry& e, const std::string& key) {
  if (e.value == "true" || e.value == "1") return true;
  if (e.value == "false" || e.value == "0") return false;
  fail(e.line, "'" + key + "' expects true or false, got '" + e.value + "'");
}

Eigen::Vector3d to_vec3(const Entry& e, const std::string& key) {
  std::istringstream in(e.value);
  Eigen::Vector3d v;
  std::string extra;
  if (!(in >> v.x() >> v.y() >> v.z()) || (in >> extra) || !v.allFinite()) {
    fail(e.line, "'" + key + "' expects three numbers, got '" + e.value + "'");
  }
  return v;
}

// Binds each key of a section to a setter; unknown keys are errors.
class Binder {
 public:
  explicit Binder(const Section& s) : s_(s) {}

  void num(const std::string& key, double& out) {
    bind(key, [&](const Entry& e) { out = to_double(e, key); });
  }
  void integer(const std::string& key, int& out) {
    bind(key, [&](const Entry& e) {
      const long long v = to_int(e, key);
      if (v < INT32_MIN || v > INT32_MAX) fail(e.line, "'" + key + "' out of range");
      out = static_cast<int>(v);
    });
  }
  void u64(const std::string& key, std::uint64_t& out) {
    bind(key, [&](const Entry& e) { out = to_u64(e, key); });
  }
  void boolean(const std::string& key, bool& out) {
    bind(key, [&](const Entry& e) { out = to_bool(e, key); });
  }
  void vec3(const std::string& key, Eigen::Vector3d& out) {
    bind(key, [&](const Entry& e) { out = to_vec3(e, key); });
  }
  void text(const std::string& key, std::string& out) {
    bind(key, [&](const Entry& e) { out = e.value; });
  }
  template <typename Enum>
  void choice(const std::string& key, Enum& out, const std::map<std::string, Enum>& options) {
    bind(key, [&](const Entry& e) {
      const auto it = options.find(e.value);
      if (it == options.end()) fail(e.line, "'" + key + "' has unknown value '" + e.value + "'");
      out = it->second;
    });
  }

  void finish() const {
    for (const auto& [key, entry] : s_.entries) {
      if (!known_.count(key)) fail(entry.line, "unknown key '" + key + "' in [" + s_.name + "]");
    }
  }

 private:
  void bind(const std::string& key, const std::function<void(const Entry&)>& apply) {
    known_.insert(key);
    const auto it = s_.entries.find(key);
    if (it != s_.entries.end()) apply(it->second);
  }

  const Section& s_;
  std::set<std::string> known_;
};

const std::map<std::string, scenegen::PrimitiveKind> kKinds = {
    {"plane", scenegen::PrimitiveKind::Plane},
    {"box", scenegen::PrimitiveKind::Box},
    {"sphere", scenegen::PrimitiveKind::Sphere}};
const std::map<std::string, scenegen::TextureKind> kTextures = {
    {"uniform", scenegen::TextureKind::Uniform},
    {"checker", scenegen::TextureKind::Checker},
    {"noise", scenegen::TextureKind::Noise}};
const std::map<std::string, dei::EdgeWeighting> kWeightings = {
    {"decay", dei::EdgeWeighting::Decay}, {"emphasize", dei::EdgeWeighting::Emphasize}};
const std::map<std::string, dei::Optimizer> kOptimizers = {{"adam", dei::Optimizer::Adam},
                                                           {"sgd", dei::Optimizer::Sgd}};

template <typename Enum>
std::string name_of(const std::map<std::string, Enum>& options, Enum v) {
  for (const auto& [k, e] : options) {
    if (e == v) return k;
  }
  return "?";
}

void bind_primitive(Binder& b, scenegen::PrimitiveSpec& p) {
  b.choice("kind", p.nominal.kind, kKinds);
  b.vec3("center", p.nominal.pose.center);
  b.num("yaw_deg", p.nominal.pose.yaw_deg);
  b.num("pitch_deg", p.nominal.pose.pitch_deg);
  b.vec3("extent", p.nominal.extent);
  b.choice("texture", p.nominal.texture.kind, kTextures);
  b.num("texture_scale_m", p.nominal.texture.scale_m);
  b.num("texture_base", p.nominal.texture.base);
  b.num("texture_contrast", p.nominal.texture.contrast);
  b.integer("texture_octaves", p.nominal.texture.octaves);
  b.u64("texture_seed", p.nominal.texture.seed);
  b.num("reflectance", p.nominal.reflectance);
  b.integer("material_id", p.nominal.material_id);
  b.num("position_jitter_m", p.position_jitter_m);
  b.num("angle_jitter_deg", p.angle_jitter_deg);
  b.num("reflectance_jitter", p.reflectance_jitter);
}

// Binds every section of a configuration through `v`.
void bind_all(PipelineConfig& c, const std::function<void(const std::string&,
                                                          const std::function<void(Binder&)>&)>& v) {
  v("camera", [&](Binder& b) {
    b.num("focal_px", c.camera.focal_px);
    b.num("cx", c.camera.cx);
    b.num("cy", c.camera.cy);
    b.integer("width", c.camera.width);
    b.integer("height", c.camera.height);
    b.num("baseline_m", c.camera.baseline_m);
  });
  v("corpus", [&](Binder& b) {
    b.integer("count", c.corpus.count);
    b.u64("seed", c.corpus.seed);
    b.num("image_noise", c.corpus.image_noise);
    b.num("val_fraction", c.corpus.val_fraction);
    b.num("weak_texture", c.corpus.mix.weak_texture);
    b.num("dark", c.corpus.mix.dark);
    b.num("grazing", c.corpus.mix.grazing);
    b.integer("min_objects", c.corpus.mix.min_objects);
    b.integer("max_objects", c.corpus.mix.max_objects);
  });
  v("tof", [&](Binder& b) {
    b.num("modulation_hz", c.tof.modulation_hz);
    b.num("depth_offset_m", c.tof.depth_offset_m);
  });
  v("noise", [&](Binder& b) {
    b.num("harmonic_amp_mm", c.noise.harmonic_amp_mm);
    b.num("harmonic_period_m", c.noise.harmonic_period_m);
    b.num("linear_coeff", c.noise.linear_coeff);
    b.num("angle_err0_mm", c.noise.angle_err0_mm);
    b.num("angle_theta0_deg", c.noise.angle_theta0_deg);
    b.num("aperture_px", c.noise.aperture_px);
    b.num("edge_dropout", c.noise.edge_dropout);
    b.num("edge_tau", c.noise.edge_tau);
    b.num("base_noise_mm", c.noise.base_noise_mm);
    b.num("dropout_reflectance", c.noise.dropout_reflectance);
    b.num("dropout_angle_deg", c.noise.dropout_angle_deg);
    b.num("confidence_ref_distance_m", c.noise.confidence_ref_distance_m);
    b.u64("seed", c.noise.seed);
  });
  v("stereo", [&](Binder& b) {
    b.integer("d_max", c.stereo.d_max);
    b.integer("window", c.stereo.window);
    b.num("pkr_threshold", c.stereo.pkr_threshold);
    b.num("min_disparity", c.stereo.min_disparity);
  });
  v("features", [&](Binder& b) {
    b.num("gradient_tau", c.features.gradient_tau);
    b.num("depth_variance_cap", c.features.depth_variance_cap);
    b.num("disparity_variance_cap", c.features.disparity_variance_cap);
    b.integer("normal_smoothing_px", c.normal_smoothing_px);
  });
  v("loss", [&](Binder& b) {
    dei::LossWeights& w = c.train.stage1.weights;
    b.num("alpha", w.alpha);
    b.num("beta", w.beta);
    b.num("mu", w.mu);
    b.num("eps_log", w.eps_log);
    b.choice("edge_weighting", c.train.stage1.edge.weighting, kWeightings);
    b.boolean("normalize", c.train.stage1.edge.normalize);
  });
  v("train1", [&](Binder& b) {
    dei::TrainHyper& h = c.train.stage1;
    b.integer("epochs", h.epochs);
    b.integer("batch_tiles", h.batch_tiles);
    b.num("learning_rate", h.learning_rate);
    b.choice("optimizer", h.optimizer, kOptimizers);
    b.num("momentum", h.momentum);
    b.num("init_scale", h.init_scale);
    b.u64("seed", h.seed);
    b.integer("tile_size", c.train.tile_size);
  });
  v("train2", [&](Binder& b) {
    fusion::Stage2Hyper& h = c.train.stage2;
    b.integer("epochs", h.epochs);
    b.num("learning_rate", h.learning_rate);
    b.integer("joint_epochs", h.joint_epochs);
    b.num("joint_learning_rate", h.joint_learning_rate);
    b.num("joint_dei_weight", h.joint_dei_weight);
  });
  v("output", [&](Binder& b) {
    std::string dir = c.output_dir.string();
    b.text("dir", dir);
    c.output_dir = dir;
  });
}

// Shortest text that parses back to the same double.
std::string format_double(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, r.ptr);
}

}  // namespace

void SceneMix::validate() const {
  for (double p : {weak_texture, dark, grazing}) {
    if (!(p >= 0.0 && p <= 1.0)) throw Error("corpus: mix probabilities must be in [0, 1]");
  }
  if (min_objects < 0 || max_objects < min_objects) {
    throw Error("corpus: need 0 <= min_objects <= max_objects");
  }
}

void CorpusConfig::validate() const {
  if (count <= 0) throw Error("empty corpus");
  if (!(image_noise >= 0.0)) throw Error("corpus: image_noise must be >= 0");
  if (!(val_fraction >= 0.0 && val_fraction < 1.0)) {
    throw Error("corpus: val_fraction must be in [0, 1)");
  }
  mix.validate();
}

void PipelineConfig::validate() const {
  camera.validate();
  corpus.validate();
  tof.validate();
  noise.validate();
  if (stereo.window < 3 || stereo.window % 2 == 0) {
    throw Error("stereo: window must be odd and >= 3");
  }
  if (stereo.d_max < 1) throw Error("stereo: d_max must be >= 1");
  if (!(stereo.pkr_threshold >= 1.0)) throw Error("stereo: pkr_threshold must be >= 1");
  if (!(stereo.min_disparity > 0.0)) throw Error("stereo: min_disparity must be > 0");
  if (!(features.gradient_tau > 0.0) || !(features.depth_variance_cap > 0.0) ||
      !(features.disparity_variance_cap > 0.0)) {
    throw Error("features: scales must be > 0");
  }
  if (normal_smoothing_px < 0) throw Error("features: normal_smoothing_px must be >= 0");
  train.validate();
  if (output_dir.empty()) throw Error("output: dir must not be empty");
}

PipelineConfig parse_config(const std::string& text) {
  std::vector<Section> sections;
  std::istringstream in(text);
  std::string raw;
  int line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const auto hash = raw.find('#');
    const std::string line = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') fail(line_no, "malformed section header");
      sections.push_back({trim(line.substr(1, line.size() - 2)), line_no, {}});
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) fail(line_no, "expected 'key = value'");
    if (sections.empty()) fail(line_no, "key outside any section");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) fail(line_no, "empty key");
    auto& entries = sections.back().entries;
    if (entries.count(key)) fail(line_no, "duplicate key '" + key + "'");
    entries[key] = {value, line_no};
  }

  PipelineConfig cfg;
  std::map<std::string, const Section*> singles;
  std::vector<const Section*> primitives;
  const std::set<std::string> known = {"camera", "corpus", "tof",    "noise", "stereo",
                                       "features", "loss", "train1", "train2", "output"};
  for (const Section& s : sections) {
    if (s.name == "primitive") {
      primitives.push_back(&s);
    } else if (known.count(s.name)) {
      if (singles.count(s.name)) fail(s.line, "duplicate section [" + s.name + "]");
      singles[s.name] = &s;
    } else {
      fail(s.line, "unknown section [" + s.name + "]");
    }
  }
  for (const std::string& name : known) {
    if (name != "features" && !singles.count(name)) {
      throw Error("config: missing section [" + name + "]");
    }
  }

  bind_all(cfg, [&](const std::string& name, const std::function<void(Binder&)>& body) {
    const auto it = singles.find(name);
    if (it == singles.end()) return;
    Binder b(*it->second);
    body(b);
    b.finish();
  });
  cfg.train.stage2.weights = cfg.train.stage1.weights;
  cfg.train.stage2.edge = cfg.train.stage1.edge;

  if (!primitives.empty()) {
    scenegen::SceneSpec spec;
    for (const Section* s : primitives) {
      scenegen::PrimitiveSpec p;
      Binder b(*s);
      bind_primitive(b, p);
      b.finish();
      spec.primitives.push_back(p);
    }
    cfg.corpus.spec = spec;
  }
  cfg.validate();
  return cfg;
}

PipelineConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open config " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str());
}

std::string to_text(const PipelineConfig& config) {
  const PipelineConfig& c = config;
  std::string out;
  auto kv = [&](const std::string& k, const std::string& v) { out += k + " = " + v + "\n"; };
  auto num = [&](const std::string& k, double v) { kv(k, format_double(v)); };
  auto integer = [&](const std::string& k, long long v) { kv(k, std::to_string(v)); };
  auto u64 = [&](const std::string& k, std::uint64_t v) { kv(k, std::to_string(v)); };

  out += "[camera]\n";
  num("focal_px", c.camera.focal_px);
  num("cx", c.camera.cx);
  num("cy", c.camera.cy);
  integer("width", c.camera.width);
  integer("height", c.camera.height);
  num("baseline_m", c.camera.baseline_m);
  out += "\n[corpus]\n";
  integer("count", c.corpus.count);
  u64("seed", c.corpus.seed);
  num("image_noise", c.corpus.image_noise);
  num("val_fraction", c.corpus.val_fraction);
  num("weak_texture", c.corpus.mix.weak_texture);
  num("dark", c.corpus.mix.dark);
  num("grazing", c.corpus.mix.grazing);
  integer("min_objects", c.corpus.mix.min_objects);
  integer("max_objects", c.corpus.mix.max_objects);
  out += "\n[tof]\n";
  num("modulation_hz", c.tof.modulation_hz);
  num("depth_offset_m", c.tof.depth_offset_m);
  out += "\n[noise]\n";
  num("harmonic_amp_mm", c.noise.harmonic_amp_mm);
  num("harmonic_period_m", c.noise.harmonic_period_m);
  num("linear_coeff", c.noise.linear_coeff);
  num("angle_err0_mm", c.noise.angle_err0_mm);
  num("angle_theta0_deg", c.noise.angle_theta0_deg);
  num("aperture_px", c.noise.aperture_px);
  num("edge_dropout", c.noise.edge_dropout);
  num("edge_tau", c.noise.edge_tau);
  num("base_noise_mm", c.noise.base_noise_mm);
  num("dropout_reflectance", c.noise.dropout_reflectance);
  num("dropout_angle_deg", c.noise.dropout_angle_deg);
  num("confidence_ref_distance_m", c.noise.confidence_ref_distance_m);
  u64("seed", c.noise.seed);
  out += "\n[stereo]\n";
  integer("d_max", c.stereo.d_max);
  integer("window", c.stereo.window);
  num("pkr_threshold", c.stereo.pkr_threshold);
  num("min_disparity", c.stereo.min_disparity);
  out += "\n[features]\n";
  num("gradient_tau", c.features.gradient_tau);
  num("depth_variance_cap", c.features.depth_variance_cap);
  num("disparity_variance_cap", c.features.disparity_variance_cap);
  integer("normal_smoothing_px", c.normal_smoothing_px);
  out += "\n[loss]\n";
  num("alpha", c.train.stage1.weights.alpha);
  num("beta", c.train.stage1.weights.beta);
  num("mu", c.train.stage1.weights.mu);
  num("eps_log", c.train.stage1.weights.eps_log);
  kv("edge_weighting", name_of(kWeightings, c.train.stage1.edge.weighting));
  kv("normalize", c.train.stage1.edge.normalize ? "true" : "false");
  out += "\n[train1]\n";
  integer("epochs", c.train.stage1.epochs);
  integer("batch_tiles", c.train.stage1.batch_tiles);
  num("learning_rate", c.train.stage1.learning_rate);
  kv("optimizer", name_of(kOptimizers, c.train.stage1.optimizer));
  num("momentum", c.train.stage1.momentum);
  num("init_scale", c.train.stage1.init_scale);
  u64("seed", c.train.stage1.seed);
  integer("tile_size", c.train.tile_size);
  out += "\n[train2]\n";
  integer("epochs", c.train.stage2.epochs);
  num("learning_rate", c.train.stage2.learning_rate);
  integer("joint_epochs", c.train.stage2.joint_epochs);
  num("joint_learning_rate", c.train.stage2.joint_learning_rate);
  num("joint_dei_weight", c.train.stage2.joint_dei_weight);
  out += "\n[output]\n";
  kv("dir", c.output_dir.string());
  if (c.corpus.spec) {
    for (const scenegen::PrimitiveSpec& p : c.corpus.spec->primitives) {
      const scenegen::Primitive& n = p.nominal;
      auto vec = [&](const std::string& k, const Eigen::Vector3d& v) {
        kv(k, format_double(v.x()) + " " + format_double(v.y()) + " " + format_double(v.z()));
      };
      out += "\n[primitive]\n";
      kv("kind", name_of(kKinds, n.kind));
      vec("center", n.pose.center);
      num("yaw_deg", n.pose.yaw_deg);
      num("pitch_deg", n.pose.pitch_deg);
      vec("extent", n.extent);
      kv("texture", name_of(kTextures, n.texture.kind));
      num("texture_scale_m", n.texture.scale_m);
      num("texture_base", n.texture.base);
      num("texture_contrast", n.texture.contrast);
      integer("texture_octaves", n.texture.octaves);
      u64("texture_seed", n.texture.seed);
      num("reflectance", n.reflectance);
      integer("material_id", n.material_id);
      num("position_jitter_m", p.position_jitter_m);
      num("angle_jitter_deg", p.angle_jitter_deg);
      num("reflectance_jitter", p.reflectance_jitter);
    }
  }
  return out;
}

}  // namespace tofstereo::config
