#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include "tofstereo/dei.hpp"
#include "tofstereo/fusion.hpp"
#include "tofstereo/scenegen.hpp"
#include "tofstereo/stereo.hpp"
#include "tofstereo/tofsim.hpp"

namespace tofstereo::config {

/// Probabilities used by the random scene generator.
struct SceneMix {
  double weak_texture = 0.4;  // back wall / object nearly textureless (hostile to stereo)
  double dark = 0.4;          // object below the ToF dropout reflectance
  double grazing = 0.5;       // floor-like surface seen at a small SoT angle
  int min_objects = 1;
  int max_objects = 3;

  void validate() const;
};

struct CorpusConfig {
  int count = 30;
  std::uint64_t seed = 7;
  SceneMix mix;
  double image_noise = 0.01;  // std of additive luminance noise before 8-bit quantization
  double val_fraction = 0.2;  // trailing share of scenes held out from training
  /// Explicit scene template from [primitive] blocks; replaces the random mix.
  std::optional<scenegen::SceneSpec> spec;

  void validate() const;
};

struct PipelineConfig {
  scenegen::CameraModel camera;
  CorpusConfig corpus;
  tofsim::ToFParams tof;
  tofsim::ToFNoiseParams noise;
  stereo::StereoParams stereo;
  dei::FeatureScales features;
  fusion::TwoStageHyper train;
  int normal_smoothing_px = 0;  // box-filter radius applied to ToF depth before normals
  std::filesystem::path output_dir = "out";

  void validate() const;
};

/// Flat text: `[section]` headers, `key = value` lines, `#` comments.
/// Sections: camera, corpus, tof, noise, stereo, features, loss, train1,
/// train2, output, and any number of `[primitive]` blocks. Every section
/// except `features` and `primitive` must be present; keys left out keep
/// their defaults. Unknown sections or keys are errors naming the line.
PipelineConfig parse_config(const std::string& text);
PipelineConfig load_config(const std::filesystem::path& path);

/// Canonical text form of a configuration (all keys, fixed formatting).
std::string to_text(const PipelineConfig& config);

}  // namespace tofstereo::config
