#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "tofstereo/config.hpp"
#include "tofstereo/eval.hpp"
#include "tofstereo/fusion.hpp"
#include "tofstereo/geometry.hpp"
#include "tofstereo/scenegen.hpp"
#include "tofstereo/stereo.hpp"
#include "tofstereo/tofsim.hpp"

namespace tofstereo::pipeline {

/// Scene template drawn from the mix: back wall, optional grazing floor and
/// 1-3 objects. Deterministic in `seed`.
scenegen::SceneSpec random_scene_spec(const config::SceneMix& mix, std::uint64_t seed);

/// Seed of scene `index` in a corpus.
std::uint64_t scene_seed(std::uint64_t corpus_seed, int index);

struct SimulatedScene {
  DepthMap gt;
  Image left;
  Image right;
  Map<float> reflectance;
  tofsim::ToFFrame tof;
  geometry::NormalMap normals;  // estimated from the ToF depth
  geometry::AngleMap sot;       // from `normals`
};

/// Renders scene `index`: ground truth, 8-bit-quantized stereo pair and the
/// ToF measurement (driven by analytic SoT angles), plus the observable
/// normal and SoT maps derived from the ToF depth.
SimulatedScene simulate_scene(const config::PipelineConfig& cfg, int index);

/// Normals and SoT of a ToF depth map, optionally box-smoothed first.
geometry::NormalMap tof_normals(const DepthMap& tof, const scenegen::CameraModel& cam,
                                int smoothing_px);
geometry::AngleMap sot_from_normals(const geometry::NormalMap& normals);

struct StereoResult {
  stereo::DisparityMap disparity;
  DepthMap depth;
  stereo::StereoFeatureMap features;
};
StereoResult run_stereo(const Image& left, const Image& right, const config::PipelineConfig& cfg);

/// Raw peak ratios of a stereo feature map.
Map<double> pkr_map(const stereo::StereoFeatureMap& features);

/// Everything training and fusion need from one scene.
fusion::FusionSample make_sample(const config::PipelineConfig& cfg, const DepthMap& gt,
                                 const tofsim::ToFFrame& tof, const geometry::AngleMap& sot,
                                 const DepthMap& stereo_depth,
                                 const stereo::StereoFeatureMap& stereo_features);

/// Fused outputs of one scene under trained parameters.
struct FusedScene {
  DepthMap simple;
  DepthMap select;
  DepthMap blend;
  ScalarField e_tof;
  ScalarField e_stereo;
};
FusedScene fuse_scene(const fusion::FusionSample& sample, const dei::ClassifierParams& tof,
                      const dei::ClassifierParams& stereo, const fusion::BlendParams& blend);

/// Indices of the training and held-out scenes (held-out = trailing share).
std::pair<std::vector<int>, std::vector<int>> split_indices(int count, double val_fraction);

std::string scene_name(int index);

// On-disk stages; each throws Error on failure. Everything lives under `out`:
// scene_%04d/ directories, params/, report.csv and summary.csv.

void cmd_simulate(const config::PipelineConfig& cfg, const std::filesystem::path& out);
void cmd_stereo(const config::PipelineConfig& cfg, const std::filesystem::path& out);
void cmd_train(const config::PipelineConfig& cfg, const std::filesystem::path& out);
void cmd_fuse(const config::PipelineConfig& cfg, const std::filesystem::path& out);
void cmd_eval(const config::PipelineConfig& cfg, const std::filesystem::path& out);

}  // namespace tofstereo::pipeline
