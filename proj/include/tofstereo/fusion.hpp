#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include <Eigen/Core>

#include "tofstereo/classifier.hpp"
#include "tofstereo/losses.hpp"
#include "tofstereo/training.hpp"

namespace tofstereo::fusion {

/// Representative error of the open level-0 bin.
inline constexpr double kMaxExpectedError = 120.0;

/// sum_k p_k * midpoint(k) in millimeters; invalid where p is invalid.
ScalarField expected_error(const dei::DistributionMap& p);

/// ToF where valid, stereo where only stereo is valid, invalid elsewhere.
DepthMap fuse_simple(const DepthMap& tof, const DepthMap& stereo);

/// Source with the smaller expected error; ties and invalid expected errors
/// favour ToF. A missing source falls back as in fuse_simple.
DepthMap fuse_select(const DepthMap& tof, const DepthMap& stereo, const ScalarField& e_tof,
                     const ScalarField& e_stereo);

inline constexpr int kBlendFeatureDim = 4;

/// Logit = w . (E_tof / 120, E_stereo / 120, confidence / 7, pkr / 10) + b.
struct BlendParams {
  std::array<double, kBlendFeatureDim> w{};
  double b = 0.0;

  Eigen::VectorXd flatten() const;  // w..., b
  static BlendParams unflatten(const Eigen::VectorXd& flat);
  void validate() const;

  friend bool operator==(const BlendParams&, const BlendParams&) = default;
};

/// Blend features (kBlendFeatureDim x N). Invalid expected errors map to the
/// level-0 cap. `confidence` holds raw levels 0..7, `pkr` raw peak ratios.
dei::FeatureMap blend_features(const ScalarField& e_tof, const ScalarField& e_stereo,
                               const Map<std::uint8_t>& confidence, const Map<double>& pkr);

/// sigmoid(logit) where both sources are valid, invalid elsewhere.
ScalarField blend_weights(const DepthMap& tof, const DepthMap& stereo,
                          const dei::FeatureMap& features, const BlendParams& params);

/// w * tof + (1 - w) * stereo where both are valid; otherwise the single
/// valid source; invalid where both are missing.
DepthMap fuse_blend(const DepthMap& tof, const DepthMap& stereo,
                    const dei::FeatureMap& features, const BlendParams& params);

/// Mean |R| plus mu times the mean of |R(x+1) - R(x)| and |R(y+1) - R(y)|,
/// R = pred - gt in meters. Averages over the n jointly valid pixels; a
/// difference term exists only where both of its pixels are jointly valid.
/// Throws when no pixel is jointly valid.
double loss_depth(const DepthMap& pred, const DepthMap& gt, double mu);
double loss_depth(const ScalarField& pred, const ScalarField& gt, double mu);

/// Same, plus dL/dpred (sign subgradient, 0 at a kink) on every pixel.
double loss_depth_grad(const ScalarField& pred, const ScalarField& gt, double mu,
                       Map<double>& grad);

/// One frame of fusion training data with frozen blend features.
struct BlendFrame {
  DepthMap tof;
  DepthMap stereo;
  DepthMap gt;
  dei::FeatureMap features;
};

/// Depth loss of the blended output and its gradient w.r.t. BlendParams::flatten.
struct BlendLoss {
  double value = 0.0;
  Eigen::VectorXd grad;
};
BlendLoss blend_loss_and_grad(const BlendFrame& frame, const BlendParams& params, double mu);
double blend_loss(const BlendFrame& frame, const BlendParams& params, double mu);

/// Mean blend weight over all blended pixels of a frame set.
double mean_blend_weight(const std::vector<BlendFrame>& frames, const BlendParams& params);

/// Aligned full-frame sample: both depth sources, ground truth and everything
/// the two classifiers and the blend consume.
struct FusionSample {
  DepthMap tof;
  DepthMap stereo;
  DepthMap gt;
  Map<std::uint8_t> confidence;  // raw ToF confidence levels
  Map<double> pkr;               // raw stereo peak ratio
  dei::DEITile tof_tile;         // ToF features, labels, normalized gradient, SoT
  dei::DEITile stereo_tile;      // stereo features and labels
};

/// Blend frame for `sample` with expected errors from the given classifiers.
BlendFrame make_blend_frame(const FusionSample& sample, const dei::ClassifierParams& tof,
                            const dei::ClassifierParams& stereo);

struct Stage2Hyper {
  int epochs = 150;
  double learning_rate = 0.05;  // Adam step for the blend
  int joint_epochs = 0;         // optional fine-tune of every parameter
  double joint_learning_rate = 1e-3;
  double joint_dei_weight = 0.1;  // weight of the DEI supervision in the fine-tune
  dei::LossWeights weights;       // mu for the depth loss; alpha, beta for the ToF DEI term
  dei::EdgeLossOptions edge;

  void validate() const;
};

/// Full-batch Adam on the mean per-frame depth loss, starting from zero
/// parameters. Throws on an empty set or a non-finite loss.
BlendParams train_blend(const std::vector<BlendFrame>& frames, const Stage2Hyper& hyper,
                        std::vector<double>* history);

/// Stage 2: classifiers frozen, blend trained under the depth loss.
BlendParams train_fusion_stage2(const std::vector<FusionSample>& data,
                                const dei::ClassifierParams& tof,
                                const dei::ClassifierParams& stereo, const Stage2Hyper& hyper,
                                std::vector<double>* history);

/// Fine-tune objective on one sample: depth loss of the blended output plus
/// joint_dei_weight * (ToF DEI loss + stereo cross-entropy), with the
/// depth-loss gradient flowing through the expected errors into both classifiers.
struct JointLoss {
  double value = 0.0;
  Eigen::VectorXd tof_grad;
  Eigen::VectorXd stereo_grad;
  Eigen::VectorXd blend_grad;
};
JointLoss joint_loss_and_grad(const FusionSample& sample, const dei::ClassifierParams& tof,
                              const dei::ClassifierParams& stereo, const BlendParams& blend,
                              const Stage2Hyper& hyper);
double joint_loss(const FusionSample& sample, const dei::ClassifierParams& tof,
                  const dei::ClassifierParams& stereo, const BlendParams& blend,
                  const Stage2Hyper& hyper);

struct TwoStageHyper {
  dei::TrainHyper stage1;
  Stage2Hyper stage2;
  int tile_size = 40;

  void validate() const;
};

struct TwoStageResult {
  dei::ClassifierParams tof;
  dei::ClassifierParams stereo;
  BlendParams blend;
  std::vector<dei::EpochRecord> tof_history;
  std::vector<dei::EpochRecord> stereo_history;
  std::vector<double> blend_history;
  std::vector<double> joint_history;
};

/// Stage 1 on tiles cut from the samples, stage 2 on full frames, then the
/// optional joint fine-tune. Deterministic for a given seed.
TwoStageResult train_two_stage(const std::vector<FusionSample>& train,
                               const std::vector<FusionSample>& val, const TwoStageHyper& hyper);

/// Cuts a full-frame tile into non-overlapping tiles of at most `size` pixels
/// per side, row-major.
std::vector<dei::DEITile> split_tiles(const dei::DEITile& frame, int size);

}  // namespace tofstereo::fusion
