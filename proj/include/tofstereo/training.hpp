#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Core>

#include "tofstereo/classifier.hpp"
#include "tofstereo/losses.hpp"

namespace tofstereo::dei {

/// One spatially contiguous training patch. `gradient` is the normalized
/// gradient fed to the edge-aware loss; `gradient` and `sot` are only used by
/// the ToF branch.
struct DEITile {
  FeatureMap features;
  LabelMap labels;
  geometry::GradientMap gradient;
  geometry::AngleMap sot;
};

enum class LossKind { Tdei, Sdei };

struct DEIDataset {
  std::vector<DEITile> tof;
  std::vector<DEITile> stereo;
};

enum class Optimizer {
  Adam,  // fixed learning rate, bias-corrected moments
  Sgd    // plain step x -= lr * g, plus optional heavy-ball momentum
};

struct TrainHyper {
  int epochs = 25;
  int batch_tiles = 16;
  double learning_rate = 0.05;
  Optimizer optimizer = Optimizer::Adam;
  double momentum = 0.0;  // Sgd only
  double init_scale = 1.0;
  std::uint64_t seed = 1;
  LossWeights weights;
  EdgeLossOptions edge;

  void validate() const;
};

struct EpochRecord {
  int epoch = 0;
  double loss = 0.0;  // mean tile loss seen during the epoch
  double top1 = 0.0;  // validation accuracy (training set when no validation set)
  double top3 = 0.0;
};

struct LossAndGrad {
  double value = 0.0;
  Eigen::VectorXd grad;  // flattened like ClassifierParams::flatten
};

/// Loss of one tile under `kind` and its analytic gradient w.r.t. every
/// trainable classifier entry.
LossAndGrad backward(LossKind kind, const ClassifierParams& params, const DEITile& tile,
                     const LossWeights& weights, const EdgeLossOptions& edge);

/// Loss value only.
double evaluate_loss(LossKind kind, const ClassifierParams& params, const DEITile& tile,
                     const LossWeights& weights, const EdgeLossOptions& edge);

/// Seeded random weights plus an input standardization fitted to the
/// training tiles. Training starts from exactly this point.
ClassifierParams initial_classifier(const std::vector<DEITile>& train, std::uint64_t seed,
                                    double init_scale);

/// Minibatch training (Adam or SGD, fixed learning rate) with seeded shuffling. Throws on an empty set or a non-finite loss.
ClassifierParams train_classifier(const std::vector<DEITile>& train,
                                  const std::vector<DEITile>& val, LossKind kind,
                                  const TrainHyper& hyper, std::vector<EpochRecord>* history);

struct Stage1Result {
  ClassifierParams tof;
  ClassifierParams stereo;
  std::vector<EpochRecord> tof_history;
  std::vector<EpochRecord> stereo_history;
};

/// Trains the ToF branch under the TDEI loss and the stereo branch under
/// cross-entropy. Fusion parameters are not touched.
Stage1Result train_dei_stage1(const DEIDataset& train, const DEIDataset& val,
                              const TrainHyper& hyper);

/// Top-k accuracy over a tile set (valid label pixels pooled).
double tiles_accuracy(const ClassifierParams& params, const std::vector<DEITile>& tiles, int k);

}  // namespace tofstereo::dei
