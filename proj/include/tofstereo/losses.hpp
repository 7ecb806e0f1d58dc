#pragma once

#include <Eigen/Core>

#include "tofstereo/dei.hpp"

namespace tofstereo::dei {

inline constexpr double kProbFloor = 1e-12;

struct LossWeights {
  double alpha = 1.0;    // edge-aware term
  double beta = 0.1;     // local-consistency term
  double mu = 0.1;       // depth-loss smoothness
  double eps_log = 1e-6; // floor of the local-consistency log argument

  void validate() const;
};

struct EdgeLossOptions {
  bool normalize = true;  // divide by the valid-pixel count
  EdgeWeighting weighting = EdgeWeighting::Decay;
};

/// Loss value plus dL/dprob (levels x N). Pixels outside the loss have a zero
/// gradient column.
struct LossResult {
  double value = 0.0;
  Eigen::MatrixXd d_prob;
};

// Matrix forms: `prob` is levels x (width*height), laid out like the label map.

/// -sum_i w_i log p_{i, y_i} with w_i = exp(-g_i) (or exp(+g_i)),
/// log clamped at kProbFloor; divided by the pixel count when normalized.
LossResult edge_aware_loss(const Eigen::MatrixXd& prob, const LabelMap& labels,
                           const geometry::GradientMap& gradient, const EdgeLossOptions& options);

/// Mean over pixels i with >= 3 valid neighbours of
/// log(max(|sP_i - sN_i|, eps)) * (sP_i - sGT_i)^2, where sP, sGT and sN are
/// 8-neighbour population variances of the soft expected level E[p]/7, the
/// label y/7 and sot/90 respectively.
LossResult local_consistency_loss(const Eigen::MatrixXd& prob, const LabelMap& labels,
                                  const geometry::AngleMap& sot, const LossWeights& weights);

/// alpha * edge-aware + beta * local consistency.
LossResult tdei_loss(const Eigen::MatrixXd& prob, const LabelMap& labels,
                     const geometry::GradientMap& gradient, const geometry::AngleMap& sot,
                     const LossWeights& weights, const EdgeLossOptions& options);

/// Mean cross-entropy -log p_{i, y_i} over valid pixels, log clamped at kProbFloor.
LossResult sdei_loss(const Eigen::MatrixXd& prob, const LabelMap& labels);

// Map forms.

double loss_edge_aware(const DistributionMap& p, const LabelMap& labels,
                       const geometry::GradientMap& gradient, bool normalize = true,
                       EdgeWeighting weighting = EdgeWeighting::Decay);
double loss_local_consistency(const DistributionMap& p, const LabelMap& labels,
                              const geometry::AngleMap& sot, const LossWeights& weights);
double loss_tdei(const DistributionMap& p, const LabelMap& labels,
                 const geometry::GradientMap& gradient, const geometry::AngleMap& sot,
                 const LossWeights& weights, bool normalize = true);
double loss_sdei(const DistributionMap& p, const LabelMap& labels);

}  // namespace tofstereo::dei
