#pragma once

#include <cstdint>
#include <functional>

#include <Eigen/Core>

#include "tofstereo/dei.hpp"

namespace tofstereo::dei {

inline constexpr int kHiddenUnits = 16;

/// Two-layer perceptron: standardize -> tanh(W1 x + b1) -> softmax(W2 h + b2).
/// The input standardization (x - mean) * scale is fixed at initialization
/// and is not trained.
struct ClassifierParams {
  Eigen::VectorXd input_mean;
  Eigen::VectorXd input_scale;
  Eigen::MatrixXd w1;  // hidden x input
  Eigen::VectorXd b1;
  Eigen::MatrixXd w2;  // levels x hidden
  Eigen::VectorXd b2;

  int input_dim() const { return static_cast<int>(w1.cols()); }
  int hidden_dim() const { return static_cast<int>(w1.rows()); }

  /// All weights zero, identity standardization.
  static ClassifierParams zeros(int input_dim, int hidden = kHiddenUnits);

  /// Seeded Gaussian weights (std `scale` / sqrt(fan_in)), zero biases.
  static ClassifierParams random(int input_dim, std::uint64_t seed, double scale = 1.0,
                                 int hidden = kHiddenUnits);

  /// Number of trainable entries (W1, b1, W2, b2).
  Eigen::Index trainable_size() const;
  /// Trainable entries in the order W1 (row-major), b1, W2 (row-major), b2.
  Eigen::VectorXd flatten() const;
  void unflatten(const Eigen::VectorXd& flat);

  /// Throws when shapes disagree or entries are non-finite.
  void validate() const;

  friend bool operator==(const ClassifierParams& a, const ClassifierParams& b);
};

/// Intermediate activations retained for backpropagation.
struct ForwardCache {
  Eigen::MatrixXd input;   // standardized, dim x N
  Eigen::MatrixXd hidden;  // tanh activations, hidden x N
  Eigen::MatrixXd prob;    // softmax output, levels x N
};

/// Column-wise softmax of a logits matrix (levels x N).
Eigen::MatrixXd softmax(const Eigen::MatrixXd& logits);

/// dL/dlogits from dL/dprob for a softmax layer.
Eigen::MatrixXd softmax_backward(const Eigen::MatrixXd& prob, const Eigen::MatrixXd& d_prob);

/// Raw logits (levels x N) of a feature matrix.
Eigen::MatrixXd forward_logits(const ClassifierParams& params, const Eigen::MatrixXd& features);

ForwardCache forward_cached(const ClassifierParams& params, const Eigen::MatrixXd& features);

/// Per-pixel distribution over DEI levels; every pixel valid.
/// Throws when the feature dimension does not match.
DistributionMap forward(const ClassifierParams& params, const FeatureMap& features);

/// Packs a DistributionMap into a levels x N matrix (invalid pixels as zeros).
Eigen::MatrixXd to_matrix(const DistributionMap& p);
DistributionMap from_matrix(const Eigen::MatrixXd& prob, int width, int height);

/// Gradients of every trainable entry, flattened like ClassifierParams::flatten.
Eigen::VectorXd backward_from_logits(const ClassifierParams& params, const ForwardCache& cache,
                                     const Eigen::MatrixXd& d_logits);

/// Central differences (f(x + h) - f(x - h)) / 2h over every trainable entry.
Eigen::VectorXd finite_diff_grad(const std::function<double(const ClassifierParams&)>& loss_fn,
                                 const ClassifierParams& params, double step = 1e-6);

}  // namespace tofstereo::dei
