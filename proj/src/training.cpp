#include "tofstereo/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <string>

#include "tofstereo/adam.hpp"
#include "tofstereo/eval.hpp"

namespace tofstereo::dei {

namespace {

LossResult tile_loss(LossKind kind, const Eigen::MatrixXd& prob, const DEITile& tile,
                     const LossWeights& weights, const EdgeLossOptions& edge) {
  if (kind == LossKind::Tdei) {
    return tdei_loss(prob, tile.labels, tile.gradient, tile.sot, weights, edge);
  }
  return sdei_loss(prob, tile.labels);
}

void check_tile(const DEITile& tile) {
  if (tile.features.values.cols() != static_cast<Eigen::Index>(tile.labels.size()) ||
      tile.features.width != tile.labels.width() || tile.features.height != tile.labels.height()) {
    throw Error("training: tile features do not match its labels");
  }
}

}  // namespace

void TrainHyper::validate() const {
  if (epochs < 0) throw Error("training: epochs must be >= 0");
  if (batch_tiles < 1) throw Error("training: batch_tiles must be >= 1");
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
    throw Error("training: learning_rate must be finite and >= 0");
  }
  if (!(init_scale >= 0.0)) throw Error("training: init_scale must be >= 0");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw Error("training: momentum must be in [0, 1)");
  weights.validate();
}

LossAndGrad backward(LossKind kind, const ClassifierParams& params, const DEITile& tile,
                     const LossWeights& weights, const EdgeLossOptions& edge) {
  check_tile(tile);
  const ForwardCache cache = forward_cached(params, tile.features.values);
  const LossResult loss = tile_loss(kind, cache.prob, tile, weights, edge);
  const Eigen::MatrixXd d_logits = softmax_backward(cache.prob, loss.d_prob);
  return {loss.value, backward_from_logits(params, cache, d_logits)};
}

double evaluate_loss(LossKind kind, const ClassifierParams& params, const DEITile& tile,
                     const LossWeights& weights, const EdgeLossOptions& edge) {
  check_tile(tile);
  const Eigen::MatrixXd prob = softmax(forward_logits(params, tile.features.values));
  return tile_loss(kind, prob, tile, weights, edge).value;
}

ClassifierParams initial_classifier(const std::vector<DEITile>& train, std::uint64_t seed,
                                    double init_scale) {
  if (train.empty()) throw Error("training: empty training set");
  const int dim = train.front().features.dim();
  ClassifierParams params = ClassifierParams::random(dim, seed, init_scale);

  Eigen::VectorXd sum = Eigen::VectorXd::Zero(dim);
  Eigen::VectorXd sq = Eigen::VectorXd::Zero(dim);
  double n = 0.0;
  for (const DEITile& tile : train) {
    check_tile(tile);
    if (tile.features.dim() != dim) throw Error("training: inconsistent feature dimension");
    for (std::size_t i = 0; i < tile.labels.size(); ++i) {
      if (!tile.labels.is_valid(i)) continue;
      const auto col = tile.features.values.col(static_cast<Eigen::Index>(i));
      sum += col;
      n += 1.0;
    }
  }
  if (n == 0.0) throw Error("training: no labelled pixels");
  const Eigen::VectorXd mean = sum / n;
  for (const DEITile& tile : train) {
    for (std::size_t i = 0; i < tile.labels.size(); ++i) {
      if (!tile.labels.is_valid(i)) continue;
      const Eigen::VectorXd d = tile.features.values.col(static_cast<Eigen::Index>(i)) - mean;
      sq += d.cwiseProduct(d);
    }
  }
  params.input_mean = mean;
  for (int k = 0; k < dim; ++k) {
    const double sd = std::sqrt(sq[k] / n);
    params.input_scale[k] = sd > 1e-6 ? 1.0 / sd : 1.0;
  }
  return params;
}

double tiles_accuracy(const ClassifierParams& params, const std::vector<DEITile>& tiles, int k) {
  std::size_t hits = 0;
  std::size_t total = 0;
  for (const DEITile& tile : tiles) {
    const auto [h, t] = eval::dei_hits(forward(params, tile.features), tile.labels, k);
    hits += h;
    total += t;
  }
  return total == 0 ? 0.0 : static_cast<double>(hits) / static_cast<double>(total);
}

ClassifierParams train_classifier(const std::vector<DEITile>& train,
                                  const std::vector<DEITile>& val, LossKind kind,
                                  const TrainHyper& hyper, std::vector<EpochRecord>* history) {
  hyper.validate();
  ClassifierParams params = initial_classifier(train, hyper.seed, hyper.init_scale);
  const std::vector<DEITile>& monitor = val.empty() ? train : val;

  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 gen(hyper.seed ^ 0x5eedf00dULL);
  Adam adam(params.trainable_size(), hyper.learning_rate);
  Eigen::VectorXd velocity = Eigen::VectorXd::Zero(params.trainable_size());

  for (int epoch = 1; epoch <= hyper.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), gen);
    double loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += std::size_t(hyper.batch_tiles)) {
      const std::size_t end = std::min(order.size(), start + std::size_t(hyper.batch_tiles));
      Eigen::VectorXd grad = Eigen::VectorXd::Zero(params.trainable_size());
      for (std::size_t b = start; b < end; ++b) {
        const LossAndGrad lg = backward(kind, params, train[order[b]], hyper.weights, hyper.edge);
        if (!std::isfinite(lg.value) || !lg.grad.allFinite()) {
          throw Error("training: non-finite loss at epoch " + std::to_string(epoch));
        }
        grad += lg.grad;
        loss += lg.value;
      }
      grad /= static_cast<double>(end - start);
      Eigen::VectorXd x = params.flatten();
      if (hyper.optimizer == Optimizer::Adam) {
        adam.step(x, grad);
      } else {
        velocity = hyper.momentum * velocity - hyper.learning_rate * grad;
        x += velocity;
      }
      params.unflatten(x);
    }

    loss /= static_cast<double>(train.size());
    if (history != nullptr) {
      history->push_back({epoch, loss, tiles_accuracy(params, monitor, 1),
                          tiles_accuracy(params, monitor, 3)});
    }
  }
  return params;
}

Stage1Result train_dei_stage1(const DEIDataset& train, const DEIDataset& val,
                              const TrainHyper& hyper) {
  Stage1Result r;
  r.tof = train_classifier(train.tof, val.tof, LossKind::Tdei, hyper, &r.tof_history);
  TrainHyper stereo_hyper = hyper;
  stereo_hyper.seed = hyper.seed + 1;
  r.stereo = train_classifier(train.stereo, val.stereo, LossKind::Sdei, stereo_hyper,
                              &r.stereo_history);
  return r;
}

}  // namespace tofstereo::dei
