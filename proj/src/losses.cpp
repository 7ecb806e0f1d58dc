#include "tofstereo/losses.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "tofstereo/classifier.hpp"

namespace tofstereo::dei {

namespace {

void check_prob_shape(const Eigen::MatrixXd& prob, const LabelMap& labels, const char* what) {
  if (prob.rows() != kLevels || prob.cols() != static_cast<Eigen::Index>(labels.size())) {
    throw Error(std::string(what) + ": distribution/label shape mismatch");
  }
}

double pixel_weight(double g, EdgeWeighting weighting) {
  return weighting == EdgeWeighting::Decay ? std::exp(-g) : std::exp(g);
}

// Labels restricted to pixels where the distribution map is valid.
LabelMap restrict_labels(const DistributionMap& p, const LabelMap& labels) {
  require_same_shape(p, labels, "loss");
  LabelMap out = labels;
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (!p.is_valid(i)) out.invalidate(i);
  }
  return out;
}

}  // namespace

void LossWeights::validate() const {
  if (!(alpha >= 0.0) || !(beta >= 0.0) || !(mu >= 0.0)) {
    throw Error("loss weights: alpha, beta, mu must be >= 0");
  }
  if (!(eps_log > 0.0)) throw Error("loss weights: eps_log must be > 0");
}

LossResult edge_aware_loss(const Eigen::MatrixXd& prob, const LabelMap& labels,
                           const geometry::GradientMap& gradient, const EdgeLossOptions& options) {
  check_prob_shape(prob, labels, "edge_aware_loss");
  require_same_shape(labels, gradient, "edge_aware_loss");
  LossResult r{0.0, Eigen::MatrixXd::Zero(prob.rows(), prob.cols())};
  std::size_t n = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (!labels.is_valid(i)) continue;
    ++n;
    const auto col = static_cast<Eigen::Index>(i);
    const int y = labels[i];
    const double w = pixel_weight(gradient[i], options.weighting);
    const double p = prob(y, col);
    r.value -= w * std::log(std::max(p, kProbFloor));
    if (p > kProbFloor) r.d_prob(y, col) = -w / p;
  }
  if (options.normalize && n > 0) {
    r.value /= static_cast<double>(n);
    r.d_prob /= static_cast<double>(n);
  }
  return r;
}

LossResult local_consistency_loss(const Eigen::MatrixXd& prob, const LabelMap& labels,
                                  const geometry::AngleMap& sot, const LossWeights& weights) {
  check_prob_shape(prob, labels, "local_consistency_loss");
  require_same_shape(labels, sot, "local_consistency_loss");
  weights.validate();
  const int w = labels.width();
  const int h = labels.height();
  const Eigen::Index n_pix = prob.cols();

  Eigen::VectorXd level_index(kLevels);
  for (int k = 0; k < kLevels; ++k) level_index[k] = k / 7.0;
  const Eigen::VectorXd expected = prob.transpose() * level_index;  // E[p] / 7 per pixel

  auto in_mask = [&](int x, int y) {
    return labels.contains(x, y) && labels.is_valid(x, y) && sot.is_valid(x, y);
  };

  struct Term {
    int x, y, n;
    double mean_p;
    double dl_dsp;  // dL/dsigma_P before the 1/count factor
  };
  std::vector<Term> terms;
  double total = 0.0;

  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (!in_mask(x, y)) continue;
      double sp = 0.0, sg = 0.0, sn = 0.0;
      int n = 0;
      for (int dy = -1; dy <= 1; ++dy) {
        for (int dx = -1; dx <= 1; ++dx) {
          if ((dx == 0 && dy == 0) || !in_mask(x + dx, y + dy)) continue;
          const std::size_t j = labels.values().index(x + dx, y + dy);
          sp += expected[static_cast<Eigen::Index>(j)];
          sg += labels[j] / 7.0;
          sn += sot[j] / 90.0;
          ++n;
        }
      }
      if (n < 3) continue;
      // Second pass for numerically stable variances.
      const double mp = sp / n, mg = sg / n, mn = sn / n;
      double vp = 0.0, vg = 0.0, vn = 0.0;
      for (int dy = -1; dy <= 1; ++dy) {
        for (int dx = -1; dx <= 1; ++dx) {
          if ((dx == 0 && dy == 0) || !in_mask(x + dx, y + dy)) continue;
          const std::size_t j = labels.values().index(x + dx, y + dy);
          const double e = expected[static_cast<Eigen::Index>(j)] - mp;
          const double g = labels[j] / 7.0 - mg;
          const double a = sot[j] / 90.0 - mn;
          vp += e * e;
          vg += g * g;
          vn += a * a;
        }
      }
      vp /= n;
      vg /= n;
      vn /= n;
      const double gap = vp - vn;
      const double arg = std::abs(gap);
      const double log_term = std::log(std::max(arg, weights.eps_log));
      const double diff = vp - vg;
      total += log_term * diff * diff;
      const double dlog = arg > weights.eps_log ? (gap > 0.0 ? 1.0 : -1.0) / arg : 0.0;
      terms.push_back({x, y, n, mp, dlog * diff * diff + log_term * 2.0 * diff});
    }
  }

  LossResult r{0.0, Eigen::MatrixXd::Zero(prob.rows(), n_pix)};
  if (terms.empty()) return r;
  const double inv_count = 1.0 / static_cast<double>(terms.size());
  r.value = total * inv_count;

  Eigen::VectorXd d_expected = Eigen::VectorXd::Zero(n_pix);
  for (const Term& t : terms) {
    const double scale = t.dl_dsp * inv_count * 2.0 / t.n;
    for (int dy = -1; dy <= 1; ++dy) {
      for (int dx = -1; dx <= 1; ++dx) {
        if ((dx == 0 && dy == 0) || !in_mask(t.x + dx, t.y + dy)) continue;
        const auto j = static_cast<Eigen::Index>(labels.values().index(t.x + dx, t.y + dy));
        d_expected[j] += scale * (expected[j] - t.mean_p);
      }
    }
  }
  r.d_prob = level_index * d_expected.transpose();
  return r;
}

LossResult tdei_loss(const Eigen::MatrixXd& prob, const LabelMap& labels,
                     const geometry::GradientMap& gradient, const geometry::AngleMap& sot,
                     const LossWeights& weights, const EdgeLossOptions& options) {
  weights.validate();
  LossResult r{0.0, Eigen::MatrixXd::Zero(prob.rows(), prob.cols())};
  if (weights.alpha != 0.0) {
    const LossResult edge = edge_aware_loss(prob, labels, gradient, options);
    r.value += weights.alpha * edge.value;
    r.d_prob += weights.alpha * edge.d_prob;
  }
  if (weights.beta != 0.0) {
    const LossResult lc = local_consistency_loss(prob, labels, sot, weights);
    r.value += weights.beta * lc.value;
    r.d_prob += weights.beta * lc.d_prob;
  }
  return r;
}

LossResult sdei_loss(const Eigen::MatrixXd& prob, const LabelMap& labels) {
  check_prob_shape(prob, labels, "sdei_loss");
  geometry::GradientMap flat(labels.width(), labels.height(), 0.0);
  return edge_aware_loss(prob, labels, flat, EdgeLossOptions{true, EdgeWeighting::Decay});
}

double loss_edge_aware(const DistributionMap& p, const LabelMap& labels,
                       const geometry::GradientMap& gradient, bool normalize,
                       EdgeWeighting weighting) {
  return edge_aware_loss(to_matrix(p), restrict_labels(p, labels), gradient,
                         EdgeLossOptions{normalize, weighting})
      .value;
}

double loss_local_consistency(const DistributionMap& p, const LabelMap& labels,
                              const geometry::AngleMap& sot, const LossWeights& weights) {
  return local_consistency_loss(to_matrix(p), restrict_labels(p, labels), sot, weights).value;
}

double loss_tdei(const DistributionMap& p, const LabelMap& labels,
                 const geometry::GradientMap& gradient, const geometry::AngleMap& sot,
                 const LossWeights& weights, bool normalize) {
  return tdei_loss(to_matrix(p), restrict_labels(p, labels), gradient, sot, weights,
                   EdgeLossOptions{normalize, EdgeWeighting::Decay})
      .value;
}

double loss_sdei(const DistributionMap& p, const LabelMap& labels) {
  return sdei_loss(to_matrix(p), restrict_labels(p, labels)).value;
}

}  // namespace tofstereo::dei
