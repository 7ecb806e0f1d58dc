#include "tofstereo/classifier.hpp"

#include <cmath>
#include <random>
#include <string>

namespace tofstereo::dei {

ClassifierParams ClassifierParams::zeros(int input_dim, int hidden) {
  if (input_dim <= 0 || hidden <= 0) throw Error("classifier: dimensions must be positive");
  ClassifierParams p;
  p.input_mean = Eigen::VectorXd::Zero(input_dim);
  p.input_scale = Eigen::VectorXd::Ones(input_dim);
  p.w1 = Eigen::MatrixXd::Zero(hidden, input_dim);
  p.b1 = Eigen::VectorXd::Zero(hidden);
  p.w2 = Eigen::MatrixXd::Zero(kLevels, hidden);
  p.b2 = Eigen::VectorXd::Zero(kLevels);
  return p;
}

ClassifierParams ClassifierParams::random(int input_dim, std::uint64_t seed, double scale,
                                          int hidden) {
  ClassifierParams p = zeros(input_dim, hidden);
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  const double s1 = scale / std::sqrt(double(input_dim));
  const double s2 = scale / std::sqrt(double(hidden));
  for (Eigen::Index r = 0; r < p.w1.rows(); ++r)
    for (Eigen::Index c = 0; c < p.w1.cols(); ++c) p.w1(r, c) = s1 * normal(gen);
  for (Eigen::Index r = 0; r < p.w2.rows(); ++r)
    for (Eigen::Index c = 0; c < p.w2.cols(); ++c) p.w2(r, c) = s2 * normal(gen);
  return p;
}

Eigen::Index ClassifierParams::trainable_size() const {
  return w1.size() + b1.size() + w2.size() + b2.size();
}

Eigen::VectorXd ClassifierParams::flatten() const {
  Eigen::VectorXd flat(trainable_size());
  Eigen::Index k = 0;
  for (Eigen::Index r = 0; r < w1.rows(); ++r)
    for (Eigen::Index c = 0; c < w1.cols(); ++c) flat[k++] = w1(r, c);
  for (Eigen::Index r = 0; r < b1.size(); ++r) flat[k++] = b1[r];
  for (Eigen::Index r = 0; r < w2.rows(); ++r)
    for (Eigen::Index c = 0; c < w2.cols(); ++c) flat[k++] = w2(r, c);
  for (Eigen::Index r = 0; r < b2.size(); ++r) flat[k++] = b2[r];
  return flat;
}

void ClassifierParams::unflatten(const Eigen::VectorXd& flat) {
  if (flat.size() != trainable_size()) throw Error("classifier: flat parameter size mismatch");
  Eigen::Index k = 0;
  for (Eigen::Index r = 0; r < w1.rows(); ++r)
    for (Eigen::Index c = 0; c < w1.cols(); ++c) w1(r, c) = flat[k++];
  for (Eigen::Index r = 0; r < b1.size(); ++r) b1[r] = flat[k++];
  for (Eigen::Index r = 0; r < w2.rows(); ++r)
    for (Eigen::Index c = 0; c < w2.cols(); ++c) w2(r, c) = flat[k++];
  for (Eigen::Index r = 0; r < b2.size(); ++r) b2[r] = flat[k++];
}

void ClassifierParams::validate() const {
  const Eigen::Index in = w1.cols();
  const Eigen::Index hid = w1.rows();
  if (in <= 0 || hid <= 0) throw Error("classifier: empty parameters");
  if (input_mean.size() != in || input_scale.size() != in || b1.size() != hid ||
      w2.rows() != kLevels || w2.cols() != hid || b2.size() != kLevels) {
    throw Error("classifier: inconsistent parameter shapes");
  }
  if (!flatten().allFinite() || !input_mean.allFinite() || !input_scale.allFinite()) {
    throw Error("classifier: non-finite parameters");
  }
}

bool operator==(const ClassifierParams& a, const ClassifierParams& b) {
  auto same = [](const auto& x, const auto& y) {
    return x.rows() == y.rows() && x.cols() == y.cols() && x == y;
  };
  return same(a.input_mean, b.input_mean) && same(a.input_scale, b.input_scale) &&
         same(a.w1, b.w1) && same(a.b1, b.b1) && same(a.w2, b.w2) && same(a.b2, b.b2);
}

Eigen::MatrixXd softmax(const Eigen::MatrixXd& logits) {
  Eigen::MatrixXd p(logits.rows(), logits.cols());
  for (Eigen::Index c = 0; c < logits.cols(); ++c) {
    const double m = logits.col(c).maxCoeff();
    p.col(c) = (logits.col(c).array() - m).exp().matrix();
    p.col(c) /= p.col(c).sum();
  }
  return p;
}

Eigen::MatrixXd softmax_backward(const Eigen::MatrixXd& prob, const Eigen::MatrixXd& d_prob) {
  const Eigen::RowVectorXd dot = (prob.array() * d_prob.array()).colwise().sum();
  return (prob.array() * (d_prob.rowwise() - dot).array()).matrix();
}

namespace {

Eigen::MatrixXd standardize(const ClassifierParams& params, const Eigen::MatrixXd& features) {
  if (features.rows() != params.input_dim()) {
    throw Error("classifier: feature dimension " + std::to_string(features.rows()) +
                " does not match parameters (" + std::to_string(params.input_dim()) + ")");
  }
  return ((features.colwise() - params.input_mean).array().colwise() *
          params.input_scale.array())
      .matrix();
}

}  // namespace

Eigen::MatrixXd forward_logits(const ClassifierParams& params, const Eigen::MatrixXd& features) {
  const Eigen::MatrixXd x = standardize(params, features);
  const Eigen::MatrixXd h = ((params.w1 * x).colwise() + params.b1).array().tanh().matrix();
  return (params.w2 * h).colwise() + params.b2;
}

ForwardCache forward_cached(const ClassifierParams& params, const Eigen::MatrixXd& features) {
  ForwardCache cache;
  cache.input = standardize(params, features);
  cache.hidden = ((params.w1 * cache.input).colwise() + params.b1).array().tanh().matrix();
  cache.prob = softmax((params.w2 * cache.hidden).colwise() + params.b2);
  return cache;
}

DistributionMap forward(const ClassifierParams& params, const FeatureMap& features) {
  if (features.values.cols() != static_cast<Eigen::Index>(features.size())) {
    throw Error("forward: feature matrix does not match its declared size");
  }
  const Eigen::MatrixXd prob = softmax(forward_logits(params, features.values));
  return from_matrix(prob, features.width, features.height);
}

Eigen::MatrixXd to_matrix(const DistributionMap& p) {
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(kLevels, static_cast<Eigen::Index>(p.size()));
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (!p.is_valid(i)) continue;
    for (int k = 0; k < kLevels; ++k) m(k, static_cast<Eigen::Index>(i)) = p[i][std::size_t(k)];
  }
  return m;
}

DistributionMap from_matrix(const Eigen::MatrixXd& prob, int width, int height) {
  if (prob.rows() != kLevels || prob.cols() != Eigen::Index(width) * height) {
    throw Error("from_matrix: shape mismatch");
  }
  DistributionMap out(width, height);
  for (std::size_t i = 0; i < out.size(); ++i) {
    Distribution d;
    for (int k = 0; k < kLevels; ++k) d[std::size_t(k)] = prob(k, static_cast<Eigen::Index>(i));
    out.set(i, d);
  }
  return out;
}

Eigen::VectorXd backward_from_logits(const ClassifierParams& params, const ForwardCache& cache,
                                     const Eigen::MatrixXd& d_logits) {
  ClassifierParams grad = ClassifierParams::zeros(params.input_dim(), params.hidden_dim());
  grad.w2 = d_logits * cache.hidden.transpose();
  grad.b2 = d_logits.rowwise().sum();
  const Eigen::MatrixXd d_hidden = params.w2.transpose() * d_logits;
  const Eigen::MatrixXd d_pre =
      (d_hidden.array() * (1.0 - cache.hidden.array().square())).matrix();
  grad.w1 = d_pre * cache.input.transpose();
  grad.b1 = d_pre.rowwise().sum();
  return grad.flatten();
}

Eigen::VectorXd finite_diff_grad(const std::function<double(const ClassifierParams&)>& loss_fn,
                                 const ClassifierParams& params, double step) {
  const Eigen::VectorXd base = params.flatten();
  Eigen::VectorXd grad(base.size());
  ClassifierParams probe = params;
  for (Eigen::Index k = 0; k < base.size(); ++k) {
    Eigen::VectorXd x = base;
    x[k] = base[k] + step;
    probe.unflatten(x);
    const double plus = loss_fn(probe);
    x[k] = base[k] - step;
    probe.unflatten(x);
    const double minus = loss_fn(probe);
    grad[k] = (plus - minus) / (2.0 * step);
  }
  return grad;
}

}  // namespace tofstereo::dei
