#pragma once

#include <cmath>

#include <Eigen/Core>

namespace tofstereo {

/// Adam with bias correction (beta1 0.9, beta2 0.999, eps 1e-8).
class Adam {
 public:
  Adam(Eigen::Index n, double lr)
      : m_(Eigen::VectorXd::Zero(n)), v_(Eigen::VectorXd::Zero(n)), lr_(lr) {}

  void step(Eigen::VectorXd& x, const Eigen::VectorXd& g) {
    constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
    ++t_;
    m_ = b1 * m_ + (1.0 - b1) * g;
    v_ = b2 * v_ + (1.0 - b2) * g.cwiseProduct(g);
    const double c1 = 1.0 - std::pow(b1, t_);
    const double c2 = 1.0 - std::pow(b2, t_);
    x.array() -= lr_ * (m_.array() / c1) / ((v_.array() / c2).sqrt() + eps);
  }

 private:
  Eigen::VectorXd m_, v_;
  double lr_;
  int t_ = 0;
};

}  // namespace tofstereo
