#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace tofstereo::gradcheck {

struct Options {
  int instances = 20;       // random instances per loss
  double step = 1e-6;       // central-difference step
  double tolerance = 1e-4;  // max allowed relative error
  std::uint64_t seed = 1;
};

struct CheckResult {
  std::string name;
  int instances = 0;
  double worst_error = 0.0;  // largest relative error over the instances
  bool passed = false;
};

/// ||a - b|| / max(||a||, ||b||, 1e-12).
double relative_error(const Eigen::VectorXd& a, const Eigen::VectorXd& b);

/// Analytic vs central-difference gradients on seeded random instances for the
/// edge-aware loss, the local-consistency loss, the combined TDEI loss and the
/// stereo cross-entropy (all w.r.t. classifier weights), and the depth loss
/// w.r.t. the blend parameters.
std::vector<CheckResult> run_all(const Options& options = {});

}  // namespace tofstereo::gradcheck
