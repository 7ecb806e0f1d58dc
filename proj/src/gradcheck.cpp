#include "tofstereo/gradcheck.hpp"

#include <algorithm>
#include <functional>

#include "tofstereo/classifier.hpp"
#include "tofstereo/fusion.hpp"
#include "tofstereo/rng.hpp"
#include "tofstereo/training.hpp"

namespace tofstereo::gradcheck {

namespace {

constexpr int kTileW = 7;
constexpr int kTileH = 6;

// Deterministic stream of uniforms for one instance.
class Draw {
 public:
  explicit Draw(std::uint64_t seed) : seed_(seed) {}
  double uniform(double lo = 0.0, double hi = 1.0) {
    return lo + (hi - lo) * rng::uniform(seed_, counter_++);
  }
  std::uint64_t bits() { return rng::hash(seed_, counter_++); }
  int integer(int lo, int hi) {
    return std::min(hi, lo + static_cast<int>(uniform() * (hi - lo + 1)));
  }

 private:
  std::uint64_t seed_;
  std::uint64_t counter_ = 0;
};

// Random tile with a few unlabelled pixels and a few missing SoT values.
dei::DEITile random_tile(Draw& d, int dim) {
  dei::DEITile t;
  t.features = {kTileW, kTileH, Eigen::MatrixXd(dim, kTileW * kTileH)};
  t.labels = dei::LabelMap(kTileW, kTileH);
  t.gradient = geometry::GradientMap(kTileW, kTileH, 0.0);
  t.sot = geometry::AngleMap(kTileW, kTileH);
  for (std::size_t i = 0; i < t.labels.size(); ++i) {
    for (int k = 0; k < dim; ++k) t.features.values(k, Eigen::Index(i)) = d.uniform();
    if (d.uniform() > 0.1) t.labels.set(i, d.integer(0, dei::kLevels - 1));
    t.gradient[i] = d.uniform();
    if (d.uniform() > 0.1) t.sot.set(i, d.uniform(5.0, 90.0));
  }
  return t;
}

dei::ClassifierParams random_params(Draw& d, int dim) {
  dei::ClassifierParams p =
      dei::ClassifierParams::random(dim, d.bits(), 1.0);
  for (int k = 0; k < dim; ++k) {
    p.input_mean[k] = d.uniform(0.3, 0.7);
    p.input_scale[k] = d.uniform(1.0, 3.0);
  }
  Eigen::VectorXd flat = p.flatten();
  for (Eigen::Index k = 0; k < flat.size(); ++k) flat[k] += d.uniform(-0.2, 0.2);
  p.unflatten(flat);
  return p;
}

CheckResult check_classifier(const std::string& name, const Options& o, dei::LossKind kind,
                             const dei::LossWeights& weights, std::uint64_t salt) {
  CheckResult r{name, o.instances, 0.0, true};
  const dei::EdgeLossOptions edge;
  for (int n = 0; n < o.instances; ++n) {
    Draw d(rng::hash(o.seed, salt, std::uint64_t(n)));
    const int dim = dei::kTofFeatureDim;
    const dei::DEITile tile = random_tile(d, dim);
    const dei::ClassifierParams params = random_params(d, dim);
    const Eigen::VectorXd analytic = dei::backward(kind, params, tile, weights, edge).grad;
    const Eigen::VectorXd numeric = dei::finite_diff_grad(
        [&](const dei::ClassifierParams& p) {
          return dei::evaluate_loss(kind, p, tile, weights, edge);
        },
        params, o.step);
    r.worst_error = std::max(r.worst_error, relative_error(analytic, numeric));
  }
  r.passed = r.worst_error <= o.tolerance;
  return r;
}

CheckResult check_blend(const Options& o) {
  CheckResult r{"depth_loss_blend", o.instances, 0.0, true};
  for (int n = 0; n < o.instances; ++n) {
    Draw d(rng::hash(o.seed, 5, std::uint64_t(n)));
    fusion::BlendFrame f;
    f.tof = DepthMap(kTileW, kTileH);
    f.stereo = DepthMap(kTileW, kTileH);
    f.gt = DepthMap(kTileW, kTileH);
    f.features = {kTileW, kTileH, Eigen::MatrixXd(fusion::kBlendFeatureDim, kTileW * kTileH)};
    for (std::size_t i = 0; i < f.gt.size(); ++i) {
      const double z = d.uniform(0.5, 3.0);
      if (d.uniform() > 0.05) f.gt.set(i, float(z));
      if (d.uniform() > 0.15) f.tof.set(i, float(z + d.uniform(-0.1, 0.1)));
      if (d.uniform() > 0.15) f.stereo.set(i, float(z + d.uniform(-0.1, 0.1)));
      for (int k = 0; k < fusion::kBlendFeatureDim; ++k) {
        f.features.values(k, Eigen::Index(i)) = d.uniform();
      }
    }
    fusion::BlendParams p;
    for (double& w : p.w) w = d.uniform(-2.0, 2.0);
    p.b = d.uniform(-1.0, 1.0);
    const double mu = d.uniform(0.0, 0.5);

    const Eigen::VectorXd analytic = fusion::blend_loss_and_grad(f, p, mu).grad;
    const Eigen::VectorXd base = p.flatten();
    Eigen::VectorXd numeric(base.size());
    for (Eigen::Index k = 0; k < base.size(); ++k) {
      Eigen::VectorXd x = base;
      x[k] = base[k] + o.step;
      const double plus = fusion::blend_loss(f, fusion::BlendParams::unflatten(x), mu);
      x[k] = base[k] - o.step;
      const double minus = fusion::blend_loss(f, fusion::BlendParams::unflatten(x), mu);
      numeric[k] = (plus - minus) / (2.0 * o.step);
    }
    r.worst_error = std::max(r.worst_error, relative_error(analytic, numeric));
  }
  r.passed = r.worst_error <= o.tolerance;
  return r;
}

}  // namespace

double relative_error(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  const double scale = std::max({a.norm(), b.norm(), 1e-12});
  return (a - b).norm() / scale;
}

std::vector<CheckResult> run_all(const Options& options) {
  dei::LossWeights edge_only;
  edge_only.alpha = 1.0;
  edge_only.beta = 0.0;
  dei::LossWeights lc_only;
  lc_only.alpha = 0.0;
  lc_only.beta = 1.0;
  dei::LossWeights combined;
  combined.alpha = 1.0;
  combined.beta = 0.5;
  return {
      check_classifier("edge_aware", options, dei::LossKind::Tdei, edge_only, 1),
      check_classifier("local_consistency", options, dei::LossKind::Tdei, lc_only, 2),
      check_classifier("tdei", options, dei::LossKind::Tdei, combined, 3),
      check_classifier("stereo_ce", options, dei::LossKind::Sdei, combined, 4),
      check_blend(options),
  };
}

}  // namespace tofstereo::gradcheck
