#include "tofstereo/fusion.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "tofstereo/adam.hpp"

namespace tofstereo::fusion {

namespace {

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

Eigen::VectorXd midpoints() {
  Eigen::VectorXd m(dei::kLevels);
  for (int k = 0; k < dei::kLevels; ++k) m[k] = dei::level_midpoint(k);
  return m;
}

double sign(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

double blend_logit(const BlendParams& p, const dei::FeatureMap& f, Eigen::Index col) {
  double z = p.b;
  for (int k = 0; k < kBlendFeatureDim; ++k) z += p.w[std::size_t(k)] * f.values(k, col);
  return z;
}

void check_features(const dei::FeatureMap& f, const DepthMap& ref, const char* what) {
  if (f.dim() != kBlendFeatureDim || f.width != ref.width() || f.height != ref.height() ||
      f.values.cols() != static_cast<Eigen::Index>(ref.size())) {
    throw Error(std::string(what) + ": blend features do not match the depth maps");
  }
}

// Blended prediction in double precision; `weight` receives sigmoid(logit)
// on blended pixels and 0 elsewhere.
ScalarField blend_prediction(const DepthMap& tof, const DepthMap& stereo,
                             const dei::FeatureMap& features, const BlendParams& params,
                             Map<double>* weight) {
  require_same_shape(tof, stereo, "fuse_blend");
  check_features(features, tof, "fuse_blend");
  ScalarField pred(tof.width(), tof.height());
  if (weight != nullptr) *weight = Map<double>(tof.width(), tof.height(), 0.0);
  for (std::size_t i = 0; i < tof.size(); ++i) {
    const bool t = tof.is_valid(i);
    const bool s = stereo.is_valid(i);
    if (t && s) {
      const double w = sigmoid(blend_logit(params, features, static_cast<Eigen::Index>(i)));
      pred.set(i, w * double(tof[i]) + (1.0 - w) * double(stereo[i]));
      if (weight != nullptr) (*weight)[i] = w;
    } else if (t) {
      pred.set(i, double(tof[i]));
    } else if (s) {
      pred.set(i, double(stereo[i]));
    }
  }
  return pred;
}

ScalarField to_field(const DepthMap& d) {
  ScalarField out(d.width(), d.height());
  for (std::size_t i = 0; i < d.size(); ++i) {
    if (d.is_valid(i)) out.set(i, double(d[i]));
  }
  return out;
}

// Gradient of the depth loss w.r.t. BlendParams, given dL/dpred.
Eigen::VectorXd blend_param_grad(const BlendFrame& frame, const Map<double>& weight,
                                 const Map<double>& d_pred, Eigen::VectorXd* d_logit_out) {
  Eigen::VectorXd g = Eigen::VectorXd::Zero(kBlendFeatureDim + 1);
  if (d_logit_out != nullptr) *d_logit_out = Eigen::VectorXd::Zero(Eigen::Index(frame.tof.size()));
  for (std::size_t i = 0; i < frame.tof.size(); ++i) {
    if (!frame.tof.is_valid(i) || !frame.stereo.is_valid(i) || d_pred[i] == 0.0) continue;
    const double w = weight[i];
    const double dz = d_pred[i] * w * (1.0 - w) * (double(frame.tof[i]) - double(frame.stereo[i]));
    const auto col = static_cast<Eigen::Index>(i);
    for (int k = 0; k < kBlendFeatureDim; ++k) g[k] += dz * frame.features.values(k, col);
    g[kBlendFeatureDim] += dz;
    if (d_logit_out != nullptr) (*d_logit_out)[col] = dz;
  }
  return g;
}

}  // namespace

ScalarField expected_error(const dei::DistributionMap& p) {
  ScalarField out(p.width(), p.height());
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (!p.is_valid(i)) continue;
    double e = 0.0;
    for (int k = 0; k < dei::kLevels; ++k) e += p[i][std::size_t(k)] * dei::level_midpoint(k);
    out.set(i, e);
  }
  return out;
}

DepthMap fuse_simple(const DepthMap& tof, const DepthMap& stereo) {
  require_same_shape(tof, stereo, "fuse_simple");
  DepthMap out(tof.width(), tof.height());
  for (std::size_t i = 0; i < tof.size(); ++i) {
    if (tof.is_valid(i)) {
      out.set(i, tof[i]);
    } else if (stereo.is_valid(i)) {
      out.set(i, stereo[i]);
    }
  }
  return out;
}

DepthMap fuse_select(const DepthMap& tof, const DepthMap& stereo, const ScalarField& e_tof,
                     const ScalarField& e_stereo) {
  require_same_shape(tof, stereo, "fuse_select");
  require_same_shape(tof, e_tof, "fuse_select");
  require_same_shape(tof, e_stereo, "fuse_select");
  constexpr double inf = std::numeric_limits<double>::infinity();
  DepthMap out(tof.width(), tof.height());
  for (std::size_t i = 0; i < tof.size(); ++i) {
    const bool t = tof.is_valid(i);
    const bool s = stereo.is_valid(i);
    if (t && s) {
      const double et = e_tof.is_valid(i) ? e_tof[i] : inf;
      const double es = e_stereo.is_valid(i) ? e_stereo[i] : inf;
      out.set(i, es < et ? stereo[i] : tof[i]);
    } else if (t) {
      out.set(i, tof[i]);
    } else if (s) {
      out.set(i, stereo[i]);
    }
  }
  return out;
}

Eigen::VectorXd BlendParams::flatten() const {
  Eigen::VectorXd flat(kBlendFeatureDim + 1);
  for (int k = 0; k < kBlendFeatureDim; ++k) flat[k] = w[std::size_t(k)];
  flat[kBlendFeatureDim] = b;
  return flat;
}

BlendParams BlendParams::unflatten(const Eigen::VectorXd& flat) {
  if (flat.size() != kBlendFeatureDim + 1) throw Error("blend: flat parameter size mismatch");
  BlendParams p;
  for (int k = 0; k < kBlendFeatureDim; ++k) p.w[std::size_t(k)] = flat[k];
  p.b = flat[kBlendFeatureDim];
  return p;
}

void BlendParams::validate() const {
  if (!flatten().allFinite()) throw Error("blend: non-finite parameters");
}

dei::FeatureMap blend_features(const ScalarField& e_tof, const ScalarField& e_stereo,
                               const Map<std::uint8_t>& confidence, const Map<double>& pkr) {
  require_same_shape(e_tof, e_stereo, "blend_features");
  require_same_shape(e_tof, confidence, "blend_features");
  require_same_shape(e_tof, pkr, "blend_features");
  dei::FeatureMap f;
  f.width = e_tof.width();
  f.height = e_tof.height();
  f.values.resize(kBlendFeatureDim, static_cast<Eigen::Index>(e_tof.size()));
  for (std::size_t i = 0; i < e_tof.size(); ++i) {
    const auto col = static_cast<Eigen::Index>(i);
    f.values(0, col) = (e_tof.is_valid(i) ? e_tof[i] : kMaxExpectedError) / kMaxExpectedError;
    f.values(1, col) =
        (e_stereo.is_valid(i) ? e_stereo[i] : kMaxExpectedError) / kMaxExpectedError;
    f.values(2, col) = confidence[i] / 7.0;
    f.values(3, col) = std::clamp(pkr[i], 1.0, stereo::kPkrMax) / stereo::kPkrMax;
  }
  return f;
}

ScalarField blend_weights(const DepthMap& tof, const DepthMap& stereo,
                          const dei::FeatureMap& features, const BlendParams& params) {
  Map<double> weight;
  blend_prediction(tof, stereo, features, params, &weight);
  ScalarField out(tof.width(), tof.height());
  for (std::size_t i = 0; i < tof.size(); ++i) {
    if (tof.is_valid(i) && stereo.is_valid(i)) out.set(i, weight[i]);
  }
  return out;
}

DepthMap fuse_blend(const DepthMap& tof, const DepthMap& stereo,
                    const dei::FeatureMap& features, const BlendParams& params) {
  const ScalarField pred = blend_prediction(tof, stereo, features, params, nullptr);
  DepthMap out(tof.width(), tof.height());
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (pred.is_valid(i)) out.set(i, static_cast<float>(pred[i]));
  }
  return out;
}

double loss_depth_grad(const ScalarField& pred, const ScalarField& gt, double mu,
                       Map<double>& grad) {
  require_same_shape(pred, gt, "loss_depth");
  if (!(mu >= 0.0)) throw Error("loss_depth: mu must be >= 0");
  const int w = gt.width();
  const int h = gt.height();
  grad = Map<double>(w, h, 0.0);
  auto joint = [&](int x, int y) { return pred.is_valid(x, y) && gt.is_valid(x, y); };
  auto residual = [&](std::size_t i) { return pred[i] - gt[i]; };

  std::size_t n = 0;
  for (std::size_t i = 0; i < gt.size(); ++i) n += pred.is_valid(i) && gt.is_valid(i);
  if (n == 0) throw Error("loss_depth: no jointly valid pixels");
  const double inv_n = 1.0 / static_cast<double>(n);

  double data = 0.0;
  double smooth = 0.0;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (!joint(x, y)) continue;
      const std::size_t i = gt.values().index(x, y);
      const double r = residual(i);
      data += std::abs(r);
      grad[i] += sign(r) * inv_n;
      const int nx[2] = {x + 1, x};
      const int ny[2] = {y, y + 1};
      for (int k = 0; k < 2; ++k) {
        if (!gt.contains(nx[k], ny[k]) || !joint(nx[k], ny[k])) continue;
        const std::size_t j = gt.values().index(nx[k], ny[k]);
        const double d = residual(j) - r;
        smooth += std::abs(d);
        grad[j] += mu * sign(d) * inv_n;
        grad[i] -= mu * sign(d) * inv_n;
      }
    }
  }
  return (data + mu * smooth) * inv_n;
}

double loss_depth(const ScalarField& pred, const ScalarField& gt, double mu) {
  Map<double> grad;
  return loss_depth_grad(pred, gt, mu, grad);
}

double loss_depth(const DepthMap& pred, const DepthMap& gt, double mu) {
  return loss_depth(to_field(pred), to_field(gt), mu);
}

BlendLoss blend_loss_and_grad(const BlendFrame& frame, const BlendParams& params, double mu) {
  Map<double> weight;
  const ScalarField pred = blend_prediction(frame.tof, frame.stereo, frame.features, params, &weight);
  Map<double> d_pred;
  BlendLoss r;
  r.value = loss_depth_grad(pred, to_field(frame.gt), mu, d_pred);
  r.grad = blend_param_grad(frame, weight, d_pred, nullptr);
  return r;
}

double blend_loss(const BlendFrame& frame, const BlendParams& params, double mu) {
  const ScalarField pred =
      blend_prediction(frame.tof, frame.stereo, frame.features, params, nullptr);
  return loss_depth(pred, to_field(frame.gt), mu);
}

double mean_blend_weight(const std::vector<BlendFrame>& frames, const BlendParams& params) {
  double sum = 0.0;
  std::size_t n = 0;
  for (const BlendFrame& f : frames) {
    const ScalarField w = blend_weights(f.tof, f.stereo, f.features, params);
    for (std::size_t i = 0; i < w.size(); ++i) {
      if (!w.is_valid(i)) continue;
      sum += w[i];
      ++n;
    }
  }
  return n == 0 ? 0.0 : sum / static_cast<double>(n);
}

BlendFrame make_blend_frame(const FusionSample& sample, const dei::ClassifierParams& tof,
                            const dei::ClassifierParams& stereo) {
  const ScalarField e_tof = expected_error(dei::forward(tof, sample.tof_tile.features));
  const ScalarField e_stereo = expected_error(dei::forward(stereo, sample.stereo_tile.features));
  return {sample.tof, sample.stereo, sample.gt,
          blend_features(e_tof, e_stereo, sample.confidence, sample.pkr)};
}

void Stage2Hyper::validate() const {
  if (epochs < 0 || joint_epochs < 0) throw Error("stage 2: epochs must be >= 0");
  if (!(learning_rate >= 0.0) || !(joint_learning_rate >= 0.0)) {
    throw Error("stage 2: learning rates must be >= 0");
  }
  if (!(joint_dei_weight >= 0.0)) throw Error("stage 2: joint_dei_weight must be >= 0");
  weights.validate();
}

BlendParams train_blend(const std::vector<BlendFrame>& frames, const Stage2Hyper& hyper,
                        std::vector<double>* history) {
  hyper.validate();
  if (frames.empty()) throw Error("stage 2: empty dataset");
  BlendParams params;
  Eigen::VectorXd x = params.flatten();
  Adam adam(x.size(), hyper.learning_rate);
  for (int epoch = 1; epoch <= hyper.epochs; ++epoch) {
    double loss = 0.0;
    Eigen::VectorXd grad = Eigen::VectorXd::Zero(x.size());
    for (const BlendFrame& f : frames) {
      const BlendLoss bl = blend_loss_and_grad(f, params, hyper.weights.mu);
      loss += bl.value;
      grad += bl.grad;
    }
    loss /= static_cast<double>(frames.size());
    grad /= static_cast<double>(frames.size());
    if (!std::isfinite(loss) || !grad.allFinite()) {
      throw Error("stage 2: non-finite loss at epoch " + std::to_string(epoch));
    }
    if (history != nullptr) history->push_back(loss);
    adam.step(x, grad);
    params = BlendParams::unflatten(x);
  }
  return params;
}

BlendParams train_fusion_stage2(const std::vector<FusionSample>& data,
                                const dei::ClassifierParams& tof,
                                const dei::ClassifierParams& stereo, const Stage2Hyper& hyper,
                                std::vector<double>* history) {
  if (data.empty()) throw Error("stage 2: empty dataset");
  std::vector<BlendFrame> frames;
  frames.reserve(data.size());
  for (const FusionSample& s : data) frames.push_back(make_blend_frame(s, tof, stereo));
  return train_blend(frames, hyper, history);
}

JointLoss joint_loss_and_grad(const FusionSample& sample, const dei::ClassifierParams& tof,
                              const dei::ClassifierParams& stereo, const BlendParams& blend,
                              const Stage2Hyper& hyper) {
  const dei::ForwardCache ct = dei::forward_cached(tof, sample.tof_tile.features.values);
  const dei::ForwardCache cs = dei::forward_cached(stereo, sample.stereo_tile.features.values);
  const int w = sample.gt.width();
  const int h = sample.gt.height();
  const Eigen::VectorXd mid = midpoints();

  BlendFrame frame{sample.tof, sample.stereo, sample.gt,
                   blend_features(expected_error(dei::from_matrix(ct.prob, w, h)),
                                  expected_error(dei::from_matrix(cs.prob, w, h)),
                                  sample.confidence, sample.pkr)};
  Map<double> weight;
  const ScalarField pred = blend_prediction(frame.tof, frame.stereo, frame.features, blend, &weight);
  Map<double> d_pred;
  JointLoss r;
  r.value = loss_depth_grad(pred, to_field(frame.gt), hyper.weights.mu, d_pred);
  Eigen::VectorXd d_logit;
  r.blend_grad = blend_param_grad(frame, weight, d_pred, &d_logit);

  // Logit depends on E_tof / 120 and E_stereo / 120; E = prob^T midpoints.
  const Eigen::RowVectorXd d_et = (d_logit * (blend.w[0] / kMaxExpectedError)).transpose();
  const Eigen::RowVectorXd d_es = (d_logit * (blend.w[1] / kMaxExpectedError)).transpose();
  Eigen::MatrixXd dprob_t = mid * d_et;
  Eigen::MatrixXd dprob_s = mid * d_es;

  const double lam = hyper.joint_dei_weight;
  if (lam != 0.0) {
    const dei::LossResult lt =
        dei::tdei_loss(ct.prob, sample.tof_tile.labels, sample.tof_tile.gradient,
                       sample.tof_tile.sot, hyper.weights, hyper.edge);
    const dei::LossResult ls = dei::sdei_loss(cs.prob, sample.stereo_tile.labels);
    r.value += lam * (lt.value + ls.value);
    dprob_t += lam * lt.d_prob;
    dprob_s += lam * ls.d_prob;
  }
  r.tof_grad = dei::backward_from_logits(tof, ct, dei::softmax_backward(ct.prob, dprob_t));
  r.stereo_grad = dei::backward_from_logits(stereo, cs, dei::softmax_backward(cs.prob, dprob_s));
  return r;
}

double joint_loss(const FusionSample& sample, const dei::ClassifierParams& tof,
                  const dei::ClassifierParams& stereo, const BlendParams& blend,
                  const Stage2Hyper& hyper) {
  const BlendFrame frame = make_blend_frame(sample, tof, stereo);
  double value = blend_loss(frame, blend, hyper.weights.mu);
  const double lam = hyper.joint_dei_weight;
  if (lam != 0.0) {
    const Eigen::MatrixXd pt = dei::softmax(dei::forward_logits(tof, sample.tof_tile.features.values));
    const Eigen::MatrixXd ps =
        dei::softmax(dei::forward_logits(stereo, sample.stereo_tile.features.values));
    value += lam * (dei::tdei_loss(pt, sample.tof_tile.labels, sample.tof_tile.gradient,
                                   sample.tof_tile.sot, hyper.weights, hyper.edge)
                        .value +
                    dei::sdei_loss(ps, sample.stereo_tile.labels).value);
  }
  return value;
}

void TwoStageHyper::validate() const {
  stage1.validate();
  stage2.validate();
  if (tile_size < 3) throw Error("training: tile_size must be >= 3");
}

std::vector<dei::DEITile> split_tiles(const dei::DEITile& frame, int size) {
  if (size < 1) throw Error("split_tiles: size must be >= 1");
  const int w = frame.labels.width();
  const int h = frame.labels.height();
  const bool has_grad = frame.gradient.size() > 0;
  const bool has_sot = frame.sot.size() > 0;
  if (frame.features.width != w || frame.features.height != h ||
      (has_grad && !frame.gradient.same_shape(frame.labels.values())) ||
      (has_sot && !frame.sot.same_shape(frame.labels))) {
    throw Error("split_tiles: tile components disagree in size");
  }
  std::vector<dei::DEITile> tiles;
  for (int y0 = 0; y0 < h; y0 += size) {
    for (int x0 = 0; x0 < w; x0 += size) {
      const int tw = std::min(size, w - x0);
      const int th = std::min(size, h - y0);
      dei::DEITile t;
      t.features.width = tw;
      t.features.height = th;
      t.features.values.resize(frame.features.dim(), Eigen::Index(tw) * th);
      t.labels = dei::LabelMap(tw, th);
      if (has_grad) t.gradient = geometry::GradientMap(tw, th, 0.0);
      if (has_sot) t.sot = geometry::AngleMap(tw, th);
      for (int y = 0; y < th; ++y) {
        for (int x = 0; x < tw; ++x) {
          const std::size_t src = frame.labels.values().index(x0 + x, y0 + y);
          const std::size_t dst = t.labels.values().index(x, y);
          t.features.values.col(Eigen::Index(dst)) = frame.features.values.col(Eigen::Index(src));
          if (frame.labels.is_valid(src)) t.labels.set(dst, frame.labels[src]);
          if (has_grad) t.gradient[dst] = frame.gradient[src];
          if (has_sot && frame.sot.is_valid(src)) t.sot.set(dst, frame.sot[src]);
        }
      }
      tiles.push_back(std::move(t));
    }
  }
  return tiles;
}

TwoStageResult train_two_stage(const std::vector<FusionSample>& train,
                               const std::vector<FusionSample>& val, const TwoStageHyper& hyper) {
  hyper.validate();
  if (train.empty()) throw Error("training: empty dataset");
  auto tiles_of = [&](const std::vector<FusionSample>& set) {
    dei::DEIDataset d;
    for (const FusionSample& s : set) {
      for (auto& t : split_tiles(s.tof_tile, hyper.tile_size)) d.tof.push_back(std::move(t));
      for (auto& t : split_tiles(s.stereo_tile, hyper.tile_size)) d.stereo.push_back(std::move(t));
    }
    return d;
  };

  TwoStageResult r;
  dei::Stage1Result s1 = dei::train_dei_stage1(tiles_of(train), tiles_of(val), hyper.stage1);
  r.tof = std::move(s1.tof);
  r.stereo = std::move(s1.stereo);
  r.tof_history = std::move(s1.tof_history);
  r.stereo_history = std::move(s1.stereo_history);
  r.blend = train_fusion_stage2(train, r.tof, r.stereo, hyper.stage2, &r.blend_history);

  if (hyper.stage2.joint_epochs > 0) {
    const Eigen::Index nt = r.tof.trainable_size();
    const Eigen::Index ns = r.stereo.trainable_size();
    Eigen::VectorXd x(nt + ns + kBlendFeatureDim + 1);
    x << r.tof.flatten(), r.stereo.flatten(), r.blend.flatten();
    Adam adam(x.size(), hyper.stage2.joint_learning_rate);
    for (int epoch = 1; epoch <= hyper.stage2.joint_epochs; ++epoch) {
      Eigen::VectorXd grad = Eigen::VectorXd::Zero(x.size());
      double loss = 0.0;
      for (const FusionSample& s : train) {
        const JointLoss jl = joint_loss_and_grad(s, r.tof, r.stereo, r.blend, hyper.stage2);
        loss += jl.value;
        grad.segment(0, nt) += jl.tof_grad;
        grad.segment(nt, ns) += jl.stereo_grad;
        grad.segment(nt + ns, kBlendFeatureDim + 1) += jl.blend_grad;
      }
      loss /= static_cast<double>(train.size());
      grad /= static_cast<double>(train.size());
      if (!std::isfinite(loss) || !grad.allFinite()) {
        throw Error("joint fine-tune: non-finite loss at epoch " + std::to_string(epoch));
      }
      r.joint_history.push_back(loss);
      adam.step(x, grad);
      r.tof.unflatten(x.segment(0, nt));
      r.stereo.unflatten(x.segment(nt, ns));
      r.blend = BlendParams::unflatten(x.segment(nt + ns, kBlendFeatureDim + 1));
    }
  }
  return r;
}

}  // namespace tofstereo::fusion
