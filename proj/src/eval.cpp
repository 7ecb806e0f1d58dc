#include "tofstereo/eval.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <system_error>

namespace tofstereo::eval {

namespace {

constexpr double kDeltas[3] = {1.05, 1.10, 1.25};

}  // namespace

void MetricsAccumulator::add(const DepthMap& pred, const DepthMap& gt, InvalidPolicy policy) {
  require_same_shape(pred, gt, "depth_metrics");
  for (std::size_t i = 0; i < gt.size(); ++i) {
    if (!gt.is_valid(i)) continue;
    const double g = gt[i];
    if (!pred.is_valid(i)) {
      if (policy == InvalidPolicy::JointValid) continue;
      // Missing measurement: depth 0, error = gt, no delta threshold met.
      const double err_mm = g * 1000.0;
      abs_sum_ += err_mm;
      sq_sum_ += err_mm * err_mm;
      ++n_;
      continue;
    }
    const double p = pred[i];
    const double err_mm = std::abs(p - g) * 1000.0;
    abs_sum_ += err_mm;
    sq_sum_ += err_mm * err_mm;
    const double ratio = std::max(p / g, g / p);
    for (int k = 0; k < 3; ++k) within_[k] += ratio < kDeltas[k] ? 1 : 0;
    ++n_;
  }
}

MetricsReport MetricsAccumulator::report() const {
  if (n_ == 0) throw Error("depth_metrics: no jointly valid pixels");
  MetricsReport r;
  const double n = static_cast<double>(n_);
  r.n_valid = n_;
  r.mae_mm = abs_sum_ / n;
  r.rmse_mm = std::sqrt(sq_sum_ / n);
  r.delta_105 = static_cast<double>(within_[0]) / n;
  r.delta_110 = static_cast<double>(within_[1]) / n;
  r.delta_125 = static_cast<double>(within_[2]) / n;
  return r;
}

MetricsReport depth_metrics(const DepthMap& pred, const DepthMap& gt, InvalidPolicy policy) {
  MetricsAccumulator acc;
  acc.add(pred, gt, policy);
  return acc.report();
}

ScalarField abs_error_mm(const DepthMap& pred, const DepthMap& gt) {
  require_same_shape(pred, gt, "abs_error_mm");
  ScalarField err(gt.width(), gt.height());
  for (std::size_t i = 0; i < gt.size(); ++i) {
    if (!gt.is_valid(i)) continue;
    err.set(i, pred.is_valid(i) ? std::abs(double(pred[i]) - double(gt[i])) * 1000.0
                                : std::numeric_limits<double>::infinity());
  }
  return err;
}

void QuadrantAccumulator::add(const ScalarField& err_tof, const ScalarField& err_stereo,
                              double tau_mm) {
  require_same_shape(err_tof, err_stereo, "quadrant_analysis");
  for (std::size_t i = 0; i < err_tof.size(); ++i) {
    if (!err_tof.is_valid(i) || !err_stereo.is_valid(i)) continue;
    const bool tof_good = err_tof[i] < tau_mm;
    const bool stereo_good = err_stereo[i] < tau_mm;
    if (tof_good && !stereo_good) {
      ++counts_[0];
    } else if (!tof_good && !stereo_good) {
      ++counts_[1];
    } else if (tof_good && stereo_good) {
      ++counts_[2];
    } else {
      ++counts_[3];
    }
  }
}

QuadrantStats QuadrantAccumulator::stats() const {
  QuadrantStats q;
  q.n = counts_[0] + counts_[1] + counts_[2] + counts_[3];
  if (q.n == 0) return q;
  const double n = static_cast<double>(q.n);
  q.r1 = counts_[0] / n;
  q.r2 = counts_[1] / n;
  q.r3 = counts_[2] / n;
  q.r4 = counts_[3] / n;
  return q;
}

QuadrantStats quadrant_analysis(const ScalarField& err_tof, const ScalarField& err_stereo,
                                double tau_mm) {
  QuadrantAccumulator acc;
  acc.add(err_tof, err_stereo, tau_mm);
  return acc.stats();
}

std::pair<std::size_t, std::size_t> dei_hits(const dei::DistributionMap& pred,
                                             const dei::LabelMap& labels, int k) {
  if (k < 1 || k > dei::kLevels) throw Error("dei_accuracy: k must be in [1, 8]");
  require_same_shape(pred, labels, "dei_accuracy");
  std::size_t hits = 0;
  std::size_t total = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (!labels.is_valid(i) || !pred.is_valid(i)) continue;
    const int y = labels[i];
    const dei::Distribution& p = pred[i];
    int ahead = 0;
    for (int j = 0; j < dei::kLevels; ++j) {
      if (j == y) continue;
      const double pj = p[std::size_t(j)];
      const double py = p[std::size_t(y)];
      if (pj > py || (pj == py && j < y)) ++ahead;
    }
    hits += ahead < k ? 1 : 0;
    ++total;
  }
  return {hits, total};
}

double dei_accuracy(const dei::DistributionMap& pred, const dei::LabelMap& labels, int k) {
  const auto [hits, total] = dei_hits(pred, labels, k);
  return total == 0 ? 0.0 : static_cast<double>(hits) / static_cast<double>(total);
}

std::string format_row(const ReportRow& row) {
  const MetricsReport& m = row.metrics;
  const QuadrantStats& q = row.quadrants;
  char buf[512];
  std::snprintf(buf, sizeof(buf), "%s,%s,%.6f,%.6f,%.6f,%.6f,%.6f,%zu,%.6f,%.6f,%.6f,%.6f",
                row.scene.c_str(), row.method.c_str(), m.mae_mm, m.rmse_mm, m.delta_105,
                m.delta_110, m.delta_125, m.n_valid, q.r1, q.r2, q.r3, q.r4);
  return buf;
}

void emit_report(const std::vector<ReportRow>& rows, const std::filesystem::path& path) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write report: " + path.string());
    out << kReportHeader << '\n';
    for (const auto& row : rows) out << format_row(row) << '\n';
    if (!out) throw Error("cannot write report: " + path.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw Error("cannot write report: " + path.string() + " (" + ec.message() + ")");
}

}  // namespace tofstereo::eval
