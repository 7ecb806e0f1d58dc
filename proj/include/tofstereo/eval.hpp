#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

#include "tofstereo/dei.hpp"
#include "tofstereo/map.hpp"

namespace tofstereo::eval {

struct MetricsReport {
  double mae_mm = 0.0;
  double rmse_mm = 0.0;
  double delta_105 = 0.0;
  double delta_110 = 0.0;
  double delta_125 = 0.0;
  std::size_t n_valid = 0;
};

enum class InvalidPolicy {
  JointValid,  // only pixels valid in both prediction and ground truth
  Penalize,    // every ground-truth pixel; a missing prediction counts as depth 0
};

/// MAE / RMSE in millimeters and the fraction of pixels with
/// max(pred / gt, gt / pred) < delta (strict). Throws when no pixel qualifies.
MetricsReport depth_metrics(const DepthMap& pred, const DepthMap& gt,
                            InvalidPolicy policy = InvalidPolicy::JointValid);

/// Accumulates several frames into one pooled report (pixel-weighted).
class MetricsAccumulator {
 public:
  void add(const DepthMap& pred, const DepthMap& gt, InvalidPolicy policy);
  MetricsReport report() const;
  std::size_t count() const noexcept { return n_; }

 private:
  double abs_sum_ = 0.0;
  double sq_sum_ = 0.0;
  std::size_t within_[3] = {0, 0, 0};
  std::size_t n_ = 0;
};

/// |pred - gt| in millimeters where gt is valid; +inf where pred is missing.
ScalarField abs_error_mm(const DepthMap& pred, const DepthMap& gt);

/// Fractions of the four ToF/stereo error regions (good = error < tau):
/// r1 ToF good only, r2 both bad, r3 both good, r4 stereo good only.
struct QuadrantStats {
  double r1 = 0.0;
  double r2 = 0.0;
  double r3 = 0.0;
  double r4 = 0.0;
  std::size_t n = 0;
};

/// Pixels valid in both error maps are classified.
QuadrantStats quadrant_analysis(const ScalarField& err_tof, const ScalarField& err_stereo,
                                double tau_mm = 60.0);

/// Accumulates raw quadrant counts over several frames.
class QuadrantAccumulator {
 public:
  void add(const ScalarField& err_tof, const ScalarField& err_stereo, double tau_mm = 60.0);
  QuadrantStats stats() const;

 private:
  std::size_t counts_[4] = {0, 0, 0, 0};
};

/// Fraction of valid labelled pixels whose true level is among the k most
/// probable levels (ties go to the lower level index). Throws for k outside [1, 8].
double dei_accuracy(const dei::DistributionMap& pred, const dei::LabelMap& labels, int k);

/// Same, returning raw counts so callers can pool several frames.
std::pair<std::size_t, std::size_t> dei_hits(const dei::DistributionMap& pred,
                                             const dei::LabelMap& labels, int k);

struct ReportRow {
  std::string scene;
  std::string method;
  MetricsReport metrics;
  QuadrantStats quadrants;
};

/// Column order of the CSV report.
inline constexpr const char* kReportHeader =
    "scene,method,mae_mm,rmse_mm,delta_105,delta_110,delta_125,n_valid,r1,r2,r3,r4";

/// One row per entry in input order, fixed six-decimal formatting. Written to
/// a temporary file and renamed into place. Throws when the path is unwritable.
void emit_report(const std::vector<ReportRow>& rows, const std::filesystem::path& path);

std::string format_row(const ReportRow& row);

}  // namespace tofstereo::eval
