// Acceptance checks: one PASS/FAIL line per criterion, exit 1 if any fails.
//
//   tofstereo_acceptance --cli <tofstereo-fuse> --data <tests/data> --work <dir>
//                        [--only <n>]...

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <limits>
#include <map>
#include <random>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <Eigen/QR>

#include "tofstereo/config.hpp"
#include "tofstereo/dei.hpp"
#include "tofstereo/eval.hpp"
#include "tofstereo/fusion.hpp"
#include "tofstereo/gradcheck.hpp"
#include "tofstereo/pipeline.hpp"
#include "tofstereo/scenegen.hpp"
#include "tofstereo/stereo.hpp"
#include "tofstereo/tofsim.hpp"

namespace {

namespace fs = std::filesystem;
using namespace tofstereo;
using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

// --- 1. gradient suite -------------------------------------------------------

Outcome gradients() {
  const auto t0 = Clock::now();
  gradcheck::Options o;
  o.instances = 20;
  o.step = 1e-6;
  o.tolerance = 1e-4;
  const auto results = gradcheck::run_all(o);
  const double secs = seconds_since(t0);
  bool ok = secs < 30.0;
  std::string detail;
  for (const auto& r : results) {
    ok = ok && r.passed && r.instances >= 20;
    detail += fmt("%s=%.1e ", r.name.c_str(), r.worst_error);
  }
  return {ok, detail + fmt("(tol 1e-4, 20 instances each, %.1fs < 30s)", secs)};
}

// --- 2. quantization suite ---------------------------------------------------

Outcome quantization() {
  // Error-level bins as (level, lower bound mm, upper bound mm), upper exclusive.
  struct Bin {
    int level;
    double lo, hi;
  };
  const Bin table[] = {{7, 0, 5},   {6, 5, 15},  {5, 15, 25},  {4, 25, 40},
                       {3, 40, 60}, {2, 60, 80}, {1, 80, 100}, {0, 100, 1e300}};
  int mismatches = 0;
  for (int mm = 0; mm <= 200; ++mm) {
    int expected = -1;
    for (const Bin& b : table) {
      if (mm >= b.lo && mm < b.hi) expected = b.level;
    }
    if (dei::quantize_error(mm) != expected) ++mismatches;
  }
  // Bins tile [0, inf): level 7 starts at 0, level 0 is open-ended and each
  // bin starts exactly where the next smaller-error bin ends.
  bool tiles = dei::level_bounds(7).first == 0.0 && std::isinf(dei::level_bounds(0).second);
  for (int l = 0; l < 7; ++l) {
    tiles = tiles && dei::level_bounds(l).first == dei::level_bounds(l + 1).second;
  }
  for (int l = 0; l < 8; ++l) {
    tiles = tiles && dei::level_bounds(l).first < dei::level_bounds(l).second;
  }
  // A boundary value belongs to the bin it opens (half-open [lo, hi)).
  const std::map<double, int> boundary = {{5, 6}, {15, 5}, {25, 4}, {40, 3},
                                          {60, 2}, {80, 1}, {100, 0}};
  int boundary_bad = 0;
  for (const auto& [mm, level] : boundary) {
    if (dei::quantize_error(mm) != level) ++boundary_bad;
    if (dei::quantize_error(std::nextafter(mm, 0.0)) != level + 1) ++boundary_bad;
  }
  return {mismatches == 0 && tiles && boundary_bad == 0,
          fmt("201 integer values, %d mismatches; bins tile: %s; boundary errors: %d",
              mismatches, tiles ? "yes" : "no", boundary_bad)};
}

// --- 3. ToF simulator fidelity ------------------------------------------------

// Mean signed error (mm) of a fronto plane at `depth` under `noise`.
double plane_error_mm(double depth, double sot_deg, const tofsim::ToFNoiseParams& noise,
                      bool absolute, int side) {
  DepthMap gt(side, side, static_cast<float>(depth));
  geometry::AngleMap sot(side, side, sot_deg);
  Map<float> refl(side, side, 0.5f);
  const tofsim::ToFFrame f = tofsim::simulate_tof(gt, sot, refl, noise, tofsim::ToFParams{});
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < gt.size(); ++i) {
    if (!f.depth.is_valid(i)) continue;
    const double e = (double(f.depth[i]) - double(gt[i])) * 1000.0;
    sum += absolute ? std::abs(e) : e;
    ++n;
  }
  return n == 0 ? std::numeric_limits<double>::quiet_NaN() : sum / double(n);
}

// Least-squares fit e(d) = a sin(2 pi d / P) + b cos(2 pi d / P) + c for a
// given period; returns (residual, amplitude).
std::pair<double, double> fit_sinusoid(const std::vector<double>& d, const std::vector<double>& e,
                                       double period) {
  Eigen::MatrixXd A(d.size(), 3);
  Eigen::VectorXd y(d.size());
  for (std::size_t i = 0; i < d.size(); ++i) {
    const double t = 2.0 * M_PI * d[i] / period;
    A(Eigen::Index(i), 0) = std::sin(t);
    A(Eigen::Index(i), 1) = std::cos(t);
    A(Eigen::Index(i), 2) = 1.0;
    y[Eigen::Index(i)] = e[i];
  }
  const Eigen::Vector3d coef = A.colPivHouseholderQr().solve(y);
  return {(A * coef - y).squaredNorm(), std::hypot(coef[0], coef[1])};
}

Outcome tof_fidelity() {
  const auto t0 = Clock::now();
  // Distance sweep with only the harmonic term.
  tofsim::ToFNoiseParams harmonic = tofsim::ToFNoiseParams::zero();
  harmonic.harmonic_amp_mm = 8.0;
  harmonic.harmonic_period_m = 0.75;
  std::vector<double> dist, err;
  for (int k = 0; k <= 250; ++k) {
    const double d = 0.5 + 0.01 * k;
    dist.push_back(d);
    err.push_back(plane_error_mm(d, 90.0, harmonic, false, 16));
  }
  double best_period = 0.0, best_res = std::numeric_limits<double>::infinity(), best_amp = 0.0;
  for (double p = 0.30; p <= 1.50; p += 0.0005) {
    const auto [res, amp] = fit_sinusoid(dist, err, p);
    if (res < best_res) {
      best_res = res;
      best_period = p;
      best_amp = amp;
    }
  }
  const double period_rel = std::abs(best_period - 0.75) / 0.75;
  const double amp_rel = std::abs(best_amp - 8.0) / 8.0;

  // Angle sweep with only the angle term; fresh noise seed per angle.
  tofsim::ToFNoiseParams angle = tofsim::ToFNoiseParams::zero();
  angle.angle_err0_mm = tofsim::ToFNoiseParams{}.angle_err0_mm;
  angle.angle_theta0_deg = tofsim::ToFNoiseParams{}.angle_theta0_deg;
  std::vector<double> mae;
  for (int deg = 10; deg <= 90; deg += 5) {
    angle.seed = std::uint64_t(deg);
    mae.push_back(plane_error_mm(1.5, deg, angle, true, 96));
  }
  bool monotone = true;
  for (std::size_t i = 1; i < mae.size(); ++i) monotone = monotone && mae[i] <= mae[i - 1];
  const double secs = seconds_since(t0);

  return {period_rel <= 0.05 && amp_rel <= 0.10 && monotone && secs < 60.0,
          fmt("period %.4f m (err %.2f%% <= 5%%), amplitude %.3f mm (err %.2f%% <= 10%%); "
              "angle MAE %.2f mm @10deg -> %.2f mm @90deg monotone: %s; %.1fs < 60s",
              best_period, 100 * period_rel, best_amp, 100 * amp_rel, mae.front(), mae.back(),
              monotone ? "yes" : "no", secs)};
}

// --- 4. stereo sanity ----------------------------------------------------------

Outcome stereo_sanity() {
  const scenegen::CameraModel cam;
  const stereo::StereoParams sp;
  const double fb = cam.focal_px * cam.baseline_m;
  const int half = sp.window / 2;
  double worst_disp = 1.0, worst_depth = 1.0;
  for (int k = 0; k < 10; ++k) {
    const int true_disp = 6 + k;  // 2.5 m .. 1.0 m
    const double z = fb / true_disp;
    scenegen::Primitive plane;
    plane.pose.center = Eigen::Vector3d(0.0, 0.0, z);
    plane.texture.kind = scenegen::TextureKind::Noise;
    plane.texture.scale_m = 0.04;
    plane.texture.contrast = 0.9;
    plane.texture.octaves = 3;
    plane.texture.seed = 100 + std::uint64_t(k);
    scenegen::Scene scene;
    scene.primitives.push_back(plane);
    const auto [left, right] = scenegen::render_stereo_pair(scene, cam);
    const auto cv = stereo::compute_cost_volume(left, right, sp.d_max, sp.window);
    const auto disp = stereo::wta_disparity(cv, sp.pkr_threshold);
    const auto depth = stereo::depth_from_disparity(disp, cam, sp.min_disparity);

    std::size_t n = 0, disp_ok = 0, depth_ok = 0;
    for (int y = half; y < cam.height - half; ++y) {
      for (int x = half + true_disp; x < cam.width - half; ++x) {
        ++n;
        if (disp.is_valid(x, y) && std::abs(disp(x, y) - true_disp) <= 1.0) ++disp_ok;
        if (depth.is_valid(x, y) && std::abs(depth(x, y) - z) <= 0.02 * z) ++depth_ok;
      }
    }
    worst_disp = std::min(worst_disp, double(disp_ok) / double(n));
    worst_depth = std::min(worst_depth, double(depth_ok) / double(n));
  }
  return {worst_disp >= 0.95 && worst_depth >= 0.90,
          fmt("10 planes; worst plane: %.2f%% interior pixels within 1 px (>= 95%%), "
              "%.2f%% depth within 2%% (>= 90%%)",
              100 * worst_disp, 100 * worst_depth)};
}

// --- 5 and 6. fusion dominance and DEI learnability -----------------------------

struct CorpusRun {
  double seconds = 0.0;
  eval::MetricsReport tof, stereo, sf, oracle, select, blend;
  eval::MetricsReport heldout_sf, heldout_select;
  eval::QuadrantStats quadrants;
  double top1 = 0.0, top2 = 0.0, top3 = 0.0, majority = 0.0;
};

CorpusRun run_corpus(const fs::path& config_path) {
  const auto t0 = Clock::now();
  const config::PipelineConfig cfg = config::load_config(config_path);
  cfg.validate();
  std::vector<fusion::FusionSample> samples;
  for (int i = 0; i < cfg.corpus.count; ++i) {
    const pipeline::SimulatedScene s = pipeline::simulate_scene(cfg, i);
    const pipeline::StereoResult st = pipeline::run_stereo(s.left, s.right, cfg);
    samples.push_back(pipeline::make_sample(cfg, s.gt, s.tof, s.sot, st.depth, st.features));
  }
  const auto [train_idx, val_idx] = pipeline::split_indices(cfg.corpus.count, cfg.corpus.val_fraction);
  std::vector<fusion::FusionSample> train, val;
  for (int i : train_idx) train.push_back(samples[std::size_t(i)]);
  for (int i : val_idx) val.push_back(samples[std::size_t(i)]);
  const fusion::TwoStageResult model = fusion::train_two_stage(train, val, cfg.train);

  const auto P = eval::InvalidPolicy::Penalize;
  eval::MetricsAccumulator tof, stereo, sf, oracle, select, blend, h_sf, h_select;
  eval::QuadrantAccumulator quad;
  const std::set<int> heldout(val_idx.begin(), val_idx.end());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const fusion::FusionSample& s = samples[i];
    const pipeline::FusedScene f = pipeline::fuse_scene(s, model.tof, model.stereo, model.blend);
    ScalarField e_tof(s.gt.width(), s.gt.height()), e_stereo(s.gt.width(), s.gt.height());
    for (std::size_t p = 0; p < s.gt.size(); ++p) {
      if (!s.gt.is_valid(p)) continue;
      e_tof.set(p, dei::level_midpoint(s.tof_tile.labels[p]));
      e_stereo.set(p, dei::level_midpoint(s.stereo_tile.labels[p]));
    }
    tof.add(s.tof, s.gt, P);
    stereo.add(s.stereo, s.gt, P);
    sf.add(f.simple, s.gt, P);
    oracle.add(fusion::fuse_select(s.tof, s.stereo, e_tof, e_stereo), s.gt, P);
    select.add(f.select, s.gt, P);
    blend.add(f.blend, s.gt, P);
    if (heldout.count(int(i))) {
      h_sf.add(f.simple, s.gt, P);
      h_select.add(f.select, s.gt, P);
    }
    quad.add(eval::abs_error_mm(s.tof, s.gt), eval::abs_error_mm(s.stereo, s.gt));
  }

  CorpusRun r;
  r.tof = tof.report();
  r.stereo = stereo.report();
  r.sf = sf.report();
  r.oracle = oracle.report();
  r.select = select.report();
  r.blend = blend.report();
  r.heldout_sf = h_sf.report();
  r.heldout_select = h_select.report();
  r.quadrants = quad.stats();

  std::vector<dei::DEITile> val_tiles;
  std::array<std::size_t, dei::kLevels> counts{};
  std::size_t total = 0;
  for (const auto& s : val) {
    val_tiles.push_back(s.tof_tile);
    for (std::size_t p = 0; p < s.tof_tile.labels.size(); ++p) {
      if (!s.tof_tile.labels.is_valid(p)) continue;
      ++counts[std::size_t(s.tof_tile.labels[p])];
      ++total;
    }
  }
  r.top1 = dei::tiles_accuracy(model.tof, val_tiles, 1);
  r.top2 = dei::tiles_accuracy(model.tof, val_tiles, 2);
  r.top3 = dei::tiles_accuracy(model.tof, val_tiles, 3);
  r.majority = double(*std::max_element(counts.begin(), counts.end())) / double(total);
  r.seconds = seconds_since(t0);
  return r;
}

Outcome fusion_dominance(const CorpusRun& r) {
  const bool a = r.oracle.mae_mm <= r.tof.mae_mm && r.oracle.mae_mm <= r.stereo.mae_mm &&
                 r.oracle.mae_mm <= r.sf.mae_mm;
  const double reduction = 1.0 - r.select.mae_mm / r.sf.mae_mm;
  const bool b = reduction >= 0.10;
  const double complementary = r.quadrants.r1 + r.quadrants.r3 + r.quadrants.r4;
  const bool c = complementary >= 0.85;
  const bool t = r.seconds < 600.0;
  return {a && b && c && t,
          fmt("(a) MAE oracle %.2f <= tof %.2f, stereo %.2f, sf %.2f: %s; "
              "(b) select %.2f vs sf %.2f = %.1f%% reduction (>= 10%%): %s "
              "[held-out only: %.1f%%; blend %.2f]; "
              "(c) r1+r3+r4 = %.3f (>= 0.85): %s; %.0fs < 600s",
              r.oracle.mae_mm, r.tof.mae_mm, r.stereo.mae_mm, r.sf.mae_mm, a ? "yes" : "no",
              r.select.mae_mm, r.sf.mae_mm, 100 * reduction, b ? "yes" : "no",
              100 * (1.0 - r.heldout_select.mae_mm / r.heldout_sf.mae_mm), r.blend.mae_mm,
              complementary, c ? "yes" : "no", r.seconds)};
}

Outcome dei_learnability(const CorpusRun& r) {
  const bool level = r.top1 >= 0.70;
  const bool margin = r.top1 - r.majority >= 0.25;
  const bool monotone = r.top1 <= r.top2 && r.top2 <= r.top3;
  return {level && margin && monotone,
          fmt("held-out TDEI top-1 %.3f (>= 0.70), majority %.3f (margin %.1f pts >= 25), "
              "top-1/2/3 %.3f/%.3f/%.3f monotone: %s",
              r.top1, r.majority, 100 * (r.top1 - r.majority), r.top1, r.top2, r.top3,
              monotone ? "yes" : "no")};
}

// --- 7. metrics exactness -----------------------------------------------------------

struct Brute {
  long double abs_sum = 0, sq_sum = 0;
  std::size_t within[3] = {0, 0, 0};
  std::size_t n = 0;
};

Brute brute_force(const DepthMap& pred, const DepthMap& gt, bool penalize) {
  const double thresholds[3] = {1.05, 1.10, 1.25};
  Brute b;
  for (int y = 0; y < gt.height(); ++y) {
    for (int x = 0; x < gt.width(); ++x) {
      if (!gt.is_valid(x, y)) continue;
      const bool have = pred.is_valid(x, y);
      if (!have && !penalize) continue;
      const long double g = gt(x, y);
      const long double p = have ? (long double)pred(x, y) : 0.0L;
      const long double e = std::fabs(p - g) * 1000.0L;
      b.abs_sum += e;
      b.sq_sum += e * e;
      ++b.n;
      if (have) {
        const long double ratio = std::max(p / g, g / p);
        for (int k = 0; k < 3; ++k) b.within[k] += ratio < thresholds[k] ? 1 : 0;
      }
    }
  }
  return b;
}

bool close_rel(double a, double b, double tol) {
  return std::abs(a - b) <= tol * std::max({std::abs(a), std::abs(b), 1e-300});
}

Outcome metrics_exactness() {
  std::mt19937_64 gen(2024);
  std::uniform_real_distribution<double> depth(0.3, 4.0), noise(-0.2, 0.2), unit(0.0, 1.0);
  int oracle_bad = 0, property_bad = 0;
  double worst = 0.0;
  for (int inst = 0; inst < 100; ++inst) {
    const int w = 8 + int(unit(gen) * 40), h = 8 + int(unit(gen) * 30);
    DepthMap gt(w, h), pred(w, h);
    for (std::size_t i = 0; i < gt.size(); ++i) {
      const double z = depth(gen);
      if (unit(gen) > 0.05) gt.set(i, float(z));
      const double scale = unit(gen) < 0.3 ? 0.02 : 1.0;
      if (unit(gen) > 0.1) pred.set(i, float(std::max(0.05, z + scale * noise(gen))));
    }
    for (bool penalize : {false, true}) {
      const auto policy = penalize ? eval::InvalidPolicy::Penalize : eval::InvalidPolicy::JointValid;
      const eval::MetricsReport m = eval::depth_metrics(pred, gt, policy);
      const Brute b = brute_force(pred, gt, penalize);
      const double n = double(b.n);
      const double mae = double(b.abs_sum / n);
      const double rmse = double(std::sqrt(b.sq_sum / n));
      const double d[3] = {double(b.within[0]) / n, double(b.within[1]) / n,
                           double(b.within[2]) / n};
      worst = std::max({worst, std::abs(m.mae_mm - mae) / mae, std::abs(m.rmse_mm - rmse) / rmse});
      if (m.n_valid != b.n || !close_rel(m.mae_mm, mae, 1e-12) || !close_rel(m.rmse_mm, rmse, 1e-12) ||
          !close_rel(m.delta_105, d[0], 1e-12) || !close_rel(m.delta_110, d[1], 1e-12) ||
          !close_rel(m.delta_125, d[2], 1e-12)) {
        ++oracle_bad;
      }
      if (!(m.rmse_mm >= m.mae_mm) || !(m.delta_105 <= m.delta_110) ||
          !(m.delta_110 <= m.delta_125)) {
        ++property_bad;
      }
    }
  }
  return {oracle_bad == 0 && property_bad == 0,
          fmt("100 instances x 2 policies: oracle mismatches %d (worst rel %.1e, tol 1e-12), "
              "RMSE>=MAE / delta monotonicity violations %d",
              oracle_bad, worst, property_bad)};
}

// --- 8. determinism -------------------------------------------------------------------

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

Outcome determinism(const fs::path& cli, const fs::path& config, const fs::path& work) {
  const fs::path runs[2] = {work / "run_a", work / "run_b"};
  for (const fs::path& out : runs) {
    fs::remove_all(out);
    for (const char* stage : {"simulate", "stereo", "train", "fuse", "eval"}) {
      const std::string cmd = "\"" + cli.string() + "\" " + stage + " --config \"" +
                              config.string() + "\" --out \"" + out.string() + "\" > \"" +
                              (work / "cli.log").string() + "\" 2>&1";
      if (std::system(cmd.c_str()) != 0) {
        return {false, fmt("stage '%s' failed (see %s)", stage, (work / "cli.log").c_str())};
      }
    }
  }
  std::size_t compared = 0, differing = 0;
  bool have_reports = true;
  for (const char* name : {"report.csv", "summary.csv"}) {
    have_reports = have_reports && fs::exists(runs[0] / name);
  }
  for (const auto& entry : fs::recursive_directory_iterator(runs[0])) {
    if (!entry.is_regular_file()) continue;
    const std::string ext = entry.path().extension().string();
    if (ext != ".csv" && ext != ".pfm") continue;
    const fs::path other = runs[1] / fs::relative(entry.path(), runs[0]);
    ++compared;
    if (!fs::exists(other) || slurp(entry.path()) != slurp(other)) ++differing;
  }
  return {have_reports && compared > 0 && differing == 0,
          fmt("two full CLI runs: %zu CSV/PFM files compared, %zu differ", compared, differing)};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance checks"};
  std::string cli, data, work;
  std::vector<int> only;
  app.add_option("--cli", cli, "Path to the tofstereo-fuse binary")->required();
  app.add_option("--data", data, "Directory holding acceptance.cfg and small.cfg")->required();
  app.add_option("--work", work, "Scratch directory")->required();
  app.add_option("--only", only, "Run only these criteria");
  CLI11_PARSE(app, argc, argv);

  const fs::path data_dir(data);
  const fs::path work_dir(work);
  fs::create_directories(work_dir);
  auto wanted = [&](int n) { return only.empty() || std::count(only.begin(), only.end(), n) > 0; };

  int failures = 0;
  auto report = [&](int n, const char* name, const std::function<Outcome()>& check) {
    if (!wanted(n)) return;
    Outcome o;
    try {
      o = check();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    std::printf("%s criterion %d (%s): %s\n", o.pass ? "PASS" : "FAIL", n, name, o.detail.c_str());
    std::fflush(stdout);
    if (!o.pass) ++failures;
  };

  report(1, "gradient suite", gradients);
  report(2, "quantization suite", quantization);
  report(3, "ToF simulator fidelity", tof_fidelity);
  report(4, "stereo sanity", stereo_sanity);
  if (wanted(5) || wanted(6)) {
    std::optional<CorpusRun> run;
    std::string error;
    try {
      run = run_corpus(data_dir / "acceptance.cfg");
    } catch (const std::exception& e) {
      error = e.what();
    }
    auto from_run = [&](Outcome (*f)(const CorpusRun&)) {
      return [&, f] { return run ? f(*run) : Outcome{false, "error: " + error}; };
    };
    report(5, "fusion dominance", from_run(fusion_dominance));
    report(6, "DEI learnability", from_run(dei_learnability));
  }
  report(7, "metrics exactness", metrics_exactness);
  report(8, "determinism", [&] { return determinism(cli, data_dir / "small.cfg", work_dir); });
  return failures == 0 ? 0 : 1;
}
