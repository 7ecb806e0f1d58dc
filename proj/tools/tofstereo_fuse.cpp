// tofstereo-fuse: on-disk simulate -> stereo -> train -> fuse -> eval pipeline.
// Exit codes: 0 success, 1 usage error, 2 validation, input or gradcheck failure.

#include <cstdio>
#include <exception>
#include <filesystem>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "tofstereo/config.hpp"
#include "tofstereo/gradcheck.hpp"
#include "tofstereo/io.hpp"
#include "tofstereo/pipeline.hpp"

namespace {

namespace fs = std::filesystem;
using namespace tofstereo;

constexpr int kUsage = 1;
constexpr int kFailure = 2;

int run_gradcheck(const std::optional<fs::path>& out, std::uint64_t seed) {
  gradcheck::Options options;
  options.seed = seed;
  const auto results = gradcheck::run_all(options);
  std::string csv = "loss,instances,max_relative_error,tolerance,passed\n";
  bool ok = true;
  for (const auto& r : results) {
    char line[256];
    std::snprintf(line, sizeof line, "%s,%d,%.6e,%.1e,%d\n", r.name.c_str(), r.instances,
                  r.worst_error, options.tolerance, r.passed ? 1 : 0);
    csv += line;
    std::printf("%-18s max rel err %.3e  %s\n", r.name.c_str(), r.worst_error,
                r.passed ? "ok" : "FAILED");
    ok = ok && r.passed;
  }
  if (out) {
    fs::create_directories(*out);
    io::write_text_atomic(*out / "gradcheck.csv", csv);
  }
  return ok ? 0 : kFailure;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ToF + stereo depth fusion with depth error indication"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir;
  std::optional<std::uint64_t> seed;

  auto add_common = [&](CLI::App* cmd, bool config_required) {
    auto* opt = cmd->add_option("--config", config_path, "Pipeline configuration file");
    if (config_required) opt->required();
    cmd->add_option("--out", out_dir, "Output directory (overrides [output] dir)");
    cmd->add_option("--seed", seed, "Corpus seed (overrides [corpus] seed)");
  };

  CLI::App* simulate = app.add_subcommand("simulate", "Render the scene corpus");
  CLI::App* stereo = app.add_subcommand("stereo", "Block-matching stereo on every scene");
  CLI::App* train = app.add_subcommand("train", "Two-stage training of DEI and fusion");
  CLI::App* fuse = app.add_subcommand("fuse", "Fuse every scene with trained parameters");
  CLI::App* eval = app.add_subcommand("eval", "Metrics report over the corpus");
  CLI::App* grad = app.add_subcommand("gradcheck", "Finite-difference gradient checks");
  for (CLI::App* cmd : {simulate, stereo, train, fuse, eval}) add_common(cmd, true);
  add_common(grad, false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kUsage;
  }

  try {
    if (grad->parsed()) {
      std::optional<fs::path> out;
      if (!out_dir.empty()) out = out_dir;
      return run_gradcheck(out, seed.value_or(1));
    }

    config::PipelineConfig cfg = config::load_config(config_path);
    if (seed) cfg.corpus.seed = *seed;
    if (!out_dir.empty()) cfg.output_dir = out_dir;
    cfg.validate();
    const fs::path out = cfg.output_dir;

    if (simulate->parsed()) pipeline::cmd_simulate(cfg, out);
    if (stereo->parsed()) pipeline::cmd_stereo(cfg, out);
    if (train->parsed()) pipeline::cmd_train(cfg, out);
    if (fuse->parsed()) pipeline::cmd_fuse(cfg, out);
    if (eval->parsed()) pipeline::cmd_eval(cfg, out);
    return 0;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "tofstereo-fuse: %s\n", e.what());
    return kFailure;
  }
}
