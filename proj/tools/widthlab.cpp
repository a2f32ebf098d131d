#include <cstdio>
#include <exception>
#include <string>

#include <CLI11.hpp>

#include "widthlab/experiments.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Random-bottom-layer ReLU width experiments"};
  app.require_subcommand(1);

  std::string run_config, validate_config, out_dir = ".";
  unsigned threads = 0;
  std::uint64_t seed = 0;

  auto* run = app.add_subcommand("run", "run an experiment config");
  run->add_option("--config", run_config, "experiment config (JSON)")->required();
  run->add_option("--out-dir", out_dir, "output directory");
  run->add_option("--threads", threads, "worker threads (0 = available parallelism)");
  auto* seed_opt = run->add_option("--seed", seed, "override the config seed");

  auto* check = app.add_subcommand("validate", "validate an experiment config");
  check->add_option("--config", validate_config, "experiment config (JSON)")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    widthlab::RunOptions opt;
    opt.out_dir = out_dir;
    opt.threads = threads;
    if (*run) {
      if (seed_opt->count() > 0) opt.seed = seed;
      const auto cfg = widthlab::load_config(run_config);
      const auto summary = widthlab::run(cfg, opt);
      std::fprintf(stderr, "%s: wrote %zu files to %s (%.3f s)\n", cfg.kind.c_str(), summary.files.size(),
                   summary.directory.string().c_str(), summary.wall_seconds);
    } else {
      const auto cfg = widthlab::load_config(validate_config);
      widthlab::validate(cfg, opt);
      std::fprintf(stderr, "%s: config ok\n", cfg.kind.c_str());
    }
  } catch (const widthlab::Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return widthlab::exit_code_for(e.code());
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 4;
  }
  return 0;
}
