#include "cmps/cli.hpp"

#include <CLI11.hpp>

int main(int argc, char** argv) {
  cmps::cli::CliOptions opt;
  CLI::App app{"Variational continuous matrix product states for the Lieb-Liniger gas in a box"};
  app.set_version_flag("--version", std::string(cmps::version));
  app.require_subcommand(1);

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", opt.config, "INI configuration file");
    sub->add_option("--out", opt.out, "output directory (default: io.output_dir, then $CMPS_OUTPUT_DIR)");
    sub->add_option("--threads", opt.threads, "worker thread cap")->check(CLI::PositiveNumber);
    sub->add_option("--seed", opt.seed, "random seed override");
    sub->add_option("--samples", opt.samples, "profile sample count")->check(CLI::Range(2, 10000000));
    sub->add_option("--cuts", opt.cuts, "entanglement cuts: chebyshev:N, uniform:N or x1,x2,...");
  };
  auto* optimize = app.add_subcommand("optimize", "optimize a finite-box state");
  auto* observe = app.add_subcommand("observe", "profiles and entanglement of a checkpoint");
  auto* casimir = app.add_subcommand("casimir", "finite box plus uniform run, boundary energy");
  auto* uniform = app.add_subcommand("uniform", "uniform state in the thermodynamic limit");
  auto* tg = app.add_subcommand("tg-reference", "exact Tonks-Girardeau state");
  for (auto* sub : {optimize, observe, casimir, uniform, tg}) add_common(sub);
  observe->add_option("--checkpoint", opt.checkpoint, "checkpoint file")->required();
  tg->add_option("--particles", opt.particles, "number of particles (D = 2^N)");
  tg->add_option("--points", opt.points, "uniform mesh points");
  tg->add_option("--mu", opt.mu, "chemical potential");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : cmps::cli::config_error;
  }
  cmps::thread_budget() = opt.threads;
  try {
    if (optimize->parsed()) return cmps::cli::cmd_optimize(opt);
    if (observe->parsed()) return cmps::cli::cmd_observe(opt);
    if (casimir->parsed()) return cmps::cli::cmd_casimir(opt);
    if (uniform->parsed()) return cmps::cli::cmd_uniform(opt);
    if (tg->parsed()) return cmps::cli::cmd_tg_reference(opt);
  } catch (const cmps::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return cmps::cli::config_error;
  } catch (const cmps::CheckpointError& e) {
    std::cerr << "checkpoint error: " << e.what() << '\n';
    return cmps::cli::config_error;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return cmps::cli::config_error;
  }
  return cmps::cli::config_error;
}
