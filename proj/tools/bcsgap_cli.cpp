#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "bcsgap/bcsgap.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Cutoff BCS gap equation: solve, thermodynamics, verification"};
  app.require_subcommand(1);

  std::string config_path;
  bcsgap::RunOptions opt;
  std::string out_dir;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "JSON run configuration (defaults if omitted)");
    sub->add_option("--out", out_dir, "output directory (overrides outputs.dir)");
    sub->add_flag("--quiet", opt.quiet, "suppress progress messages");
    sub->add_flag("--uncertified", opt.uncertified,
                  "proceed with an uncertified window when alpha < 1 cannot be reached");
  };
  auto* simple = app.add_subcommand("simple", "constant-coupling gap curves Delta1, Delta2");
  auto* solve = app.add_subcommand("solve", "T_c, gap surface and Taylor coefficients v, w");
  auto* thermo = app.add_subcommand("thermo", "Psi(T) curve and specific-heat jump");
  auto* verify = app.add_subcommand("verify", "run the invariant suite and write verify.json");
  for (auto* s : {simple, solve, thermo, verify}) add_common(s);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : static_cast<int>(bcsgap::ExitCode::config_error);
  }
  if (!out_dir.empty()) opt.out_dir = out_dir;

  bcsgap::RunConfig config;
  try {
    if (!config_path.empty()) config = bcsgap::load_config(config_path);
  } catch (const std::exception& e) {
    std::cerr << "error (config): " << e.what() << '\n';
    return static_cast<int>(bcsgap::ExitCode::config_error);
  }

  if (simple->parsed()) return bcsgap::cmd_simple(config, opt);
  if (solve->parsed()) return bcsgap::cmd_solve(config, opt);
  if (thermo->parsed()) return bcsgap::cmd_thermo(config, opt);
  return bcsgap::cmd_verify(config, opt);
}
