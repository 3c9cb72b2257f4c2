#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "kiteopt/kitecli.hpp"

namespace cli = kiteopt::cli;

namespace {

void add_common(CLI::App* sub, cli::CommandArgs& a, bool wind = true) {
  sub->add_option("config", a.config, "configuration file (JSON); built-in defaults when omitted");
  if (wind) sub->add_option("--wind", a.wind, "reference wind speed [m/s]");
  sub->add_option("--starts", a.starts, "multi-start count");
  sub->add_option("--seed", a.seed, "base seed of the perturbed starts");
  sub->add_option("--n-intervals", a.intervals, "collocation intervals");
  sub->add_option("--out", a.out, "output directory");
  sub->add_flag("--verbose", a.verbose, "progress on standard error");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"kitecli: pumping-cycle trajectory optimization for variable-trim kites"};
  app.require_subcommand(1);
  cli::CommandArgs a;
  std::string params;

  auto* optimize = app.add_subcommand("optimize", "multi-start optimization at one wind speed");
  add_common(optimize, a);

  auto* sweep = app.add_subcommand("sweep", "power curve over a wind grid");
  add_common(sweep, a, false);
  sweep->add_option("--grid", a.grid, "wind grid lo:hi:step [m/s]");

  auto* plot = app.add_subcommand("plot", "SVG plot of a result directory");
  plot->add_option("result", a.result, "result directory with trajectory.csv")->required();
  plot->add_option("--out", a.out, "output SVG file");

  auto* validate = app.add_subcommand("validate", "open-loop replay of a result");
  validate->add_option("result", a.result, "result directory with trajectory.csv")->required();
  validate->add_option("config", a.config, "configuration file used for the result");
  validate->add_option("--wind", a.wind, "wind speed override [m/s]");
  validate->add_option("--out", a.out, "directory for validation.csv");

  auto* sens = app.add_subcommand("sensitivity", "finite-difference sensitivities of the optimized mean power");
  add_common(sens, a);
  sens->add_option("--params", params, "comma-separated parameter names");
  sens->add_option("--rel-step", a.rel_step, "relative half-step");

  auto* guess = app.add_subcommand("guess", "export the initial guess");
  add_common(guess, a);

  auto* config = app.add_subcommand("config", "print the canonical configuration");
  config->add_option("config", a.config, "configuration file");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }
  if (!params.empty()) {
    std::stringstream ss(params);
    for (std::string name; std::getline(ss, name, ',');) {
      if (!name.empty()) a.params.push_back(name);
    }
  }

  if (*optimize) return cli::cmd_optimize(a, std::cerr);
  if (*sweep) return cli::cmd_sweep(a, std::cerr);
  if (*plot) return cli::cmd_plot(a, std::cerr);
  if (*validate) return cli::cmd_validate(a, std::cerr);
  if (*sens) return cli::cmd_sensitivity(a, std::cerr);
  if (*guess) return cli::cmd_guess(a, std::cerr);
  if (*config) return cli::cmd_config(a, std::cout, std::cerr);
  return 1;
}
