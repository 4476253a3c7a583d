#include <optional>
#include <string>

#include <CLI11.hpp>

#include "kpoqa/commands.hpp"

int main(int argc, char** argv) {
  CLI::App app{"KPO annealing spectroscopy: exact oracle, protocol sweeps and adiabatic-condition estimates"};
  app.set_version_flag("--version", kpoqa::version());
  app.require_subcommand(1);

  std::string config_path;
  kpoqa::CommandOptions options;
  auto add = [&](const char* name, const char* help, bool config_required) {
    CLI::App* sub = app.add_subcommand(name, help);
    auto* opt = sub->add_option("--config", config_path, "run configuration (JSON)");
    if (config_required) opt->required();
    sub->add_option("--out", options.out_dir, "output directory")->capture_default_str();
    sub->add_option("--threads", options.threads, "worker threads (overrides the config)")->check(CLI::NonNegativeNumber);
    return sub;
  };
  add("oracle", "exact spectrum, gap, transition element and metric value", true);
  add("sweep", "run the drive protocol over the (omega, tau) grid; write signal and spectrum CSVs", true);
  add("estimate", "sweep, extract the Rabi dispersion and estimate the adiabatic condition", true);
  add("validate", "invariant and analytic-oracle checks", false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kpoqa::exit_config;
  }
  const std::string command = app.get_subcommands().front()->get_name();
  std::optional<std::string> path;
  if (!config_path.empty()) path = config_path;
  return kpoqa::run_command(command, path, options);
}
