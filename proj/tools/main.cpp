#include <CLI11.hpp>
#include <cstdlib>
#include <iostream>

#include "commands.hpp"
#include "vildistill/common.hpp"

namespace {

std::filesystem::path default_run_root() {
  if (const char* env = std::getenv("VILDISTILL_RUN_ROOT")) return env;
  return "runs";
}

void add_common_options(CLI::App* cmd, vildistill::tools::CliOptions& opts,
                        bool config_required) {
  auto* config = cmd->add_option("--config", opts.config_path, "configuration file");
  if (config_required) config->required();
  cmd->add_option("--run-dir", opts.run_root,
                  "run-directory root (default: $VILDISTILL_RUN_ROOT or ./runs)");
  cmd->add_option("--name", opts.run_name, "run name under the run-directory root");
  cmd->add_option("--setting", opts.setting, "label-space setting: closed|partial|open")
      ->check(CLI::IsMember({"closed", "partial", "open"}));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"source-free domain adaptation by distilling a frozen vision-language model"};
  app.require_subcommand(1);

  vildistill::tools::CliOptions opts;
  opts.run_root = default_run_root();

  CLI::App* pretrain = app.add_subcommand("pretrain", "train the source model");
  add_common_options(pretrain, opts, true);

  CLI::App* adapt = app.add_subcommand("adapt", "run the two-step adaptation loop");
  add_common_options(adapt, opts, true);
  adapt->add_option("--ablate", opts.ablate, "disable a component: mce|customize|mi")
      ->delimiter(',');

  CLI::App* eval = app.add_subcommand("eval", "write report tables and plots");
  add_common_options(eval, opts, true);
  eval->add_option("--checkpoint", opts.checkpoint,
                   "checkpoint directory (default: the run's adapted_ckpt)");
  eval->add_option("--report", opts.reports, "reports: accuracy|confusion|mmd|sweep")
      ->required()
      ->delimiter(',');

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);  // prints help, exits 0
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << "\n";
    return 2;
  }

  try {
    if (pretrain->parsed()) return vildistill::tools::cmd_pretrain(opts);
    if (adapt->parsed()) return vildistill::tools::cmd_adapt(opts);
    return vildistill::tools::cmd_eval(opts);
  } catch (const vildistill::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "invalid input: " << e.what() << "\n";
    return 2;
  } catch (const vildistill::MissingArtifact& e) {
    std::cerr << "missing artifact: " << e.what() << "\n";
    return 3;
  } catch (const vildistill::NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 4;
  } catch (const std::domain_error& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
