#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace vildistill::tools {

struct CliOptions {
  std::filesystem::path config_path;
  std::filesystem::path run_root;
  std::string run_name = "default";
  std::string setting = "closed";     // closed | partial | open
  std::vector<std::string> ablate;    // subset of {mce, customize, mi}
  std::filesystem::path checkpoint;   // eval: overrides the adapted checkpoint
  std::vector<std::string> reports;   // eval: accuracy | confusion | mmd | sweep

  std::filesystem::path run_dir() const { return run_root / run_name; }
};

int cmd_pretrain(const CliOptions& opts);
int cmd_adapt(const CliOptions& opts);
int cmd_eval(const CliOptions& opts);

}  // namespace vildistill::tools
