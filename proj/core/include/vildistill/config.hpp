#pragma once

#include <filesystem>
#include <string>

#include "vildistill/adaptation.hpp"
#include "vildistill/data.hpp"
#include "vildistill/target_model.hpp"
#include "vildistill/vil_backend.hpp"

namespace vildistill {

struct EvaluationConfig {
  double mmd_bandwidth = 0.0;      // <= 0 selects the median heuristic
  double entropy_threshold = -1.0; // < 0 selects the median entropy
  int sweep_points = 11;
};

/// Everything one run needs, grouped by the owning module. Parsed from a
/// sectioned key=value file; unknown sections/keys and malformed values
/// raise ConfigError naming the offending field.
struct AppConfig {
  ShiftSpec data;
  int partial_keep_classes = 6;
  int open_known_classes = 6;

  std::string vil_backend_name = "toy";
  ToyVilConfig vil;

  TargetModelConfig target_arch;  // input_dim/class_count mirrored from data
  SourcePretrainConfig source;

  AdaptationConfig adaptation;
  bool record_trajectory = true;

  EvaluationConfig evaluation;

  void validate() const;
};

AppConfig default_config();
AppConfig parse_config_text(const std::string& text, const std::string& origin);
AppConfig load_config(const std::filesystem::path& file);

/// Serializes every field back into the sectioned key=value format; the
/// output re-parses to an identical config (run-directory snapshot).
std::string render_config(const AppConfig& cfg);

}  // namespace vildistill
