#include "vildistill/config.hpp"

#include <cctype>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace vildistill {

namespace {

std::string trim(const std::string& s) {
  size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

struct FieldBinder {
  std::map<std::string, std::function<void(const std::string&, const std::string&)>> setters;

  void bind_int(const std::string& key, int* target) {
    setters[key] = [target](const std::string& field, const std::string& value) {
      try {
        size_t used = 0;
        const int v = std::stoi(value, &used);
        if (used != value.size()) throw std::invalid_argument("trailing characters");
        *target = v;
      } catch (const std::exception&) {
        throw ConfigError(field + ": expected integer, got '" + value + "'");
      }
    };
  }

  void bind_u64(const std::string& key, uint64_t* target) {
    setters[key] = [target](const std::string& field, const std::string& value) {
      try {
        size_t used = 0;
        const unsigned long long v = std::stoull(value, &used);
        if (used != value.size()) throw std::invalid_argument("trailing characters");
        *target = v;
      } catch (const std::exception&) {
        throw ConfigError(field + ": expected unsigned integer, got '" + value + "'");
      }
    };
  }

  void bind_double(const std::string& key, double* target) {
    setters[key] = [target](const std::string& field, const std::string& value) {
      try {
        size_t used = 0;
        const double v = std::stod(value, &used);
        if (used != value.size()) throw std::invalid_argument("trailing characters");
        *target = v;
      } catch (const std::exception&) {
        throw ConfigError(field + ": expected number, got '" + value + "'");
      }
    };
  }

  void bind_bool(const std::string& key, bool* target) {
    setters[key] = [target](const std::string& field, const std::string& value) {
      if (value == "true" || value == "1") {
        *target = true;
      } else if (value == "false" || value == "0") {
        *target = false;
      } else {
        throw ConfigError(field + ": expected true/false, got '" + value + "'");
      }
    };
  }

  void bind_string(const std::string& key, std::string* target) {
    setters[key] = [target](const std::string&, const std::string& value) { *target = value; };
  }
};

std::map<std::string, FieldBinder> make_binders(AppConfig& cfg) {
  std::map<std::string, FieldBinder> sections;

  FieldBinder& data = sections["data"];
  data.bind_int("classes", &cfg.data.class_count);
  data.bind_int("latent_dim", &cfg.data.latent_dim);
  data.bind_int("input_dim", &cfg.data.input_dim);
  data.bind_double("prototype_scale", &cfg.data.prototype_scale);
  data.bind_double("rotation_angle", &cfg.data.rotation_angle);
  data.bind_double("scale_min", &cfg.data.scale_min);
  data.bind_double("scale_max", &cfg.data.scale_max);
  data.bind_double("noise_scale", &cfg.data.noise_scale);
  data.bind_int("samples_per_class", &cfg.data.samples_per_class);
  data.bind_u64("seed", &cfg.data.seed);
  data.bind_int("partial_keep_classes", &cfg.partial_keep_classes);
  data.bind_int("open_known_classes", &cfg.open_known_classes);

  FieldBinder& vil = sections["vil"];
  vil.bind_string("backend", &cfg.vil_backend_name);
  vil.bind_int("context_length", &cfg.vil.context_length);
  vil.bind_double("encoder_noise", &cfg.vil.encoder_noise);
  vil.bind_double("token_noise", &cfg.vil.token_noise);
  vil.bind_double("ctx_gain", &cfg.vil.ctx_gain);
  vil.bind_double("cls_mix_noise", &cfg.vil.cls_mix_noise);
  vil.bind_double("logit_scale", &cfg.vil.logit_scale);
  vil.bind_u64("seed", &cfg.vil.seed);

  FieldBinder& target = sections["target_model"];
  target.bind_int("feature_dim", &cfg.target_arch.feature_dim);
  target.bind_int("bottleneck_dim", &cfg.target_arch.bottleneck_dim);
  target.bind_double("classifier_scale", &cfg.target_arch.classifier_scale);
  target.bind_u64("init_seed", &cfg.target_arch.init_seed);

  FieldBinder& source = sections["source"];
  source.bind_int("epochs", &cfg.source.epochs);
  source.bind_double("lr", &cfg.source.lr);
  source.bind_double("momentum", &cfg.source.momentum);
  source.bind_int("batch_size", &cfg.source.batch_size);
  source.bind_double("label_smoothing", &cfg.source.label_smoothing);
  source.bind_double("holdout_fraction", &cfg.source.holdout_fraction);
  source.bind_u64("seed", &cfg.source.seed);

  FieldBinder& adapt = sections["adaptation"];
  adapt.bind_double("alpha", &cfg.adaptation.alpha);
  adapt.bind_double("beta", &cfg.adaptation.beta);
  adapt.bind_double("lambda", &cfg.adaptation.lambda);
  adapt.bind_double("tau", &cfg.adaptation.tau);
  adapt.bind_int("top_n", &cfg.adaptation.top_n);
  adapt.bind_int("epochs", &cfg.adaptation.epochs);
  adapt.bind_int("batch_size", &cfg.adaptation.batch_size);
  adapt.bind_double("lr_target", &cfg.adaptation.lr_target);
  adapt.bind_double("lr_prompt", &cfg.adaptation.lr_prompt);
  adapt.bind_double("momentum", &cfg.adaptation.momentum);
  adapt.bind_u64("seed", &cfg.adaptation.seed);
  adapt.bind_bool("symmetrize_joint", &cfg.adaptation.symmetrize_joint);
  adapt.bind_bool("record_trajectory", &cfg.record_trajectory);

  FieldBinder& eval = sections["evaluation"];
  eval.bind_double("mmd_bandwidth", &cfg.evaluation.mmd_bandwidth);
  eval.bind_double("entropy_threshold", &cfg.evaluation.entropy_threshold);
  eval.bind_int("sweep_points", &cfg.evaluation.sweep_points);

  return sections;
}

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

void AppConfig::validate() const {
  data.validate();
  vil.validate();
  target_arch.validate();
  source.validate();
  adaptation.validate(data.class_count);
  if (partial_keep_classes < 1 || partial_keep_classes > data.class_count) {
    throw ConfigError("data.partial_keep_classes: must be in [1, classes]");
  }
  if (open_known_classes < 1 || open_known_classes > data.class_count) {
    throw ConfigError("data.open_known_classes: must be in [1, classes]");
  }
  if (target_arch.input_dim != data.input_dim || target_arch.class_count != data.class_count) {
    throw ConfigError("target_model: input_dim/class_count must mirror the data section");
  }
  if (evaluation.sweep_points < 2) throw ConfigError("evaluation.sweep_points: must be >= 2");
}

AppConfig default_config() {
  AppConfig cfg;
  cfg.target_arch.input_dim = cfg.data.input_dim;
  cfg.target_arch.class_count = cfg.data.class_count;
  return cfg;
}

AppConfig parse_config_text(const std::string& text, const std::string& origin) {
  AppConfig cfg = default_config();
  auto sections = make_binders(cfg);

  std::istringstream in(text);
  std::string line;
  std::string section;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string stripped = trim(line);
    if (stripped.empty() || stripped[0] == '#' || stripped[0] == ';') continue;
    if (stripped.front() == '[') {
      if (stripped.back() != ']') {
        throw ConfigError(origin + ":" + std::to_string(line_no) + ": unterminated section header");
      }
      section = trim(stripped.substr(1, stripped.size() - 2));
      if (!sections.count(section)) {
        throw ConfigError(origin + ":" + std::to_string(line_no) + ": unknown section [" +
                          section + "]");
      }
      continue;
    }
    const auto eq = stripped.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(origin + ":" + std::to_string(line_no) + ": expected key = value");
    }
    if (section.empty()) {
      throw ConfigError(origin + ":" + std::to_string(line_no) + ": key outside any section");
    }
    const std::string key = trim(stripped.substr(0, eq));
    const std::string value = trim(stripped.substr(eq + 1));
    auto& binder = sections.at(section);
    const auto it = binder.setters.find(key);
    if (it == binder.setters.end()) {
      throw ConfigError(origin + ":" + std::to_string(line_no) + ": unknown key '" + key +
                        "' in section [" + section + "]");
    }
    it->second("[" + section + "] " + key, value);
  }

  // The target architecture mirrors the data dims; they are not separate
  // knobs in the file.
  cfg.target_arch.input_dim = cfg.data.input_dim;
  cfg.target_arch.class_count = cfg.data.class_count;
  cfg.validate();
  return cfg;
}

AppConfig load_config(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw ConfigError("config file not found: " + file.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config_text(buf.str(), file.string());
}

std::string render_config(const AppConfig& cfg) {
  std::ostringstream out;
  out << "[data]\n";
  out << "classes = " << cfg.data.class_count << "\n";
  out << "latent_dim = " << cfg.data.latent_dim << "\n";
  out << "input_dim = " << cfg.data.input_dim << "\n";
  out << "prototype_scale = " << fmt_double(cfg.data.prototype_scale) << "\n";
  out << "rotation_angle = " << fmt_double(cfg.data.rotation_angle) << "\n";
  out << "scale_min = " << fmt_double(cfg.data.scale_min) << "\n";
  out << "scale_max = " << fmt_double(cfg.data.scale_max) << "\n";
  out << "noise_scale = " << fmt_double(cfg.data.noise_scale) << "\n";
  out << "samples_per_class = " << cfg.data.samples_per_class << "\n";
  out << "seed = " << cfg.data.seed << "\n";
  out << "partial_keep_classes = " << cfg.partial_keep_classes << "\n";
  out << "open_known_classes = " << cfg.open_known_classes << "\n";
  out << "\n[vil]\n";
  out << "backend = " << cfg.vil_backend_name << "\n";
  out << "context_length = " << cfg.vil.context_length << "\n";
  out << "encoder_noise = " << fmt_double(cfg.vil.encoder_noise) << "\n";
  out << "token_noise = " << fmt_double(cfg.vil.token_noise) << "\n";
  out << "ctx_gain = " << fmt_double(cfg.vil.ctx_gain) << "\n";
  out << "cls_mix_noise = " << fmt_double(cfg.vil.cls_mix_noise) << "\n";
  out << "logit_scale = " << fmt_double(cfg.vil.logit_scale) << "\n";
  out << "seed = " << cfg.vil.seed << "\n";
  out << "\n[target_model]\n";
  out << "feature_dim = " << cfg.target_arch.feature_dim << "\n";
  out << "bottleneck_dim = " << cfg.target_arch.bottleneck_dim << "\n";
  out << "classifier_scale = " << fmt_double(cfg.target_arch.classifier_scale) << "\n";
  out << "init_seed = " << cfg.target_arch.init_seed << "\n";
  out << "\n[source]\n";
  out << "epochs = " << cfg.source.epochs << "\n";
  out << "lr = " << fmt_double(cfg.source.lr) << "\n";
  out << "momentum = " << fmt_double(cfg.source.momentum) << "\n";
  out << "batch_size = " << cfg.source.batch_size << "\n";
  out << "label_smoothing = " << fmt_double(cfg.source.label_smoothing) << "\n";
  out << "holdout_fraction = " << fmt_double(cfg.source.holdout_fraction) << "\n";
  out << "seed = " << cfg.source.seed << "\n";
  out << "\n[adaptation]\n";
  out << "alpha = " << fmt_double(cfg.adaptation.alpha) << "\n";
  out << "beta = " << fmt_double(cfg.adaptation.beta) << "\n";
  out << "lambda = " << fmt_double(cfg.adaptation.lambda) << "\n";
  out << "tau = " << fmt_double(cfg.adaptation.tau) << "\n";
  out << "top_n = " << cfg.adaptation.top_n << "\n";
  out << "epochs = " << cfg.adaptation.epochs << "\n";
  out << "batch_size = " << cfg.adaptation.batch_size << "\n";
  out << "lr_target = " << fmt_double(cfg.adaptation.lr_target) << "\n";
  out << "lr_prompt = " << fmt_double(cfg.adaptation.lr_prompt) << "\n";
  out << "momentum = " << fmt_double(cfg.adaptation.momentum) << "\n";
  out << "seed = " << cfg.adaptation.seed << "\n";
  out << "symmetrize_joint = " << (cfg.adaptation.symmetrize_joint ? "true" : "false") << "\n";
  out << "record_trajectory = " << (cfg.record_trajectory ? "true" : "false") << "\n";
  out << "\n[evaluation]\n";
  out << "mmd_bandwidth = " << fmt_double(cfg.evaluation.mmd_bandwidth) << "\n";
  out << "entropy_threshold = " << fmt_double(cfg.evaluation.entropy_threshold) << "\n";
  out << "sweep_points = " << cfg.evaluation.sweep_points << "\n";
  return out.str();
}

}  // namespace vildistill
