#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "vildistill/common.hpp"

namespace vildistill {

struct DomainDataset {
  Mat inputs;               // n x input_dim
  std::vector<int> labels;  // n, each in [0, class_count)
  std::string domain_name;
  std::vector<std::string> class_names;

  int size() const { return static_cast<int>(inputs.rows()); }
  int input_dim() const { return static_cast<int>(inputs.cols()); }
  int class_count() const { return static_cast<int>(class_names.size()); }
  void validate() const;  // throws std::invalid_argument on inconsistency
};

/// Parameters of the synthetic domain-shift benchmark. Class latents live
/// in a latent space that doubles as the toy ViL embedding space; each
/// domain observes them through its own affine map.
struct ShiftSpec {
  int class_count = 10;
  int latent_dim = 8;
  int input_dim = 16;
  double prototype_scale = 3.0;    // norm of each class latent
  double rotation_angle = 0.5;     // radians applied to the target map
  double scale_min = 0.7;          // anisotropic latent scaling of the target map
  double scale_max = 1.3;
  double noise_scale = 0.55;       // latent Gaussian noise per sample
  int samples_per_class = 200;
  uint64_t seed = 0;

  void validate() const;
};

struct ShiftPair {
  DomainDataset source;
  DomainDataset target;
  Mat prototypes;  // class_count x latent_dim, the planted class latents
  Mat source_map;  // input_dim x latent_dim
  Mat target_map;  // input_dim x latent_dim (rotated/scaled source map)
};

/// Deterministic in the spec: same spec => bitwise-identical datasets.
ShiftPair generate_shift_pair(const ShiftSpec& spec);

/// Target restricted to the first keep_classes classes; the label space
/// (class_names) is left untouched.
DomainDataset partial_set_split(const DomainDataset& target, int keep_classes);

/// Samples of classes >= known_classes are relabeled to the single
/// unknown id `known_classes`. known_classes == class_count is the
/// identity.
DomainDataset open_set_split(const DomainDataset& target, int known_classes);

/// Maps a file to a feature vector. The built-in implementation reads
/// flat little-endian float64 arrays; image-decoding featurizers can be
/// plugged in behind the same interface.
class Featurizer {
 public:
  virtual ~Featurizer() = default;
  virtual int dim() const = 0;
  virtual Vec features(const std::filesystem::path& file) const = 0;
};

class BinaryVectorFeaturizer final : public Featurizer {
 public:
  explicit BinaryVectorFeaturizer(int dim) : dim_(dim) {}
  int dim() const override { return dim_; }
  Vec features(const std::filesystem::path& file) const override;

 private:
  int dim_;
};

/// Loads a dataset from a manifest of `relative_path<TAB>label` lines
/// rooted at `root`. Duplicate paths, out-of-range labels, missing files,
/// and an empty manifest are errors.
DomainDataset load_image_folder(const std::filesystem::path& root,
                                const std::filesystem::path& manifest,
                                const Featurizer& featurizer,
                                const std::vector<std::string>& class_names,
                                const std::string& domain_name);

/// Dataset export/import in the shared manifest + flat-binary convention.
void export_dataset(const DomainDataset& ds, const std::filesystem::path& dir);
DomainDataset import_dataset(const std::filesystem::path& dir);

}  // namespace vildistill
