#include "vildistill/data.hpp"

#include <Eigen/QR>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include "vildistill/io.hpp"
#include "vildistill/rng.hpp"

namespace vildistill {

void DomainDataset::validate() const {
  if (inputs.rows() != static_cast<Eigen::Index>(labels.size())) {
    throw std::invalid_argument("DomainDataset: inputs/labels length mismatch");
  }
  for (const int y : labels) {
    if (y < 0 || y >= class_count()) {
      throw std::invalid_argument("DomainDataset: label " + std::to_string(y) + " out of range");
    }
  }
}

void ShiftSpec::validate() const {
  if (class_count < 2) throw std::invalid_argument("ShiftSpec: class_count must be >= 2");
  if (latent_dim < 1 || input_dim < 1) throw std::invalid_argument("ShiftSpec: dims must be >= 1");
  if (input_dim < latent_dim) {
    throw std::invalid_argument("ShiftSpec: input_dim must be >= latent_dim");
  }
  if (samples_per_class < 1) {
    throw std::invalid_argument("ShiftSpec: samples_per_class must be >= 1");
  }
  if (prototype_scale <= 0.0) throw std::invalid_argument("ShiftSpec: prototype_scale <= 0");
  if (noise_scale < 0.0) throw std::invalid_argument("ShiftSpec: noise_scale < 0");
  if (scale_min <= 0.0 || scale_max < scale_min) {
    throw std::invalid_argument("ShiftSpec: need 0 < scale_min <= scale_max");
  }
}

namespace {

Mat random_gaussian(int rows, int cols, Rng& rng) {
  Mat m(rows, cols);
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = rng.gaussian();
  }
  return m;
}

/// Orthonormal columns via Householder QR of a Gaussian draw.
Mat random_orthonormal(int rows, int cols, Rng& rng) {
  const Mat g = random_gaussian(rows, cols, rng);
  Eigen::HouseholderQR<Mat> qr(g);
  Mat q = qr.householderQ() * Mat::Identity(rows, cols);
  return q;
}

/// Rotation by `angle` in floor(dim/2) disjoint planes of a random
/// orthonormal basis: R = Q G(angle) Q^T.
Mat plane_rotation(int dim, double angle, Rng& rng) {
  Mat blocks = Mat::Identity(dim, dim);
  const double c = std::cos(angle);
  const double s = std::sin(angle);
  for (int p = 0; p + 1 < dim; p += 2) {
    blocks(p, p) = c;
    blocks(p, p + 1) = -s;
    blocks(p + 1, p) = s;
    blocks(p + 1, p + 1) = c;
  }
  const Mat q = random_orthonormal(dim, dim, rng);
  return q * blocks * q.transpose();
}

std::vector<std::string> default_class_names(int class_count) {
  std::vector<std::string> names;
  names.reserve(static_cast<size_t>(class_count));
  for (int c = 0; c < class_count; ++c) {
    std::ostringstream os;
    os << "class_" << (c < 10 ? "0" : "") << c;
    names.push_back(os.str());
  }
  return names;
}

DomainDataset sample_domain(const ShiftSpec& spec, const Mat& prototypes, const Mat& map,
                            const std::string& name, Rng& rng) {
  const int n = spec.class_count * spec.samples_per_class;
  DomainDataset ds;
  ds.domain_name = name;
  ds.class_names = default_class_names(spec.class_count);
  ds.inputs.resize(n, spec.input_dim);
  ds.labels.resize(static_cast<size_t>(n));
  int row = 0;
  for (int c = 0; c < spec.class_count; ++c) {
    for (int i = 0; i < spec.samples_per_class; ++i) {
      Vec latent = prototypes.row(c).transpose();
      for (Eigen::Index d = 0; d < latent.size(); ++d) {
        latent[d] += spec.noise_scale * rng.gaussian();
      }
      ds.inputs.row(row) = (map * latent).transpose();
      ds.labels[static_cast<size_t>(row)] = c;
      ++row;
    }
  }
  return ds;
}

}  // namespace

ShiftPair generate_shift_pair(const ShiftSpec& spec) {
  spec.validate();
  Rng proto_rng(mix_seed(spec.seed, 0));
  Rng map_rng(mix_seed(spec.seed, 1));
  Rng source_rng(mix_seed(spec.seed, 2));
  Rng target_rng(mix_seed(spec.seed, 3));

  Mat prototypes(spec.class_count, spec.latent_dim);
  for (int c = 0; c < spec.class_count; ++c) {
    Vec direction(spec.latent_dim);
    for (Eigen::Index d = 0; d < direction.size(); ++d) direction[d] = proto_rng.gaussian();
    direction.normalize();
    prototypes.row(c) = (spec.prototype_scale * direction).transpose();
  }

  const Mat source_map = random_orthonormal(spec.input_dim, spec.latent_dim, map_rng);

  // Target map: rotate the source map in input space and scale the latent
  // axes anisotropically.
  Vec scales(spec.latent_dim);
  for (Eigen::Index d = 0; d < scales.size(); ++d) {
    scales[d] = spec.scale_min + (spec.scale_max - spec.scale_min) * map_rng.uniform();
  }
  const Mat rotation = plane_rotation(spec.input_dim, spec.rotation_angle, map_rng);
  const Mat target_map = rotation * source_map * scales.asDiagonal();

  ShiftPair pair;
  pair.prototypes = prototypes;
  pair.source_map = source_map;
  pair.target_map = target_map;
  pair.source = sample_domain(spec, prototypes, source_map, "source", source_rng);
  pair.target = sample_domain(spec, prototypes, target_map, "target", target_rng);
  return pair;
}

DomainDataset partial_set_split(const DomainDataset& target, int keep_classes) {
  if (keep_classes < 1 || keep_classes > target.class_count()) {
    throw std::invalid_argument("partial_set_split: keep_classes out of range");
  }
  DomainDataset out;
  out.domain_name = target.domain_name;
  out.class_names = target.class_names;
  std::vector<int> kept;
  for (int i = 0; i < target.size(); ++i) {
    if (target.labels[static_cast<size_t>(i)] < keep_classes) kept.push_back(i);
  }
  out.inputs.resize(static_cast<Eigen::Index>(kept.size()), target.inputs.cols());
  out.labels.resize(kept.size());
  for (size_t i = 0; i < kept.size(); ++i) {
    out.inputs.row(static_cast<Eigen::Index>(i)) = target.inputs.row(kept[i]);
    out.labels[i] = target.labels[static_cast<size_t>(kept[i])];
  }
  return out;
}

DomainDataset open_set_split(const DomainDataset& target, int known_classes) {
  if (known_classes < 1 || known_classes > target.class_count()) {
    throw std::invalid_argument("open_set_split: known_classes out of range");
  }
  DomainDataset out = target;
  if (known_classes == target.class_count()) return out;
  out.class_names.resize(static_cast<size_t>(known_classes));
  out.class_names.push_back("unknown");
  for (auto& y : out.labels) {
    if (y >= known_classes) y = known_classes;
  }
  return out;
}

Vec BinaryVectorFeaturizer::features(const std::filesystem::path& file) const {
  const auto values = io::read_f64(file, static_cast<size_t>(dim_));
  Vec v(dim_);
  for (int i = 0; i < dim_; ++i) v[i] = values[static_cast<size_t>(i)];
  return v;
}

DomainDataset load_image_folder(const std::filesystem::path& root,
                                const std::filesystem::path& manifest,
                                const Featurizer& featurizer,
                                const std::vector<std::string>& class_names,
                                const std::string& domain_name) {
  std::ifstream in(manifest);
  if (!in) throw MissingArtifact("manifest not found: " + manifest.string());

  std::vector<std::pair<std::string, int>> entries;
  std::set<std::string> seen;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) {
      throw std::invalid_argument(manifest.string() + ":" + std::to_string(line_no) +
                                  ": expected 'path<TAB>label'");
    }
    const std::string path = line.substr(0, tab);
    int label;
    try {
      label = std::stoi(line.substr(tab + 1));
    } catch (const std::exception&) {
      throw std::invalid_argument(manifest.string() + ":" + std::to_string(line_no) +
                                  ": label is not an integer");
    }
    if (label < 0 || label >= static_cast<int>(class_names.size())) {
      throw std::invalid_argument(manifest.string() + ":" + std::to_string(line_no) +
                                  ": label " + std::to_string(label) + " out of range");
    }
    if (!seen.insert(path).second) {
      throw std::invalid_argument(manifest.string() + ":" + std::to_string(line_no) +
                                  ": duplicate path '" + path + "'");
    }
    entries.emplace_back(path, label);
  }
  if (entries.empty()) {
    throw std::invalid_argument(manifest.string() + ": empty manifest yields an empty dataset");
  }

  DomainDataset ds;
  ds.domain_name = domain_name;
  ds.class_names = class_names;
  ds.inputs.resize(static_cast<Eigen::Index>(entries.size()), featurizer.dim());
  ds.labels.resize(entries.size());
  for (size_t i = 0; i < entries.size(); ++i) {
    const auto file = root / entries[i].first;
    if (!std::filesystem::exists(file)) {
      throw MissingArtifact("listed file missing: " + file.string());
    }
    ds.inputs.row(static_cast<Eigen::Index>(i)) = featurizer.features(file).transpose();
    ds.labels[i] = entries[i].second;
  }
  return ds;
}

void export_dataset(const DomainDataset& ds, const std::filesystem::path& dir) {
  ds.validate();
  std::filesystem::create_directories(dir);
  io::Manifest m;
  m["kind"] = "dataset";
  m["format_version"] = "1";
  m["samples"] = std::to_string(ds.size());
  m["input_dim"] = std::to_string(ds.input_dim());
  m["class_count"] = std::to_string(ds.class_count());
  m["domain_name"] = ds.domain_name;
  for (size_t c = 0; c < ds.class_names.size(); ++c) {
    m["class_name_" + std::to_string(c)] = ds.class_names[c];
  }
  io::write_manifest(dir / "manifest.txt", m);
  io::write_matrix(dir / "inputs.bin", ds.inputs);
  std::vector<int64_t> labels(ds.labels.begin(), ds.labels.end());
  io::write_i64(dir / "labels.bin", labels.data(), labels.size());
}

DomainDataset import_dataset(const std::filesystem::path& dir) {
  const auto manifest_path = dir / "manifest.txt";
  const auto m = io::read_manifest(manifest_path);
  if (io::manifest_get(m, "kind", manifest_path) != "dataset") {
    throw MissingArtifact(dir.string() + ": not a dataset directory");
  }
  const auto n = io::manifest_get_int(m, "samples", manifest_path);
  const auto dim = io::manifest_get_int(m, "input_dim", manifest_path);
  const auto class_count = io::manifest_get_int(m, "class_count", manifest_path);
  DomainDataset ds;
  ds.domain_name = io::manifest_get(m, "domain_name", manifest_path);
  for (int64_t c = 0; c < class_count; ++c) {
    ds.class_names.push_back(
        io::manifest_get(m, "class_name_" + std::to_string(c), manifest_path));
  }
  ds.inputs = io::read_matrix(dir / "inputs.bin", n, dim);
  const auto labels = io::read_i64(dir / "labels.bin", static_cast<size_t>(n));
  ds.labels.assign(labels.begin(), labels.end());
  ds.validate();
  return ds;
}

}  // namespace vildistill
