#include "vildistill/prediction_bank.hpp"

#include <algorithm>
#include <numeric>
#include <set>
#include <stdexcept>

#include "vildistill/info_losses.hpp"
#include "vildistill/io.hpp"

namespace vildistill {

PredictionBank::PredictionBank(Mat target_preds, Mat vil_preds)
    : target_preds_(std::move(target_preds)), vil_preds_(std::move(vil_preds)) {
  if (target_preds_.rows() != vil_preds_.rows() || target_preds_.cols() != vil_preds_.cols()) {
    throw std::invalid_argument("PredictionBank: table shapes differ");
  }
  if (target_preds_.rows() < 1) throw std::invalid_argument("PredictionBank: empty tables");
  require_prob_rows(target_preds_, "PredictionBank(target)");
  require_prob_rows(vil_preds_, "PredictionBank(vil)");
}

PredictionBank PredictionBank::init(TargetModel& target, const VilBackend& vil,
                                    const PromptContext& prompt, const Mat& inputs) {
  if (inputs.rows() < 1) throw std::invalid_argument("PredictionBank::init: empty dataset");
  const bool was_training = target.training();
  target.set_training(false);
  Mat target_preds = target.predict(inputs);
  target.set_training(was_training);
  Mat vil_preds = vil_predict(vil, prompt, inputs);
  return PredictionBank(std::move(target_preds), std::move(vil_preds));
}

void PredictionBank::update_target(const std::vector<int>& indices, const Mat& preds) {
  if (static_cast<Eigen::Index>(indices.size()) != preds.rows()) {
    throw std::invalid_argument("update_target: index/prediction count mismatch");
  }
  if (preds.cols() != target_preds_.cols()) {
    throw std::invalid_argument("update_target: class count mismatch");
  }
  std::set<int> unique(indices.begin(), indices.end());
  if (unique.size() != indices.size()) {
    throw std::invalid_argument("update_target: duplicate indices");
  }
  for (const int i : indices) {
    if (i < 0 || i >= size()) throw std::out_of_range("update_target: index out of range");
  }
  require_prob_rows(preds, "update_target");
  for (size_t k = 0; k < indices.size(); ++k) {
    target_preds_.row(indices[k]) = preds.row(static_cast<Eigen::Index>(k));
  }
  ++iteration_stamp_;
}

void PredictionBank::update_vil_all(const Mat& preds_all) {
  if (preds_all.rows() != vil_preds_.rows() || preds_all.cols() != vil_preds_.cols()) {
    throw std::invalid_argument("update_vil_all: table shape mismatch");
  }
  require_prob_rows(preds_all, "update_vil_all");
  vil_preds_ = preds_all;
  ++epoch_stamp_;
}

Vec PredictionBank::fuse(int index, double omega) const {
  if (index < 0 || index >= size()) throw std::out_of_range("fuse: index out of range");
  if (omega < 0.0 || omega > 1.0) throw std::invalid_argument("fuse: omega must be in [0, 1]");
  return omega * target_preds_.row(index).transpose() +
         (1.0 - omega) * vil_preds_.row(index).transpose();
}

void PredictionBank::save(const std::filesystem::path& dir) const {
  std::filesystem::create_directories(dir);
  io::Manifest m;
  m["kind"] = "prediction_bank";
  m["format_version"] = "1";
  m["samples"] = std::to_string(size());
  m["class_count"] = std::to_string(class_count());
  m["epoch_stamp"] = std::to_string(epoch_stamp_);
  m["iteration_stamp"] = std::to_string(iteration_stamp_);
  io::write_manifest(dir / "manifest.txt", m);
  io::write_matrix(dir / "target_preds.bin", target_preds_);
  io::write_matrix(dir / "vil_preds.bin", vil_preds_);
}

PredictionBank PredictionBank::load(const std::filesystem::path& dir) {
  const auto manifest_path = dir / "manifest.txt";
  const auto m = io::read_manifest(manifest_path);
  if (io::manifest_get(m, "kind", manifest_path) != "prediction_bank") {
    throw MissingArtifact(dir.string() + ": not a prediction bank");
  }
  const auto n = io::manifest_get_int(m, "samples", manifest_path);
  const auto classes = io::manifest_get_int(m, "class_count", manifest_path);
  PredictionBank bank(io::read_matrix(dir / "target_preds.bin", n, classes),
                      io::read_matrix(dir / "vil_preds.bin", n, classes));
  bank.epoch_stamp_ = static_cast<int>(io::manifest_get_int(m, "epoch_stamp", manifest_path));
  bank.iteration_stamp_ =
      static_cast<int>(io::manifest_get_int(m, "iteration_stamp", manifest_path));
  return bank;
}

double sample_weight(double lambda, Rng& rng) {
  if (lambda <= 0.0) throw std::invalid_argument("sample_weight: lambda must be > 0");
  return std::min(rng.exponential(lambda), 1.0);
}

std::vector<int> most_likely(const Vec& fused, int top_n) {
  const int classes = static_cast<int>(fused.size());
  if (top_n < 1 || top_n >= classes) {
    throw std::invalid_argument("most_likely: need 1 <= N < C");
  }
  std::vector<int> idx(static_cast<size_t>(classes));
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) {
    if (fused[a] != fused[b]) return fused[a] > fused[b];
    return a < b;
  });
  idx.resize(static_cast<size_t>(top_n));
  std::sort(idx.begin(), idx.end());
  return idx;
}

}  // namespace vildistill
