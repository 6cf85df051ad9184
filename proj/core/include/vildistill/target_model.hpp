#pragma once

#include <filesystem>
#include <vector>

#include "vildistill/common.hpp"
#include "vildistill/data.hpp"
#include "vildistill/io.hpp"
#include "vildistill/nn.hpp"

namespace vildistill {

struct TargetModelConfig {
  int input_dim = 16;
  int feature_dim = 32;
  int bottleneck_dim = 16;
  int class_count = 10;
  /// Frozen magnitude of every classifier row. Bottleneck features are
  /// L2-normalized before the classifier, so |logit| <= classifier_scale
  /// by construction; this keeps the product terms of the
  /// category-attention regularizer bounded under training.
  double classifier_scale = 3.0;
  uint64_t init_seed = 0;

  void validate() const;
};

/// The adaptable classifier: MLP feature extractor, bottleneck with batch
/// normalization, and a weight-normalized linear classifier.
class TargetModel {
 public:
  explicit TargetModel(const TargetModelConfig& cfg);

  /// Logits for a batch; caches activations for backward() while in
  /// training mode. Eval mode uses batch-norm running statistics and is
  /// independent of batch composition.
  Mat forward(const Mat& x);
  /// softmax(forward(x), tau=1)
  Mat predict(const Mat& x);

  void backward_from_logits(const Mat& grad_logits);
  void sgd_step(double lr, double momentum);
  void zero_grad();

  void set_training(bool training) { training_ = training; }
  bool training() const { return training_; }

  const TargetModelConfig& config() const { return cfg_; }

  /// Classifier access for inspection and diagnostics.
  nn::WeightNormDense& classifier() { return classifier_; }
  const nn::WeightNormDense& classifier() const { return classifier_; }

  /// Hash over every parameter including batch-norm running statistics;
  /// two models with equal hash behave identically.
  uint64_t parameter_hash() const;

  void save(const std::filesystem::path& dir, const io::Manifest& extra = {}) const;
  static TargetModel load(const std::filesystem::path& dir);

 private:
  TargetModelConfig cfg_;
  nn::Dense fc1_, fc2_;
  nn::Relu relu1_, relu2_;
  nn::Dense bottleneck_;
  nn::BatchNorm1d bn_;
  nn::RowNormalize feature_norm_;
  nn::WeightNormDense classifier_;
  bool training_ = false;
};

/// (1-sigma) * one_hot(y) + sigma / class_count
Vec smooth_labels(int y, int class_count, double sigma);

struct SourcePretrainConfig {
  int epochs = 15;
  double lr = 1e-2;
  double momentum = 0.9;
  int batch_size = 64;
  double label_smoothing = 0.1;
  double holdout_fraction = 0.1;
  uint64_t seed = 0;

  void validate() const;
};

struct PretrainResult {
  TargetModel model;
  double holdout_accuracy = 0.0;
  std::vector<double> epoch_losses;  // mean smoothed cross-entropy per epoch
};

/// Supervised pretraining on the source domain with label smoothing over a
/// seeded 0.9/0.1 train/holdout split. Requires at least two samples per
/// class.
PretrainResult pretrain_source(const DomainDataset& source, const TargetModelConfig& arch,
                               const SourcePretrainConfig& cfg);

}  // namespace vildistill
